/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/exoskeleton.hpp                                     *
 * -------------------------------------------------------------------------- *
 * Licensed under the Apache License, Version 2.0 (the "License"); you may    *
 * not use this file except in compliance with the License. You may obtain a  *
 * copy of the License at http://www.apache.org/licenses/LICENSE-2.0          *
 *                                                                            *
 * Unless required by applicable law or agreed to in writing, software        *
 * distributed under the License is distributed on an "AS IS" BASIS,          *
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.   *
 * See the License for the specific language governing permissions and        *
 * limitations under the License.                                             *
 * -------------------------------------------------------------------------- */
#ifndef EXOSIM_EXOSKELETON_HPP
#define EXOSIM_EXOSKELETON_HPP

#include <array>

#include "exosim/model.hpp"

namespace exosim {

/// Exoskeleton element on one joint DoF: parallel spring-damper, bounded
/// actuator, and added inertia on the attached body.
struct ExoElement {
    int dof_index = 0;            ///< q̇ slot the torque acts on
    double spring_k = 0.0;        ///< N·m/rad
    double damper_d = 0.0;        ///< N·m·s/rad
    double rest_angle = 0.0;      ///< rad
    double actuator_limit = 0.0;  ///< N·m, peak actuator torque
    double added_mass = 0.0;      ///< kg, at the attached body COM
    double added_inertia = 0.0;   ///< kg·m², isotropic about the attached body COM
};

/// Indices of the six optimizable scalars of an ExoElement.
enum ExoParamSlot {
    kSpringK = 0,
    kDamperD = 1,
    kRestAngle = 2,
    kActuatorLimit = 3,
    kAddedMass = 4,
    kAddedInertia = 5,
    kExoParamCount = 6
};

inline double& exo_param(ExoElement& e, int slot) {
    switch (slot) {
        case kSpringK: return e.spring_k;
        case kDamperD: return e.damper_d;
        case kRestAngle: return e.rest_angle;
        case kActuatorLimit: return e.actuator_limit;
        case kAddedMass: return e.added_mass;
        case kAddedInertia: return e.added_inertia;
        default: throw std::invalid_argument("exo_param: invalid slot");
    }
}

inline double exo_param(const ExoElement& e, int slot) {
    return exo_param(const_cast<ExoElement&>(e), slot);
}

/// Bounds and fixed/free flag for one design parameter.
struct ParamSpec {
    bool free = false;
    double lower = 0.0;
    double upper = 0.0;
};

/// Design space over all elements: six parameter slots per element.
struct ExoDesignSpace {
    std::vector<std::array<ParamSpec, kExoParamCount>> params;
};

/// User body that owns a q̇ slot.
inline int body_of_dq_slot(const MultibodyModel& model, int slot) {
    for (int ub = 0; ub < model.num_bodies(); ++ub)
        for (int s : model.user_joint_dq_slots[ub])
            if (s == slot) return ub;
    return -1;
}

inline void validate_element(const MultibodyModel& model, const ExoElement& e,
                             const std::string& what) {
    if (e.dof_index < 0 || e.dof_index >= model.nv || body_of_dq_slot(model, e.dof_index) < 0)
        throw std::invalid_argument(what + ": invalid dof index");
    for (int slot : {kSpringK, kDamperD, kActuatorLimit, kAddedMass, kAddedInertia})
        if (exo_param(e, slot) < 0.0)
            throw std::invalid_argument(what + ": magnitudes must be nonnegative");
}

/// Device torque on the element's DoF: parallel spring-damper plus a bounded
/// actuator driven by the normalized command u_act.
inline double exo_torque(const ExoElement& e, double q, double qd, double u_act) {
    if (std::abs(u_act) > 1.0)
        throw std::invalid_argument("exo_torque: |u_act| must be <= 1");
    return -e.spring_k * (q - e.rest_angle) - e.damper_d * qd + u_act * e.actuator_limit;
}

/// New model with each element's added mass and isotropic inertia merged
/// into the attached body at its COM. The input model is unchanged.
inline MultibodyModel attach_exo(const MultibodyModel& model,
                                 const std::vector<ExoElement>& elements) {
    MultibodyModel out = model;
    for (size_t i = 0; i < elements.size(); ++i) {
        const auto& e = elements[i];
        validate_element(model, e, "exo element " + std::to_string(i));
        if (e.added_mass == 0.0 && e.added_inertia == 0.0) continue;
        const int ib = model.user_to_internal[body_of_dq_slot(model, e.dof_index)];
        const Vector3d com = model.body_inertia[ib].com;
        out.body_inertia[ib] =
            out.body_inertia[ib] +
            SpatialInertia::from_com_inertia(e.added_mass, com,
                                             e.added_inertia * Matrix3d::Identity());
    }
    return out;
}

/// Free design parameters packed into one vector with bounds.
struct DesignVector {
    VectorXd values;
    VectorXd lower;
    VectorXd upper;
};

inline void validate_design_space(const ExoDesignSpace& space,
                                  const std::vector<ExoElement>& elements) {
    if (space.params.size() != elements.size())
        throw std::invalid_argument("design space: one parameter block per element required");
    for (const auto& block : space.params)
        for (const auto& p : block) {
            if (!p.free) continue;
            if (!(p.lower <= p.upper))
                throw std::invalid_argument("design space: lower bound exceeds upper");
            if (!std::isfinite(p.lower) || !std::isfinite(p.upper))
                throw std::invalid_argument("design space: free parameters need finite bounds");
        }
}

/// Packs the free parameters of all elements, element-major then slot-major.
/// Values are the current element values clamped into the bounds.
inline DesignVector pack_design_parameters(const ExoDesignSpace& space,
                                           const std::vector<ExoElement>& elements) {
    validate_design_space(space, elements);
    std::vector<double> vals, lows, ups;
    for (size_t i = 0; i < elements.size(); ++i)
        for (int slot = 0; slot < kExoParamCount; ++slot) {
            const ParamSpec& ps = space.params[i][slot];
            if (!ps.free) continue;
            vals.push_back(std::clamp(exo_param(elements[i], slot), ps.lower, ps.upper));
            lows.push_back(ps.lower);
            ups.push_back(ps.upper);
        }
    DesignVector d;
    d.values = Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    d.lower = Eigen::Map<VectorXd>(lows.data(), static_cast<Eigen::Index>(lows.size()));
    d.upper = Eigen::Map<VectorXd>(ups.data(), static_cast<Eigen::Index>(ups.size()));
    return d;
}

/// Writes a packed parameter vector back into copies of the elements.
inline std::vector<ExoElement> unpack_design_parameters(const ExoDesignSpace& space,
                                                        std::vector<ExoElement> elements,
                                                        const VectorXd& p) {
    validate_design_space(space, elements);
    int idx = 0;
    for (size_t i = 0; i < elements.size(); ++i)
        for (int slot = 0; slot < kExoParamCount; ++slot) {
            if (!space.params[i][slot].free) continue;
            if (idx >= p.size())
                throw std::invalid_argument("design vector shorter than free parameter count");
            exo_param(elements[i], slot) = p[idx++];
        }
    if (idx != p.size())
        throw std::invalid_argument("design vector longer than free parameter count");
    return elements;
}

}  // namespace exosim

#endif  // EXOSIM_EXOSKELETON_HPP
