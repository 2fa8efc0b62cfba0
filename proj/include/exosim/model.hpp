/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/model.hpp                                           *
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
#ifndef EXOSIM_MODEL_HPP
#define EXOSIM_MODEL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "exosim/spatial.hpp"

namespace exosim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class JointKind { Revolute1, Revolute2, Revolute3, Floating };

inline int joint_dofs(JointKind k) {
    switch (k) {
        case JointKind::Revolute1: return 1;
        case JointKind::Revolute2: return 2;
        case JointKind::Revolute3: return 3;
        case JointKind::Floating: return 6;
    }
    return 0;
}

/// Joint connecting a body to its parent. `parent` is the index of a
/// previously declared body, or -1 for the fixed world.
struct JointSpec {
    JointKind kind = JointKind::Revolute1;
    std::vector<Vector3d> axes;  // one unit axis per rotational DoF
    int parent = -1;
    SpatialTransform frame_offset = SpatialTransform::Identity();
};

struct BodySpec {
    std::string name;
    SpatialInertia inertia;
    JointSpec joint;
};

/// One single-DoF (or floating) joint of the expanded tree. Multi-DoF
/// rotational joints are expanded into chains of these through massless
/// intermediate frames.
struct InternalJoint {
    int parent = -1;   // internal body index, -1 = world
    bool floating = false;
    Vector3d axis = Vector3d::UnitZ();
    SpatialTransform X_tree = SpatialTransform::Identity();
    int q_offset = 0;    // slot in q  (floating uses 7: tx ty tz qx qy qz qw)
    int dq_offset = 0;   // slot in q̇ (floating uses 6: wx wy wz vx vy vz, body frame)
    int user_body = -1;  // user body this internal joint was expanded from
};

/// Immutable articulated model. Bodies are indexed internally (including
/// massless intermediate frames); user bodies map onto the chain-end
/// internal body that carries their inertia.
class MultibodyModel {
public:
    std::vector<SpatialInertia> body_inertia;   // per internal body
    std::vector<InternalJoint> joints;          // joints[i] attaches internal body i
    std::vector<int> user_to_internal;          // user body -> internal body
    std::vector<std::string> body_names;        // per user body
    std::vector<std::vector<int>> user_joint_dq_slots;  // per user body: its joint's q̇ slots
    Vector3d gravity = Vector3d(0.0, 0.0, -9.81);
    int nq = 0;          // length of the position vector
    int nv = 0;          // length of the velocity vector (= dof_total)
    bool has_floating_base = false;

    int dof_total() const { return nv; }
    int num_bodies() const { return static_cast<int>(user_to_internal.size()); }
    int num_internal_bodies() const { return static_cast<int>(body_inertia.size()); }

    int body_index(const std::string& name) const {
        for (int i = 0; i < num_bodies(); ++i)
            if (body_names[i] == name) return i;
        throw std::invalid_argument("unknown body name '" + name + "'");
    }

    void check_q(const VectorXd& q) const {
        if (q.size() != nq)
            throw std::invalid_argument("dimension mismatch: q has " + std::to_string(q.size()) +
                                        " entries, model expects " + std::to_string(nq));
        for (const auto& j : joints) {
            if (!j.floating) continue;
            const double n = q.segment<4>(j.q_offset + 3).norm();
            if (std::abs(n - 1.0) > 1e-8)
                throw std::invalid_argument("unnormalized base quaternion (|q| = " +
                                            std::to_string(n) + ")");
        }
    }

    void check_v(const VectorXd& v, const char* what = "qdot") const {
        if (v.size() != nv)
            throw std::invalid_argument(std::string("dimension mismatch: ") + what + " has " +
                                        std::to_string(v.size()) + " entries, model expects " +
                                        std::to_string(nv));
    }

    /// Neutral configuration: zero angles, identity base pose.
    VectorXd neutral_q() const {
        VectorXd q = VectorXd::Zero(nq);
        for (const auto& j : joints)
            if (j.floating) q[j.q_offset + 6] = 1.0;  // quaternion w
        return q;
    }
};

namespace detail {

inline void validate_axes(const JointSpec& joint, int body_index) {
    const int ndof = joint_dofs(joint.kind);
    if (joint.kind == JointKind::Floating) {
        if (!joint.axes.empty())
            throw std::invalid_argument("body " + std::to_string(body_index) +
                                        ": floating joint takes no axes");
        return;
    }
    if (static_cast<int>(joint.axes.size()) != ndof)
        throw std::invalid_argument("body " + std::to_string(body_index) + ": joint needs " +
                                    std::to_string(ndof) + " axes, got " +
                                    std::to_string(joint.axes.size()));
    for (const auto& a : joint.axes)
        if (std::abs(a.norm() - 1.0) > 1e-10)
            throw std::invalid_argument("body " + std::to_string(body_index) +
                                        ": non-unit joint axis");
    for (size_t i = 0; i < joint.axes.size(); ++i)
        for (size_t k = i + 1; k < joint.axes.size(); ++k)
            if ((joint.axes[i] - joint.axes[k]).norm() < 1e-10 ||
                (joint.axes[i] + joint.axes[k]).norm() < 1e-10)
                throw std::invalid_argument("body " + std::to_string(body_index) +
                                            ": joint axes not pairwise distinct");
}

inline void validate_inertia(const SpatialInertia& si, int body_index) {
    if (!(si.mass > 0.0))
        throw std::invalid_argument("body " + std::to_string(body_index) + ": nonpositive mass");
    if ((si.inertia_origin - si.inertia_origin.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("body " + std::to_string(body_index) +
                                    ": rotational inertia not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(si.inertia_origin);
    if (es.eigenvalues().minCoeff() < -1e-12)
        throw std::invalid_argument("body " + std::to_string(body_index) +
                                    ": rotational inertia not positive semidefinite");
}

}  // namespace detail

/// Builds and validates a model from body+joint specs. Specs must reference
/// only previously declared parents (this rules out cycles).
inline MultibodyModel build_model(const std::vector<BodySpec>& bodies,
                                  const Vector3d& gravity = Vector3d(0.0, 0.0, -9.81)) {
    MultibodyModel m;
    m.gravity = gravity;
    for (int ub = 0; ub < static_cast<int>(bodies.size()); ++ub) {
        const BodySpec& spec = bodies[ub];
        if (spec.joint.parent >= ub || spec.joint.parent < -1)
            throw std::invalid_argument("body " + std::to_string(ub) +
                                        ": cycle in parent graph (parent must be a previously "
                                        "declared body)");
        detail::validate_axes(spec.joint, ub);
        detail::validate_inertia(spec.inertia, ub);
        if (spec.joint.kind == JointKind::Floating && spec.joint.parent != -1)
            throw std::invalid_argument("body " + std::to_string(ub) +
                                        ": floating joint must attach to the world");

        const int parent_internal =
            spec.joint.parent < 0 ? -1 : m.user_to_internal[spec.joint.parent];
        std::vector<int> dq_slots;
        if (spec.joint.kind == JointKind::Floating) {
            InternalJoint j;
            j.parent = parent_internal;
            j.floating = true;
            j.X_tree = spec.joint.frame_offset;
            j.q_offset = m.nq;
            j.dq_offset = m.nv;
            j.user_body = ub;
            m.nq += 7;
            for (int k = 0; k < 6; ++k) dq_slots.push_back(m.nv + k);
            m.nv += 6;
            m.joints.push_back(j);
            m.body_inertia.push_back(spec.inertia);
            m.has_floating_base = true;
        } else {
            const int ndof = joint_dofs(spec.joint.kind);
            int parent = parent_internal;
            for (int k = 0; k < ndof; ++k) {
                InternalJoint j;
                j.parent = parent;
                j.axis = spec.joint.axes[k];
                j.X_tree = (k == 0) ? spec.joint.frame_offset : SpatialTransform::Identity();
                j.q_offset = m.nq;
                j.dq_offset = m.nv;
                // only the chain's final link carries the user body (and so
                // receives external forces exactly once)
                j.user_body = (k == ndof - 1) ? ub : -1;
                dq_slots.push_back(m.nv);
                m.nq += 1;
                m.nv += 1;
                m.joints.push_back(j);
                // intermediate frames of a multi-DoF joint are massless
                m.body_inertia.push_back(k == ndof - 1 ? spec.inertia : SpatialInertia::Zero());
                parent = static_cast<int>(m.joints.size()) - 1;
            }
        }
        m.user_to_internal.push_back(static_cast<int>(m.joints.size()) - 1);
        m.body_names.push_back(spec.name.empty() ? "body" + std::to_string(ub) : spec.name);
        m.user_joint_dq_slots.push_back(dq_slots);
    }
    return m;
}

/// Joint transform (parent frame -> body frame) and velocity across the joint.
inline SpatialTransform joint_transform(const InternalJoint& j, const VectorXd& q) {
    if (j.floating) {
        const Eigen::Quaterniond quat(q[j.q_offset + 6], q[j.q_offset + 3], q[j.q_offset + 4],
                                      q[j.q_offset + 5]);
        // quat rotates body coordinates into world coordinates
        return SpatialTransform(quat.toRotationMatrix().transpose(),
                                q.segment<3>(j.q_offset)) *
               j.X_tree;
    }
    const Matrix3d E = Eigen::AngleAxisd(q[j.q_offset], j.axis).toRotationMatrix().transpose();
    return SpatialTransform(E, Vector3d::Zero()) * j.X_tree;
}

inline SpatialMotion joint_velocity(const InternalJoint& j, const VectorXd& v) {
    if (j.floating) return {v.segment<3>(j.dq_offset), v.segment<3>(j.dq_offset + 3)};
    return {j.axis * v[j.dq_offset], Vector3d::Zero()};
}

/// d(position)/dt as a vector in q-space: joint rates for revolute slots,
/// world-frame translation rate and quaternion rate for a floating base.
inline VectorXd position_derivative(const MultibodyModel& model, const VectorXd& q,
                                    const VectorXd& v) {
    model.check_q(q);
    model.check_v(v);
    VectorXd dq = VectorXd::Zero(model.nq);
    for (const auto& j : model.joints) {
        if (!j.floating) {
            dq[j.q_offset] = v[j.dq_offset];
            continue;
        }
        const Eigen::Quaterniond quat(q[j.q_offset + 6], q[j.q_offset + 3], q[j.q_offset + 4],
                                      q[j.q_offset + 5]);
        const Vector3d omega_body = v.segment<3>(j.dq_offset);
        const Vector3d v_body = v.segment<3>(j.dq_offset + 3);
        dq.segment<3>(j.q_offset) = quat.toRotationMatrix() * v_body;
        const Eigen::Quaterniond omega_quat(0.0, omega_body.x(), omega_body.y(), omega_body.z());
        const Eigen::Quaterniond qdot = quat * omega_quat;  // body-frame rates multiply right
        dq[j.q_offset + 3] = 0.5 * qdot.x();
        dq[j.q_offset + 4] = 0.5 * qdot.y();
        dq[j.q_offset + 5] = 0.5 * qdot.z();
        dq[j.q_offset + 6] = 0.5 * qdot.w();
    }
    return dq;
}

/// Advances positions by h along velocity v, staying on the quaternion
/// manifold for floating joints (exact exponential for constant body rates).
inline VectorXd integrate_positions(const MultibodyModel& model, const VectorXd& q,
                                    const VectorXd& v, double h) {
    model.check_q(q);
    model.check_v(v);
    VectorXd out = q;
    for (const auto& j : model.joints) {
        if (!j.floating) {
            out[j.q_offset] += h * v[j.dq_offset];
            continue;
        }
        const Eigen::Quaterniond quat(q[j.q_offset + 6], q[j.q_offset + 3], q[j.q_offset + 4],
                                      q[j.q_offset + 5]);
        const Vector3d omega_body = v.segment<3>(j.dq_offset);
        const Vector3d v_body = v.segment<3>(j.dq_offset + 3);
        out.segment<3>(j.q_offset) += h * (quat.toRotationMatrix() * v_body);
        const double rate = omega_body.norm();
        Eigen::Quaterniond delta = Eigen::Quaterniond::Identity();
        if (rate > 0.0)
            delta = Eigen::Quaterniond(Eigen::AngleAxisd(rate * h, omega_body / rate));
        const Eigen::Quaterniond qn = (quat * delta).normalized();
        out[j.q_offset + 3] = qn.x();
        out[j.q_offset + 4] = qn.y();
        out[j.q_offset + 5] = qn.z();
        out[j.q_offset + 6] = qn.w();
    }
    return out;
}

/// Renormalizes floating-base quaternion slots in place.
inline void normalize_configuration(const MultibodyModel& model, VectorXd& q) {
    for (const auto& j : model.joints) {
        if (!j.floating) continue;
        const double n = q.segment<4>(j.q_offset + 3).norm();
        if (n > 0.0) q.segment<4>(j.q_offset + 3) /= n;
    }
}

}  // namespace exosim

#endif  // EXOSIM_MODEL_HPP
