/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/contact.hpp                                         *
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
#ifndef EXOSIM_CONTACT_HPP
#define EXOSIM_CONTACT_HPP

#include "exosim/dynamics.hpp"

namespace exosim {

/// Holonomic point constraint: the body-fixed point may not accelerate along
/// the given world directions.
struct ContactPoint {
    int body = 0;
    Vector3d point = Vector3d::Zero();        ///< body frame, m
    std::vector<Vector3d> directions;         ///< world frame, unit, 1-3 of them
};

/// Spring-damper ground or interface model acting at a body-fixed point.
struct CompliantContact {
    int body = 0;
    Vector3d point = Vector3d::Zero();        ///< body frame, m
    double stiffness = 0.0;                   ///< N/m
    double damping = 0.0;                     ///< N·s/m
    Vector3d rest_point = Vector3d::Zero();   ///< world frame, m
};

inline void validate_contact(const MultibodyModel& model, const ContactPoint& cp) {
    if (cp.body < 0 || cp.body >= model.num_bodies())
        throw std::invalid_argument("contact: invalid body index");
    const int nd = static_cast<int>(cp.directions.size());
    if (nd < 1 || nd > 3)
        throw std::invalid_argument("contact: needs 1 to 3 constrained directions");
    MatrixXd D(3, nd);
    for (int i = 0; i < nd; ++i) {
        if (std::abs(cp.directions[i].norm() - 1.0) > 1e-10)
            throw std::invalid_argument("contact: directions must be unit length");
        D.col(i) = cp.directions[i];
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
    qr.setThreshold(1e-8);
    if (qr.rank() < nd)
        throw std::invalid_argument("contact: directions must be linearly independent");
}

inline int contact_rows(const std::vector<ContactPoint>& contacts) {
    int rows = 0;
    for (const auto& c : contacts) rows += static_cast<int>(c.directions.size());
    return rows;
}

/// Stacked constraint Jacobian: one row per constrained direction, each the
/// direction-projected point Jacobian.
inline MatrixXd contact_jacobian(const MultibodyModel& model, const VectorXd& q,
                                 const std::vector<ContactPoint>& contacts) {
    MatrixXd J(contact_rows(contacts), model.nv);
    int row = 0;
    for (const auto& c : contacts) {
        const MatrixXd Jp = point_jacobian(model, q, c.body, c.point);
        for (const auto& d : c.directions) J.row(row++) = d.transpose() * Jp;
    }
    return J;
}

/// World positions of the constrained points projected on their directions
/// (useful for touchdown events and drift checks).
inline VectorXd contact_positions(const MultibodyModel& model, const VectorXd& q,
                                  const std::vector<ContactPoint>& contacts) {
    VectorXd p(contact_rows(contacts));
    int row = 0;
    for (const auto& c : contacts) {
        const Vector3d pw = point_position(model, q, c.body, c.point);
        for (const auto& d : c.directions) p[row++] = d.dot(pw);
    }
    return p;
}

/// J̇·q̇ by central finite differences of J along the state's own motion.
inline VectorXd contact_jdot_qdot(const MultibodyModel& model, const VectorXd& q,
                                  const VectorXd& v,
                                  const std::vector<ContactPoint>& contacts,
                                  double step = 1e-6) {
    const VectorXd qp = integrate_positions(model, q, v, step);
    const VectorXd qm = integrate_positions(model, q, v, -step);
    const MatrixXd dJ =
        (contact_jacobian(model, qp, contacts) - contact_jacobian(model, qm, contacts)) /
        (2.0 * step);
    return dJ * v;
}

namespace detail {

inline void check_contact_rank(const MatrixXd& J) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(J.transpose());
    qr.setThreshold(1e-8);
    if (qr.rank() < J.rows())
        throw std::invalid_argument("rank-deficient constraint set");
}

}  // namespace detail

struct ConstrainedDynamics {
    VectorXd qdd;     ///< generalized accelerations
    VectorXd lambda;  ///< contact force per constrained direction, N
};

/// Forward dynamics subject to rigid contacts: solves the KKT system
/// [M Jᵀ; J 0]·[q̈; −λ] = [τ − bias; −J̇q̇].
inline ConstrainedDynamics constrained_forward_dynamics(
    const MultibodyModel& model, const VectorXd& q, const VectorXd& v, const VectorXd& tau,
    const std::vector<ContactPoint>& contacts, const ExternalForces& fext = {}) {
    if (contacts.empty()) return {aba(model, q, v, tau, fext), VectorXd()};
    for (const auto& c : contacts) validate_contact(model, c);

    const MatrixXd J = contact_jacobian(model, q, contacts);
    detail::check_contact_rank(J);
    const int m = static_cast<int>(J.rows());

    const MatrixXd M = crba(model, q);
    const VectorXd bias = nonlinear_effects(model, q, v, fext);
    const VectorXd jdqd = contact_jdot_qdot(model, q, v, contacts);

    MatrixXd K = MatrixXd::Zero(model.nv + m, model.nv + m);
    K.topLeftCorner(model.nv, model.nv) = M;
    K.topRightCorner(model.nv, m) = J.transpose();
    K.bottomLeftCorner(m, model.nv) = J;
    VectorXd rhs(model.nv + m);
    rhs.head(model.nv) = tau - bias;
    rhs.tail(m) = -jdqd;

    Eigen::FullPivLU<MatrixXd> lu(K);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) throw std::invalid_argument("singular KKT matrix");
    const VectorXd sol = lu.solve(rhs);
    return {sol.head(model.nv), -sol.tail(m)};
}

/// Perfectly inelastic impact: projects q̇⁻ onto the constraint null space
/// through the mass metric. Kinetic energy cannot increase.
inline VectorXd impact_map(const MultibodyModel& model, const VectorXd& q,
                           const VectorXd& v_minus,
                           const std::vector<ContactPoint>& new_contacts) {
    if (new_contacts.empty()) return v_minus;
    for (const auto& c : new_contacts) validate_contact(model, c);
    const MatrixXd J = contact_jacobian(model, q, new_contacts);
    detail::check_contact_rank(J);
    const MatrixXd M = crba(model, q);
    const Eigen::LDLT<MatrixXd> Mldlt(M);
    const MatrixXd MinvJt = Mldlt.solve(J.transpose());
    const MatrixXd G = J * MinvJt;  // constraint-space inverse inertia
    const VectorXd impulse = G.ldlt().solve(J * v_minus);
    return v_minus - MinvJt * impulse;
}

/// Spring-damper force on the body at the contact point, world frame.
inline Vector3d compliant_contact_force(const MultibodyModel& model, const VectorXd& q,
                                        const VectorXd& v, const CompliantContact& contact) {
    if (contact.body < 0 || contact.body >= model.num_bodies())
        throw std::invalid_argument("contact: invalid body index");
    if (contact.stiffness < 0.0 || contact.damping < 0.0)
        throw std::invalid_argument("contact: stiffness and damping must be nonnegative");
    const Vector3d p = point_position(model, q, contact.body, contact.point);
    const Vector3d pd = point_velocity(model, q, v, contact.body, contact.point);
    return -contact.stiffness * (p - contact.rest_point) - contact.damping * pd;
}

/// Wrench (world axes, at the body origin) equivalent to a world force
/// applied at a body-fixed point.
inline SpatialForce external_force_at_point(const MultibodyModel& model, const VectorXd& q,
                                            int body, const Vector3d& point_body,
                                            const Vector3d& f_world) {
    const auto poses = forward_kinematics(model, q);
    const Vector3d p_world = poses[body].rotation * point_body + poses[body].position;
    const Vector3d lever = p_world - poses[body].position;
    return {lever.cross(f_world), f_world};
}

/// Accumulates all compliant contact forces into per-body external wrenches.
inline void add_compliant_forces(const MultibodyModel& model, const VectorXd& q,
                                 const VectorXd& v,
                                 const std::vector<CompliantContact>& contacts,
                                 ExternalForces& fext) {
    if (contacts.empty()) return;
    if (fext.empty()) fext.assign(model.num_bodies(), SpatialForce::Zero());
    for (const auto& c : contacts) {
        const Vector3d f = compliant_contact_force(model, q, v, c);
        fext[c.body] += external_force_at_point(model, q, c.body, c.point, f);
    }
}

/// Converts per-direction contact force magnitudes into external wrenches
/// (used by the force/constraint duality check and CSV reporting).
inline void add_contact_wrenches(const MultibodyModel& model, const VectorXd& q,
                                 const std::vector<ContactPoint>& contacts,
                                 const VectorXd& lambda, ExternalForces& fext) {
    if (fext.empty()) fext.assign(model.num_bodies(), SpatialForce::Zero());
    int row = 0;
    for (const auto& c : contacts) {
        Vector3d f = Vector3d::Zero();
        for (const auto& d : c.directions) f += lambda[row++] * d;
        fext[c.body] += external_force_at_point(model, q, c.body, c.point, f);
    }
}

}  // namespace exosim

#endif  // EXOSIM_CONTACT_HPP
