/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/dynamics.hpp                                        *
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
#ifndef EXOSIM_DYNAMICS_HPP
#define EXOSIM_DYNAMICS_HPP

#include "exosim/kinematics.hpp"

namespace exosim {

/// External wrenches: one per user body, expressed in world axes and acting
/// at the body origin. angular = torque, linear = force.
using ExternalForces = std::vector<SpatialForce>;

namespace detail {

/// Rotates a world-axes wrench at the body origin into body coordinates.
inline SpatialForce external_in_body(const SpatialTransform& X0, const SpatialForce& f_world) {
    return {X0.rotation * f_world.angular, X0.rotation * f_world.linear};
}

/// Motion subspace of internal joint j as a 6 x ndof matrix in body coords.
inline Eigen::Matrix<double, 6, Eigen::Dynamic> joint_subspace(const InternalJoint& j) {
    if (j.floating) return Matrix6d::Identity();
    Eigen::Matrix<double, 6, 1> s;
    s << j.axis, Vector3d::Zero();
    return s;
}

struct KinematicsCache {
    std::vector<SpatialTransform> X_parent;  ///< parent->body
    std::vector<SpatialTransform> X0;        ///< world->body
    std::vector<SpatialMotion> vel;          ///< body velocity in body coords
};

inline KinematicsCache velocity_pass(const MultibodyModel& model, const VectorXd& q,
                                     const VectorXd& v) {
    model.check_q(q);
    model.check_v(v);
    const int nb = model.num_internal_bodies();
    KinematicsCache cache;
    cache.X_parent.resize(nb);
    cache.X0.resize(nb);
    cache.vel.resize(nb);
    for (int i = 0; i < nb; ++i) {
        const auto& j = model.joints[i];
        cache.X_parent[i] = joint_transform(j, q);
        cache.X0[i] =
            (j.parent < 0) ? cache.X_parent[i] : cache.X_parent[i] * cache.X0[j.parent];
        SpatialMotion vi = joint_velocity(j, v);
        if (j.parent >= 0) vi = cache.X_parent[i].apply(cache.vel[j.parent]) + vi;
        cache.vel[i] = vi;
    }
    return cache;
}

}  // namespace detail

/// Inverse dynamics (recursive Newton-Euler): the generalized forces that
/// produce acceleration `a` at state (q, v) under the given external wrenches.
inline VectorXd rnea(const MultibodyModel& model, const VectorXd& q, const VectorXd& v,
                     const VectorXd& a, const ExternalForces& fext = {}) {
    model.check_v(a);
    if (!fext.empty() && static_cast<int>(fext.size()) != model.num_bodies())
        throw std::invalid_argument("rnea: external force count must match body count");
    const int nb = model.num_internal_bodies();
    const auto cache = detail::velocity_pass(model, q, v);

    // Gravity enters as a fictitious base acceleration of -g.
    std::vector<SpatialMotion> acc(nb);
    std::vector<SpatialForce> force(nb);
    const SpatialMotion a_base(Vector3d::Zero(), -model.gravity);
    for (int i = 0; i < nb; ++i) {
        const auto& j = model.joints[i];
        const SpatialMotion a_parent =
            (j.parent < 0) ? cache.X_parent[i].apply(a_base)
                           : cache.X_parent[i].apply(acc[j.parent]);
        const SpatialMotion vj = joint_velocity(j, v);
        SpatialMotion aj;
        if (j.floating) {
            aj = SpatialMotion(a.segment<3>(j.dq_offset), a.segment<3>(j.dq_offset + 3));
        } else {
            aj = SpatialMotion(j.axis * a[j.dq_offset], Vector3d::Zero());
        }
        acc[i] = a_parent + aj + cross(cache.vel[i], vj);
        force[i] = model.body_inertia[i].apply(acc[i]) +
                   cross_force(cache.vel[i], model.body_inertia[i].apply(cache.vel[i]));
        if (!fext.empty() && j.user_body >= 0)
            force[i] = force[i] - detail::external_in_body(cache.X0[i], fext[j.user_body]);
    }

    VectorXd tau = VectorXd::Zero(model.nv);
    for (int i = nb - 1; i >= 0; --i) {
        const auto& j = model.joints[i];
        if (j.floating) {
            tau.segment<6>(j.dq_offset) = force[i].vec();
        } else {
            tau[j.dq_offset] = j.axis.dot(force[i].angular);
        }
        if (j.parent >= 0)
            force[j.parent] = force[j.parent] + cache.X_parent[i].apply_transpose(force[i]);
    }
    return tau;
}

/// Joint-space mass matrix via the composite rigid body algorithm.
inline MatrixXd crba(const MultibodyModel& model, const VectorXd& q) {
    model.check_q(q);
    const int nb = model.num_internal_bodies();
    std::vector<SpatialTransform> X_parent(nb);
    std::vector<Matrix6d> Ic(nb);
    for (int i = 0; i < nb; ++i) {
        X_parent[i] = joint_transform(model.joints[i], q);
        Ic[i] = model.body_inertia[i].matrix();
    }

    MatrixXd M = MatrixXd::Zero(model.nv, model.nv);
    for (int i = nb - 1; i >= 0; --i) {
        const auto& j = model.joints[i];
        if (j.parent >= 0) {
            const Matrix6d X6 = X_parent[i].motion_matrix();
            Ic[j.parent] += X6.transpose() * Ic[i] * X6;
        }
        const auto S_i = detail::joint_subspace(j);
        const int nd_i = static_cast<int>(S_i.cols());
        Eigen::Matrix<double, 6, Eigen::Dynamic> F = Ic[i] * S_i;
        M.block(j.dq_offset, j.dq_offset, nd_i, nd_i) = S_i.transpose() * F;
        int k = i;
        while (model.joints[k].parent >= 0) {
            F = X_parent[k].motion_matrix().transpose() * F;
            k = model.joints[k].parent;
            const auto& jk = model.joints[k];
            const auto S_k = detail::joint_subspace(jk);
            const int nd_k = static_cast<int>(S_k.cols());
            M.block(j.dq_offset, jk.dq_offset, nd_i, nd_k) = F.transpose() * S_k;
            M.block(jk.dq_offset, j.dq_offset, nd_k, nd_i) =
                M.block(j.dq_offset, jk.dq_offset, nd_i, nd_k).transpose();
        }
    }
    return M;
}

/// Coriolis, centrifugal, and gravity terms: rnea with zero acceleration.
inline VectorXd nonlinear_effects(const MultibodyModel& model, const VectorXd& q,
                                  const VectorXd& v, const ExternalForces& fext = {}) {
    return rnea(model, q, v, VectorXd::Zero(model.nv), fext);
}

/// Forward dynamics via the articulated body algorithm.
inline VectorXd aba(const MultibodyModel& model, const VectorXd& q, const VectorXd& v,
                    const VectorXd& tau, const ExternalForces& fext = {}) {
    model.check_v(tau);
    if (!fext.empty() && static_cast<int>(fext.size()) != model.num_bodies())
        throw std::invalid_argument("aba: external force count must match body count");
    const int nb = model.num_internal_bodies();
    const auto cache = detail::velocity_pass(model, q, v);

    std::vector<SpatialMotion> bias_vel(nb);  // velocity-product acceleration
    std::vector<Matrix6d> IA(nb);
    std::vector<Vector6d> pA(nb);
    for (int i = 0; i < nb; ++i) {
        const auto& j = model.joints[i];
        bias_vel[i] = cross(cache.vel[i], joint_velocity(j, v));
        IA[i] = model.body_inertia[i].matrix();
        pA[i] = cross_force(cache.vel[i], model.body_inertia[i].apply(cache.vel[i])).vec();
        if (!fext.empty() && j.user_body >= 0)
            pA[i] -= detail::external_in_body(cache.X0[i], fext[j.user_body]).vec();
    }

    std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> U(nb);
    std::vector<Eigen::LDLT<MatrixXd>> D(nb);
    std::vector<VectorXd> u(nb);
    for (int i = nb - 1; i >= 0; --i) {
        const auto& j = model.joints[i];
        const auto S_i = detail::joint_subspace(j);
        const int nd = static_cast<int>(S_i.cols());
        U[i] = IA[i] * S_i;
        const MatrixXd Di = S_i.transpose() * U[i];
        D[i].compute(Di);
        if (D[i].info() != Eigen::Success || (Di.diagonal().array().abs() < 1e-12).any())
            throw std::invalid_argument("aba: degenerate joint-space inertia");
        VectorXd tau_i(nd);
        if (j.floating)
            tau_i = tau.segment<6>(j.dq_offset);
        else
            tau_i[0] = tau[j.dq_offset];
        u[i] = tau_i - S_i.transpose() * pA[i];
        if (j.parent >= 0) {
            const Matrix6d Ia = IA[i] - U[i] * D[i].solve(U[i].transpose());
            const Vector6d pa =
                pA[i] + Ia * bias_vel[i].vec() + U[i] * D[i].solve(u[i]);
            const Matrix6d X6 = cache.X_parent[i].motion_matrix();
            IA[j.parent] += X6.transpose() * Ia * X6;
            pA[j.parent] += X6.transpose() * pa;
        }
    }

    const SpatialMotion a_base(Vector3d::Zero(), -model.gravity);
    std::vector<SpatialMotion> acc(nb);
    VectorXd qdd = VectorXd::Zero(model.nv);
    for (int i = 0; i < nb; ++i) {
        const auto& j = model.joints[i];
        const SpatialMotion a_parent =
            (j.parent < 0) ? cache.X_parent[i].apply(a_base)
                           : cache.X_parent[i].apply(acc[j.parent]);
        const SpatialMotion a_prime = a_parent + bias_vel[i];
        const VectorXd qdd_i = D[i].solve(u[i] - U[i].transpose() * a_prime.vec());
        if (j.floating) {
            qdd.segment<6>(j.dq_offset) = qdd_i;
            acc[i] = a_prime + SpatialMotion::from_vec(qdd_i);
        } else {
            qdd[j.dq_offset] = qdd_i[0];
            acc[i] = a_prime + SpatialMotion(j.axis * qdd_i[0], Vector3d::Zero());
        }
    }
    return qdd;
}

/// Kinetic plus gravitational potential energy of the full system.
inline double total_energy(const MultibodyModel& model, const VectorXd& q, const VectorXd& v) {
    const auto cache = detail::velocity_pass(model, q, v);
    double kinetic = 0.0;
    double potential = 0.0;
    for (int i = 0; i < model.num_internal_bodies(); ++i) {
        const auto& I = model.body_inertia[i];
        kinetic += 0.5 * dot(cache.vel[i], I.apply(cache.vel[i]));
        if (I.mass > 0.0) {
            const BodyPose pose = pose_from_transform(cache.X0[i]);
            const Vector3d com_world = pose.rotation * I.com + pose.position;
            potential -= I.mass * model.gravity.dot(com_world);
        }
    }
    return kinetic + potential;
}

}  // namespace exosim

#endif  // EXOSIM_DYNAMICS_HPP
