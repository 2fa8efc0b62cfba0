/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/kinematics.hpp                                      *
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
#ifndef EXOSIM_KINEMATICS_HPP
#define EXOSIM_KINEMATICS_HPP

#include "exosim/model.hpp"

namespace exosim {

/// World pose of a body: rotation maps body coordinates to world, position
/// is the body origin in world.
struct BodyPose {
    Matrix3d rotation = Matrix3d::Identity();
    Vector3d position = Vector3d::Zero();
};

/// Plücker transforms world->body for every internal body.
inline std::vector<SpatialTransform> world_transforms(const MultibodyModel& model,
                                                      const VectorXd& q) {
    model.check_q(q);
    std::vector<SpatialTransform> X0(model.num_internal_bodies());
    for (int i = 0; i < model.num_internal_bodies(); ++i) {
        const auto& j = model.joints[i];
        const SpatialTransform X_pi = joint_transform(j, q);
        X0[i] = (j.parent < 0) ? X_pi : X_pi * X0[j.parent];
    }
    return X0;
}

inline BodyPose pose_from_transform(const SpatialTransform& X0) {
    return {X0.rotation.transpose(), X0.translation};
}

/// World poses of all user bodies.
inline std::vector<BodyPose> forward_kinematics(const MultibodyModel& model, const VectorXd& q) {
    const auto X0 = world_transforms(model, q);
    std::vector<BodyPose> poses(model.num_bodies());
    for (int ub = 0; ub < model.num_bodies(); ++ub)
        poses[ub] = pose_from_transform(X0[model.user_to_internal[ub]]);
    return poses;
}

/// World position of a body-fixed point.
inline Vector3d point_position(const MultibodyModel& model, const VectorXd& q, int body,
                               const Vector3d& point_body) {
    if (body < 0 || body >= model.num_bodies())
        throw std::invalid_argument("point_position: invalid body index");
    const auto poses = forward_kinematics(model, q);
    return poses[body].rotation * point_body + poses[body].position;
}

/// 3 x dof Jacobian of the world velocity of a body-fixed point:
/// v_point = J(q) * q̇.
inline MatrixXd point_jacobian(const MultibodyModel& model, const VectorXd& q, int body,
                               const Vector3d& point_body) {
    if (body < 0 || body >= model.num_bodies())
        throw std::invalid_argument("point_jacobian: invalid body index");
    const auto X0 = world_transforms(model, q);
    const int ib = model.user_to_internal[body];
    const BodyPose pose = pose_from_transform(X0[ib]);
    const Vector3d p_world = pose.rotation * point_body + pose.position;

    MatrixXd J = MatrixXd::Zero(3, model.nv);
    for (int j = ib; j >= 0; j = model.joints[j].parent) {
        const auto& joint = model.joints[j];
        const SpatialTransform to_world = X0[j].inverse();
        if (joint.floating) {
            for (int k = 0; k < 6; ++k) {
                Vector6d e = Vector6d::Zero();
                e[k] = 1.0;
                const SpatialMotion s0 = to_world.apply(SpatialMotion::from_vec(e));
                J.col(joint.dq_offset + k) = s0.linear + s0.angular.cross(p_world);
            }
        } else {
            const SpatialMotion s0 = to_world.apply(SpatialMotion(joint.axis, Vector3d::Zero()));
            J.col(joint.dq_offset) = s0.linear + s0.angular.cross(p_world);
        }
    }
    return J;
}

/// World velocity of a body-fixed point.
inline Vector3d point_velocity(const MultibodyModel& model, const VectorXd& q, const VectorXd& v,
                               int body, const Vector3d& point_body) {
    model.check_v(v);
    return point_jacobian(model, q, body, point_body) * v;
}

}  // namespace exosim

#endif  // EXOSIM_KINEMATICS_HPP
