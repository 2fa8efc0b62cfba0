/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/spatial.hpp                                         *
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
#ifndef EXOSIM_SPATIAL_HPP
#define EXOSIM_SPATIAL_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>

namespace exosim {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// 6-D motion vector (angular velocity / angular acceleration first).
struct SpatialMotion {
    Vector3d angular = Vector3d::Zero();
    Vector3d linear = Vector3d::Zero();

    SpatialMotion() = default;
    SpatialMotion(const Vector3d& ang, const Vector3d& lin) : angular(ang), linear(lin) {}

    static SpatialMotion Zero() { return {}; }

    Vector6d vec() const {
        Vector6d v;
        v << angular, linear;
        return v;
    }
    static SpatialMotion from_vec(const Vector6d& v) {
        return {v.head<3>(), v.tail<3>()};
    }

    SpatialMotion operator+(const SpatialMotion& o) const {
        return {angular + o.angular, linear + o.linear};
    }
    SpatialMotion operator-(const SpatialMotion& o) const {
        return {angular - o.angular, linear - o.linear};
    }
    SpatialMotion operator*(double s) const { return {angular * s, linear * s}; }
    SpatialMotion& operator+=(const SpatialMotion& o) {
        angular += o.angular;
        linear += o.linear;
        return *this;
    }
};

/// 6-D force vector: couple about the reference point first, then force.
struct SpatialForce {
    Vector3d angular = Vector3d::Zero();
    Vector3d linear = Vector3d::Zero();

    SpatialForce() = default;
    SpatialForce(const Vector3d& ang, const Vector3d& lin) : angular(ang), linear(lin) {}

    static SpatialForce Zero() { return {}; }

    Vector6d vec() const {
        Vector6d v;
        v << angular, linear;
        return v;
    }
    static SpatialForce from_vec(const Vector6d& v) {
        return {v.head<3>(), v.tail<3>()};
    }

    SpatialForce operator+(const SpatialForce& o) const {
        return {angular + o.angular, linear + o.linear};
    }
    SpatialForce operator-(const SpatialForce& o) const {
        return {angular - o.angular, linear - o.linear};
    }
    SpatialForce operator*(double s) const { return {angular * s, linear * s}; }
    SpatialForce& operator+=(const SpatialForce& o) {
        angular += o.angular;
        linear += o.linear;
        return *this;
    }
};

/// Power delivered by a force acting along a motion.
inline double dot(const SpatialMotion& m, const SpatialForce& f) {
    return m.angular.dot(f.angular) + m.linear.dot(f.linear);
}

/// Motion cross product  v x m.
inline SpatialMotion cross(const SpatialMotion& v, const SpatialMotion& m) {
    return {v.angular.cross(m.angular),
            v.angular.cross(m.linear) + v.linear.cross(m.angular)};
}

/// Force cross product  v x* f.
inline SpatialForce cross_force(const SpatialMotion& v, const SpatialForce& f) {
    return {v.angular.cross(f.angular) + v.linear.cross(f.linear),
            v.angular.cross(f.linear)};
}

inline Matrix3d skew(const Vector3d& v) {
    Matrix3d s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

/// Plücker coordinate transform from frame A to frame B, where B's origin
/// sits at `translation` (expressed in A) and B's axes are A's rotated by
/// `rotation` (i.e. rotation maps A-coordinates to B-coordinates).
struct SpatialTransform {
    Matrix3d rotation = Matrix3d::Identity();
    Vector3d translation = Vector3d::Zero();

    SpatialTransform() = default;
    SpatialTransform(const Matrix3d& E, const Vector3d& r) : rotation(E), translation(r) {}

    static SpatialTransform Identity() { return {}; }

    /// Composition: (X2 * X1) applies X1 first, then X2.
    SpatialTransform operator*(const SpatialTransform& first) const {
        return {rotation * first.rotation,
                first.translation + first.rotation.transpose() * translation};
    }

    SpatialTransform inverse() const {
        return {rotation.transpose(), -(rotation * translation)};
    }

    SpatialMotion apply(const SpatialMotion& m) const {
        return {rotation * m.angular,
                rotation * (m.linear - translation.cross(m.angular))};
    }

    /// Force transform A -> B (adjoint; couples re-referenced to B's origin).
    SpatialForce apply(const SpatialForce& f) const {
        return {rotation * (f.angular - translation.cross(f.linear)),
                rotation * f.linear};
    }

    /// Transforms a force given in B back to A coordinates (the transpose map).
    SpatialForce apply_transpose(const SpatialForce& f) const {
        const Vector3d lin = rotation.transpose() * f.linear;
        return {rotation.transpose() * f.angular + translation.cross(lin), lin};
    }

    /// Point coordinates A -> B.
    Vector3d transform_point(const Vector3d& p) const {
        return rotation * (p - translation);
    }

    /// 6x6 matrix acting on stacked [angular; linear] motion vectors.
    Matrix6d motion_matrix() const {
        Matrix6d X = Matrix6d::Zero();
        X.topLeftCorner<3, 3>() = rotation;
        X.bottomLeftCorner<3, 3>() = -rotation * skew(translation);
        X.bottomRightCorner<3, 3>() = rotation;
        return X;
    }
};

/// Rigid-body inertia: mass, COM offset, and rotational inertia about the
/// body-frame origin (not the COM).
struct SpatialInertia {
    double mass = 0.0;
    Vector3d com = Vector3d::Zero();
    Matrix3d inertia_origin = Matrix3d::Zero();

    SpatialInertia() = default;
    SpatialInertia(double m, const Vector3d& c, const Matrix3d& I_o)
        : mass(m), com(c), inertia_origin(I_o) {}

    static SpatialInertia Zero() { return {}; }

    /// Builds from inertia about the COM via the parallel-axis theorem.
    static SpatialInertia from_com_inertia(double m, const Vector3d& c, const Matrix3d& I_com) {
        const Matrix3d ch = skew(c);
        return {m, c, I_com + m * ch * ch.transpose()};
    }

    SpatialForce apply(const SpatialMotion& v) const {
        const Vector3d h = mass * com;
        return {inertia_origin * v.angular + h.cross(v.linear),
                mass * v.linear - h.cross(v.angular)};
    }

    Matrix6d matrix() const {
        Matrix6d I = Matrix6d::Zero();
        const Matrix3d ch = skew(mass * com);
        I.topLeftCorner<3, 3>() = inertia_origin;
        I.topRightCorner<3, 3>() = ch;
        I.bottomLeftCorner<3, 3>() = ch.transpose();
        I.bottomRightCorner<3, 3>() = mass * Matrix3d::Identity();
        return I;
    }

    SpatialInertia operator+(const SpatialInertia& o) const {
        SpatialInertia s;
        s.mass = mass + o.mass;
        s.com = s.mass > 0.0 ? Vector3d((mass * com + o.mass * o.com) / s.mass) : Vector3d::Zero();
        s.inertia_origin = inertia_origin + o.inertia_origin;
        return s;
    }
};

}  // namespace exosim

#endif  // EXOSIM_SPATIAL_HPP
