/* -------------------------------------------------------------------------- *
 * exosim: tests/test_dynamics.cpp                                            *
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
#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace exosim;

TEST_CASE("forward kinematics at q=0 composes frame offsets", "[dynamics]") {
    oracles::TwoLinkParams p;
    const MultibodyModel m = oracles::two_link_model(p);
    const auto poses = forward_kinematics(m, m.neutral_q());
    CHECK((poses[0].rotation - Matrix3d::Identity()).norm() < 1e-14);
    CHECK(poses[0].position.norm() < 1e-14);
    CHECK((poses[1].position - Vector3d(p.l1, 0, 0)).norm() < 1e-14);
}

TEST_CASE("pendulum tip rotates by a quarter turn", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    VectorXd q(1);
    q << M_PI / 2.0;
    // Rotation by +pi/2 about +y carries the tip (0,0,-1) to (-1,0,0).
    const Vector3d tip = point_position(m, q, 0, Vector3d(0, 0, -1.0));
    CHECK((tip - Vector3d(-1.0, 0, 0)).norm() < 1e-12);
}

TEST_CASE("two-link FK matches a homogeneous-matrix oracle", "[dynamics]") {
    std::mt19937 rng(31);
    oracles::TwoLinkParams p;
    const MultibodyModel m = oracles::two_link_model(p);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector2d q2(oracles::uniform(rng, -3, 3), oracles::uniform(rng, -3, 3));
        const Vector3d point(oracles::uniform(rng, -1, 1), oracles::uniform(rng, -1, 1), 0.0);
        VectorXd q(2);
        q << q2[0], q2[1];
        const Vector3d ours = point_position(m, q, 1, point);
        const Vector3d oracle = oracles::two_link_point_oracle(p, q2, point);
        CHECK((ours - oracle).norm() < 1e-12);
    }
}

TEST_CASE("pendulum Jacobian is the axis cross lever arm", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    const VectorXd q = VectorXd::Zero(1);
    const MatrixXd J = point_jacobian(m, q, 0, Vector3d(0, 0, -1.0));
    CHECK((J.col(0) - Vector3d::UnitY().cross(Vector3d(0, 0, -1.0))).norm() < 1e-14);

    // Zero lever arm: the column vanishes.
    const MatrixXd J0 = point_jacobian(m, q, 0, Vector3d::Zero());
    CHECK(J0.col(0).norm() < 1e-14);
}

TEST_CASE("point Jacobians match central finite differences", "[dynamics]") {
    std::mt19937 rng(32);
    for (int trial = 0; trial < 8; ++trial) {
        const MultibodyModel m = oracles::random_tree(rng, 7, trial % 2 == 0);
        const VectorXd q = oracles::random_q(rng, m);
        const int body = std::uniform_int_distribution<int>(0, m.num_bodies() - 1)(rng);
        const Vector3d point(oracles::uniform(rng, -0.5, 0.5), oracles::uniform(rng, -0.5, 0.5),
                             oracles::uniform(rng, -0.5, 0.5));
        const MatrixXd J = point_jacobian(m, q, body, point);
        const MatrixXd J_fd = oracles::fd_point_jacobian(m, q, body, point);
        CHECK((J - J_fd).cwiseAbs().maxCoeff() < 1e-6);

        const VectorXd v = oracles::random_v(rng, m);
        CHECK((point_velocity(m, q, v, body, point) - J * v).norm() < 1e-12);
    }
}

TEST_CASE("pendulum inverse dynamics reproduces m g l sin q", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    VectorXd q(1), zero(1);
    q << M_PI / 2.0;
    zero << 0.0;
    const VectorXd tau = rnea(m, q, zero, zero);
    CHECK(tau[0] == Catch::Approx(9.81).margin(1e-12));

    // An opposing pure torque on the body cancels gravity exactly.
    ExternalForces fext(1);
    fext[0] = SpatialForce(Vector3d(0, 9.81, 0), Vector3d::Zero());
    CHECK(rnea(m, q, zero, zero, fext)[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("zero gravity and zero motion need zero torque", "[dynamics]") {
    std::mt19937 rng(33);
    MultibodyModel m = oracles::random_tree(rng, 6, false);
    m.gravity.setZero();
    const VectorXd q = oracles::random_q(rng, m);
    const VectorXd zero = VectorXd::Zero(m.nv);
    CHECK(rnea(m, q, zero, zero).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("two-link inverse dynamics matches the closed form", "[dynamics]") {
    std::mt19937 rng(34);
    oracles::TwoLinkParams p;
    const MultibodyModel m = oracles::two_link_model(p);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector2d q(oracles::uniform(rng, -3, 3), oracles::uniform(rng, -3, 3));
        const Eigen::Vector2d qd(oracles::uniform(rng, -2, 2), oracles::uniform(rng, -2, 2));
        const Eigen::Vector2d qdd(oracles::uniform(rng, -2, 2), oracles::uniform(rng, -2, 2));
        const VectorXd tau = rnea(m, VectorXd(q), VectorXd(qd), VectorXd(qdd));
        const Eigen::Vector2d oracle = oracles::two_link_tau(p, q, qd, qdd);
        CHECK((tau - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("pendulum mass matrix is m l^2", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    VectorXd q(1);
    q << 0.7;
    const MatrixXd M = crba(m, q);
    CHECK(M(0, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("CRBA agrees with RNEA columns and is SPD", "[dynamics]") {
    std::mt19937 rng(35);
    for (int trial = 0; trial < 8; ++trial) {
        const MultibodyModel m = oracles::random_tree(rng, 8, trial % 2 == 1);
        const VectorXd q = oracles::random_q(rng, m);
        const MatrixXd M = crba(m, q);
        CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M);
        CHECK(eig.eigenvalues().minCoeff() > 0.0);

        const VectorXd zero = VectorXd::Zero(m.nv);
        const VectorXd bias = rnea(m, q, zero, zero);
        for (int i = 0; i < m.nv; ++i) {
            VectorXd e = VectorXd::Zero(m.nv);
            e[i] = 1.0;
            const VectorXd col = rnea(m, q, zero, e) - bias;
            CHECK((M.col(i) - col).lpNorm<Eigen::Infinity>() < 1e-10);
        }
    }
}

TEST_CASE("forward dynamics inverts inverse dynamics", "[dynamics]") {
    std::mt19937 rng(36);
    for (int trial = 0; trial < 10; ++trial) {
        const MultibodyModel m = oracles::random_tree(rng, 10, trial % 2 == 0);
        const VectorXd q = oracles::random_q(rng, m);
        const VectorXd v = oracles::random_v(rng, m);
        const VectorXd qdd = oracles::random_v(rng, m, 2.0);
        ExternalForces fext(m.num_bodies());
        for (auto& f : fext)
            f = SpatialForce(oracles::random_unit_vector(rng), oracles::random_unit_vector(rng));
        const VectorXd tau = rnea(m, q, v, qdd, fext);
        const VectorXd qdd_back = aba(m, q, v, tau, fext);
        CHECK((qdd_back - qdd).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("static pendulum equilibria under ABA", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    VectorXd q(1), zero(1), tau(1);
    zero << 0.0;

    q << M_PI / 2.0;
    tau << 9.81;
    CHECK(aba(m, q, zero, tau)[0] == Catch::Approx(0.0).margin(1e-12));

    q << 0.0;
    tau << 0.0;
    CHECK(aba(m, q, zero, tau)[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("ABA solves the mass-matrix linear system", "[dynamics]") {
    std::mt19937 rng(37);
    const MultibodyModel m = oracles::random_tree(rng, 6, true);
    const VectorXd q = oracles::random_q(rng, m);
    const VectorXd v = oracles::random_v(rng, m);
    const VectorXd tau = oracles::random_v(rng, m, 5.0);
    const VectorXd qdd = aba(m, q, v, tau);
    const VectorXd zero = VectorXd::Zero(m.nv);
    const VectorXd residual = crba(m, q) * qdd + rnea(m, q, v, zero) - tau;
    CHECK(residual.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("kinetic energy matches the quadratic form", "[dynamics]") {
    std::mt19937 rng(38);
    const MultibodyModel m = oracles::random_tree(rng, 6, true);
    const VectorXd q = oracles::random_q(rng, m);

    CHECK(total_energy(m, q, VectorXd::Zero(m.nv)) ==
          Catch::Approx(total_energy(m, q, VectorXd::Zero(m.nv))));

    const VectorXd v = oracles::random_v(rng, m);
    const double kinetic = 0.5 * v.dot(crba(m, q) * v);
    const double potential = total_energy(m, q, VectorXd::Zero(m.nv));
    CHECK(total_energy(m, q, v) == Catch::Approx(kinetic + potential).margin(1e-10));
}

TEST_CASE("pendulum kinetic energy at unit speed", "[dynamics]") {
    const MultibodyModel m = oracles::pendulum_model();
    VectorXd q(1), v(1);
    q << 0.0;
    v << 1.0;
    const double at_rest = total_energy(m, q, VectorXd::Zero(1));
    CHECK(total_energy(m, q, v) - at_rest == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("unforced simulation conserves energy", "[dynamics]") {
    // Fixed-base 3-link chain swinging freely; RK4 at 1e-3 s over 1 s.
    std::vector<BodySpec> specs;
    for (int i = 0; i < 3; ++i) {
        BodySpec b;
        b.name = "link" + std::to_string(i);
        b.inertia = SpatialInertia::from_com_inertia(1.0 + 0.3 * i, Vector3d(0, 0, -0.25),
                                                     0.02 * Matrix3d::Identity());
        b.joint.kind = JointKind::Revolute1;
        b.joint.axes = {i == 1 ? Vector3d::UnitX() : Vector3d::UnitY()};
        b.joint.parent = i - 1;
        b.joint.frame_offset =
            (i == 0) ? SpatialTransform::Identity()
                     : SpatialTransform(Matrix3d::Identity(), Vector3d(0, 0, -0.5));
        specs.push_back(b);
    }
    const MultibodyModel m = build_model(specs);

    VectorXd q(3), v(3);
    q << 1.2, -0.4, 0.8;
    v << 0.0, 0.5, -0.3;
    const double e0 = total_energy(m, q, v);

    const double h = 1e-3;
    const VectorXd zero = VectorXd::Zero(3);
    for (int step = 0; step < 1000; ++step) {
        // Classic RK4 on (q, v); no quaternions in this chain, so plain
        // vector arithmetic on q is exact.
        const auto f = [&](const VectorXd& qq, const VectorXd& vv) {
            return std::make_pair(vv, aba(m, qq, vv, zero));
        };
        const auto [k1q, k1v] = f(q, v);
        const auto [k2q, k2v] = f(q + 0.5 * h * k1q, v + 0.5 * h * k1v);
        const auto [k3q, k3v] = f(q + 0.5 * h * k2q, v + 0.5 * h * k2v);
        const auto [k4q, k4v] = f(q + h * k3q, v + h * k3v);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    CHECK(std::abs(total_energy(m, q, v) - e0) / std::abs(e0) < 1e-5);
}
