/* -------------------------------------------------------------------------- *
 * exosim: tests/test_nlp.cpp                                                 *
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

#include <random>
#include <sstream>

#include "exosim/nlp.hpp"
#include "oracles.hpp"

using namespace exosim;

namespace {

// Exhaustive active-set enumeration oracle for small QPs. Builds the same
// a·d >= b row catalogue as the solver, tries every subset as the active set,
// and keeps the best candidate that is primal and dual feasible.
struct BruteQp {
    bool found = false;
    VectorXd d;
    double obj = 0.0;
};

BruteQp brute_force_qp(const MatrixXd& H, const VectorXd& g, const MatrixXd& A_eq,
                       const VectorXd& b_eq, const MatrixXd& A_in, const VectorXd& in_lo,
                       const VectorXd& in_up, const VectorXd& d_lo, const VectorXd& d_up) {
    const int n = static_cast<int>(g.size());
    const int m_eq = static_cast<int>(b_eq.size());
    std::vector<VectorXd> ra;
    std::vector<double> rb;
    for (int i = 0; i < A_in.rows(); ++i) {
        if (std::isfinite(in_lo[i])) {
            ra.push_back(A_in.row(i).transpose());
            rb.push_back(in_lo[i]);
        }
        if (std::isfinite(in_up[i])) {
            ra.push_back(-A_in.row(i).transpose());
            rb.push_back(-in_up[i]);
        }
    }
    for (int j = 0; j < n; ++j) {
        VectorXd e = VectorXd::Zero(n);
        if (std::isfinite(d_lo[j])) {
            e[j] = 1.0;
            ra.push_back(e);
            rb.push_back(d_lo[j]);
            e[j] = 0.0;
        }
        if (std::isfinite(d_up[j])) {
            e[j] = -1.0;
            ra.push_back(e);
            rb.push_back(-d_up[j]);
            e[j] = 0.0;
        }
    }
    const int R = static_cast<int>(ra.size());
    REQUIRE(R <= 16);

    const MatrixXd Hr = H + 1e-8 * MatrixXd::Identity(n, n);
    BruteQp best;
    for (int mask = 0; mask < (1 << R); ++mask) {
        std::vector<int> act;
        for (int r = 0; r < R; ++r)
            if (mask & (1 << r)) act.push_back(r);
        const int m = m_eq + static_cast<int>(act.size());
        MatrixXd K(n + m, n + m);
        K.setZero();
        K.topLeftCorner(n, n) = Hr;
        VectorXd rhs(n + m);
        rhs.head(n) = -g;
        for (int i = 0; i < m_eq; ++i) {
            K.block(n + i, 0, 1, n) = A_eq.row(i);
            K.block(0, n + i, n, 1) = A_eq.row(i).transpose();
            rhs[n + i] = b_eq[i];
        }
        for (size_t k = 0; k < act.size(); ++k) {
            const int row = n + m_eq + static_cast<int>(k);
            K.block(row, 0, 1, n) = ra[act[k]].transpose();
            K.block(0, row, n, 1) = ra[act[k]];
            rhs[row] = rb[act[k]];
        }
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (!lu.isInvertible()) continue;
        const VectorXd sol = lu.solve(rhs);
        const VectorXd d = sol.head(n);
        bool ok = true;
        for (int r = 0; r < R && ok; ++r)
            if (ra[r].dot(d) < rb[r] - 1e-9) ok = false;
        for (size_t k = 0; k < act.size() && ok; ++k)
            if (-sol[n + m_eq + static_cast<int>(k)] < -1e-9) ok = false;
        if (!ok) continue;
        const double obj = 0.5 * d.dot(Hr * d) + g.dot(d);
        if (!best.found || obj < best.obj - 1e-12) {
            best.found = true;
            best.d = d;
            best.obj = obj;
        }
    }
    return best;
}

NlpProblem bounded_problem(int n) {
    NlpProblem p;
    p.n = n;
    p.lb = VectorXd::Constant(n, -kInf);
    p.ub = VectorXd::Constant(n, kInf);
    return p;
}

}  // namespace

TEST_CASE("qp: unconstrained minimizer", "[nlp]") {
    MatrixXd H(2, 2);
    H << 4.0, 1.0, 1.0, 3.0;
    VectorXd g(2);
    g << 1.0, -2.0;
    const VectorXd none;
    const MatrixXd none_rows(0, 2);
    const VectorXd free_lo = VectorXd::Constant(2, -kInf);
    const VectorXd free_up = VectorXd::Constant(2, kInf);
    const QpResult r =
        qp_solve(H, g, none_rows, none, none_rows, none, none, free_lo, free_up);
    const VectorXd expect = -H.ldlt().solve(g);
    CHECK((r.d - expect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("qp: least-norm point on a line", "[nlp]") {
    const MatrixXd H = MatrixXd::Identity(2, 2);
    const VectorXd g = VectorXd::Zero(2);
    MatrixXd A_eq(1, 2);
    A_eq << 1.0, 1.0;
    VectorXd b_eq(1);
    b_eq << 1.0;
    const MatrixXd none_rows(0, 2);
    const VectorXd none;
    const QpResult r = qp_solve(H, g, A_eq, b_eq, none_rows, none, none,
                                VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf));
    CHECK(std::abs(r.d[0] - 0.5) < 1e-8);
    CHECK(std::abs(r.d[1] - 0.5) < 1e-8);
    CHECK(std::abs(r.eq_mult[0] - 0.5) < 1e-6);
    CHECK((A_eq * r.d - b_eq).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("qp: binding lower bound yields a positive multiplier", "[nlp]") {
    const MatrixXd H = MatrixXd::Identity(1, 1);
    VectorXd g(1);
    g << 1.0;  // unconstrained minimizer at -1
    const MatrixXd none_rows(0, 1);
    const VectorXd none;
    VectorXd lo(1), up(1);
    lo << 0.0;
    up << kInf;
    const QpResult r = qp_solve(H, g, none_rows, none, none_rows, none, none, lo, up);
    CHECK(std::abs(r.d[0]) < 1e-10);
    CHECK(std::abs(r.bound_mult_lower[0] - 1.0) < 1e-6);
    CHECK(r.bound_mult_upper[0] == 0.0);
}

TEST_CASE("qp: two-sided row activates the lower side", "[nlp]") {
    const MatrixXd H = MatrixXd::Identity(2, 2);
    const VectorXd g = VectorXd::Zero(2);
    MatrixXd A_in(1, 2);
    A_in << 1.0, 1.0;
    VectorXd lo(1), up(1);
    lo << 1.0;
    up << 2.0;
    const MatrixXd none_rows(0, 2);
    const VectorXd none;
    const QpResult r = qp_solve(H, g, none_rows, none, A_in, lo, up,
                                VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf));
    CHECK(std::abs(r.d[0] - 0.5) < 1e-8);
    CHECK(std::abs(r.d[1] - 0.5) < 1e-8);
    CHECK(r.row_mult_lower[0] > 0.4);
    CHECK(r.row_mult_upper[0] == 0.0);
}

TEST_CASE("qp: contradictory bounds are reported infeasible", "[nlp]") {
    const MatrixXd H = MatrixXd::Identity(1, 1);
    const VectorXd g = VectorXd::Zero(1);
    const MatrixXd none_rows(0, 1);
    const VectorXd none;
    VectorXd lo(1), up(1);
    lo << 1.0;
    up << 0.0;
    CHECK_THROWS_AS(qp_solve(H, g, none_rows, none, none_rows, none, none, lo, up),
                    QpInfeasible);
}

TEST_CASE("qp: random instances match exhaustive active-set enumeration", "[nlp]") {
    std::mt19937 rng(2024u);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 3;
        MatrixXd M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) M(i, j) = oracles::uniform(rng, -1.0, 1.0);
        const MatrixXd H = M * M.transpose() + MatrixXd::Identity(n, n);
        VectorXd g(n), d0(n);
        for (int i = 0; i < n; ++i) {
            g[i] = oracles::uniform(rng, -2.0, 2.0);
            d0[i] = oracles::uniform(rng, -1.0, 1.0);
        }
        MatrixXd A_eq(1, n);
        for (int j = 0; j < n; ++j) A_eq(0, j) = oracles::uniform(rng, -1.0, 1.0);
        VectorXd b_eq(1);
        b_eq << A_eq.row(0).dot(d0);
        MatrixXd A_in(2, n);
        VectorXd lo(2), up(2);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < n; ++j) A_in(i, j) = oracles::uniform(rng, -1.0, 1.0);
            const double mid = A_in.row(i).dot(d0);
            lo[i] = mid - oracles::uniform(rng, 0.1, 2.0);
            up[i] = mid + oracles::uniform(rng, 0.1, 2.0);
        }
        VectorXd d_lo(n), d_up(n);
        for (int j = 0; j < n; ++j) {
            d_lo[j] = d0[j] - oracles::uniform(rng, 0.5, 2.0);
            d_up[j] = d0[j] + oracles::uniform(rng, 0.5, 2.0);
        }

        const QpResult r = qp_solve(H, g, A_eq, b_eq, A_in, lo, up, d_lo, d_up);
        const BruteQp oracle = brute_force_qp(H, g, A_eq, b_eq, A_in, lo, up, d_lo, d_up);
        REQUIRE(oracle.found);
        CHECK((r.d - oracle.d).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((A_eq * r.d - b_eq).cwiseAbs().maxCoeff() < 1e-10);

        // Multipliers of inactive rows are exactly zero.
        for (int i = 0; i < 2; ++i) {
            const double c = A_in.row(i).dot(r.d);
            if (c > lo[i] + 1e-7) CHECK(r.row_mult_lower[i] == 0.0);
            if (c < up[i] - 1e-7) CHECK(r.row_mult_upper[i] == 0.0);
        }
    }
}

TEST_CASE("qp: warm-started resolve is bitwise deterministic", "[nlp]") {
    MatrixXd H(2, 2);
    H << 2.0, 0.0, 0.0, 2.0;
    VectorXd g(2);
    g << -4.0, -4.0;
    MatrixXd A_in(1, 2);
    A_in << 1.0, 1.0;
    VectorXd lo(1), up(1);
    lo << -kInf;
    up << 1.0;
    const MatrixXd none_rows(0, 2);
    const VectorXd none;
    std::vector<int> warm;
    const QpResult r1 = qp_solve(H, g, none_rows, none, A_in, lo, up,
                                 VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf),
                                 &warm);
    REQUIRE(warm.size() == 1);  // upper side of the row is active
    const QpResult r2 = qp_solve(H, g, none_rows, none, A_in, lo, up,
                                 VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf),
                                 &warm);
    CHECK(r1.d[0] == r2.d[0]);
    CHECK(r1.d[1] == r2.d[1]);
    CHECK(r1.row_mult_upper[0] == r2.row_mult_upper[0]);
}

TEST_CASE("bfgs: damped update preserves positive definiteness", "[nlp]") {
    std::mt19937 rng(77u);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4;
        MatrixXd M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) M(i, j) = oracles::uniform(rng, -1.0, 1.0);
        MatrixXd B = M * M.transpose() + 0.1 * MatrixXd::Identity(n, n);
        VectorXd s(n), y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = oracles::uniform(rng, -1.0, 1.0);
            y[i] = oracles::uniform(rng, -1.0, 1.0);  // often violates curvature
        }
        damped_bfgs_update(B, s, y);
        const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (B + B.transpose()));
        CHECK(eig.eigenvalues().minCoeff() > 0.0);
        CHECK(s.dot(B * s) > 0.0);
    }
}

TEST_CASE("sqp: scalar bound problem hits the analytic optimum", "[nlp]") {
    // minimize x^2 subject to x >= 1: optimum x = 1, bound multiplier 2.
    NlpProblem p = bounded_problem(1);
    p.lb[0] = 1.0;
    p.cost = [](const VectorXd& x) { return x[0] * x[0]; };
    p.grad = [](const VectorXd& x) { return VectorXd::Constant(1, 2.0 * x[0]); };
    VectorXd x0(1);
    x0 << 5.0;
    const NlpSolution sol = solve_sqp(p, x0);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0] - 1.0) < 1e-8);
    CHECK(std::abs(sol.mult.bound_lower[0] - 2.0) < 1e-6);
    CHECK(sol.iterations <= 15);
    CHECK(sol.kkt_residual < 1e-6);
}

TEST_CASE("sqp: equality-constrained quadratic", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) { return x.squaredNorm(); };
    p.grad = [](const VectorXd& x) { return VectorXd(2.0 * x); };
    p.eq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1] - 1.0); };
    p.eq_jac = [](const VectorXd&) {
        MatrixXd J(1, 2);
        J << 1.0, 1.0;
        return J;
    };
    VectorXd x0(2);
    x0 << 3.0, -2.0;
    const NlpSolution sol = solve_sqp(p, x0);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0] - 0.5) < 1e-6);
    CHECK(std::abs(sol.x[1] - 0.5) < 1e-6);
    CHECK(std::abs(sol.mult.eq[0] - 1.0) < 1e-6);
}

TEST_CASE("sqp: feasible start at the optimum stops within two iterations", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) { return x.squaredNorm(); };
    p.grad = [](const VectorXd& x) { return VectorXd(2.0 * x); };
    p.eq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1] - 1.0); };
    p.eq_jac = [](const VectorXd&) {
        MatrixXd J(1, 2);
        J << 1.0, 1.0;
        return J;
    };
    VectorXd x0(2);
    x0 << 0.5, 0.5;
    const NlpSolution sol = solve_sqp(p, x0);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(sol.iterations <= 2);
    CHECK(std::abs(sol.x[0] - 0.5) < 1e-12);
    CHECK(std::abs(sol.x[1] - 0.5) < 1e-12);
}

TEST_CASE("sqp: active and inactive inequality rows", "[nlp]") {
    const auto make = [](double limit) {
        NlpProblem p = bounded_problem(2);
        p.cost = [](const VectorXd& x) {
            const double a = x[0] - 2.0, b = x[1] - 1.0;
            return a * a + b * b;
        };
        p.grad = [](const VectorXd& x) {
            VectorXd g(2);
            g << 2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0);
            return g;
        };
        p.ineq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1]); };
        p.ineq_jac = [](const VectorXd&) {
            MatrixXd J(1, 2);
            J << 1.0, 1.0;
            return J;
        };
        p.ineq_lower = VectorXd::Constant(1, -kInf);
        p.ineq_upper = VectorXd::Constant(1, limit);
        return p;
    };
    VectorXd x0(2);
    x0 << -1.0, -1.0;

    const NlpSolution active = solve_sqp(make(2.0), x0);
    REQUIRE(active.status == SolveStatus::Converged);
    CHECK(std::abs(active.x[0] - 1.5) < 1e-7);
    CHECK(std::abs(active.x[1] - 0.5) < 1e-7);
    CHECK(std::abs(active.mult.ineq_upper[0] - 1.0) < 1e-5);

    const NlpSolution inactive = solve_sqp(make(10.0), x0);
    REQUIRE(inactive.status == SolveStatus::Converged);
    CHECK(std::abs(inactive.x[0] - 2.0) < 1e-7);
    CHECK(std::abs(inactive.x[1] - 1.0) < 1e-7);
    CHECK(inactive.mult.ineq_upper[0] < 1e-10);
}

TEST_CASE("sqp: rosenbrock converges and merit decreases monotonically", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) {
        const double a = 1.0 - x[0];
        const double b = x[1] - x[0] * x[0];
        return a * a + 100.0 * b * b;
    };
    p.grad = [](const VectorXd& x) {
        VectorXd g(2);
        const double b = x[1] - x[0] * x[0];
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return g;
    };
    VectorXd x0(2);
    x0 << -1.2, 1.0;
    const NlpSolution sol = solve_sqp(p, x0);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(sol.x[1] - 1.0) < 1e-5);
    // Unconstrained: the merit function is the cost, so the recorded history
    // must never increase.
    for (size_t k = 1; k < sol.merit_history.size(); ++k)
        CHECK(sol.merit_history[k] <= sol.merit_history[k - 1] + 1e-12);

    SolverSettings tight;
    tight.max_iterations = 3;
    const NlpSolution cut = solve_sqp(p, x0, tight);
    CHECK(cut.status == SolveStatus::MaxIter);
}

TEST_CASE("sqp: missing derivative callbacks fall back to finite differences", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) {
        const double a = x[0] - 1.0, b = x[1] + 2.0;
        return a * a + b * b;
    };
    SolverSettings s;
    s.kkt_tol = 1e-5;  // forward differences limit the achievable residual
    const NlpSolution sol = solve_sqp(p, VectorXd::Zero(2), s);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0] - 1.0) < 1e-4);
    CHECK(std::abs(sol.x[1] + 2.0) < 1e-4);
}

TEST_CASE("sqp: gauss-newton hessian mode solves an equality problem", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) { return 0.5 * x.squaredNorm(); };
    p.grad = [](const VectorXd& x) { return x; };
    p.eq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1] - 1.0); };
    p.eq_jac = [](const VectorXd&) {
        MatrixXd J(1, 2);
        J << 1.0, 1.0;
        return J;
    };
    SolverSettings s;
    s.hessian = HessianMode::GaussNewtonDefects;
    const NlpSolution sol = solve_sqp(p, VectorXd::Zero(2), s);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0] - 0.5) < 1e-6);
    CHECK(std::abs(sol.x[1] - 0.5) < 1e-6);
}

TEST_CASE("sqp: inconsistent equalities fall back to elastic mode", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) { return x.squaredNorm(); };
    p.grad = [](const VectorXd& x) { return VectorXd(2.0 * x); };
    p.eq = [](const VectorXd& x) {
        VectorXd c(2);
        c << x[0] + x[1], x[0] + x[1] - 1.0;  // cannot both vanish
        return c;
    };
    p.eq_jac = [](const VectorXd&) {
        MatrixXd J(2, 2);
        J << 1.0, 1.0, 1.0, 1.0;
        return J;
    };
    SolverSettings s;
    s.max_iterations = 20;
    const NlpSolution sol = solve_sqp(p, VectorXd::Zero(2), s);
    CHECK(sol.status != SolveStatus::Converged);
    CHECK(sol.x.allFinite());
    CHECK(sol.constraint_violation > 0.1);  // infeasible problem stays infeasible
}

TEST_CASE("sqp: start outside the bounds is clipped", "[nlp]") {
    NlpProblem p = bounded_problem(1);
    p.lb[0] = -1.0;
    p.ub[0] = 1.0;
    p.cost = [](const VectorXd& x) { return x[0] * x[0]; };
    p.grad = [](const VectorXd& x) { return VectorXd::Constant(1, 2.0 * x[0]); };
    const NlpSolution sol = solve_sqp(p, VectorXd::Constant(1, 9.0));
    CHECK(sol.clipped_start);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.x[0]) < 1e-8);
}

TEST_CASE("sqp: repeated solves are bitwise deterministic", "[nlp]") {
    const auto build = [] {
        NlpProblem p = bounded_problem(2);
        p.cost = [](const VectorXd& x) {
            const double a = x[0] - 2.0, b = x[1] - 1.0;
            return a * a + b * b;
        };
        p.grad = [](const VectorXd& x) {
            VectorXd g(2);
            g << 2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0);
            return g;
        };
        p.ineq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1]); };
        p.ineq_jac = [](const VectorXd&) {
            MatrixXd J(1, 2);
            J << 1.0, 1.0;
            return J;
        };
        p.ineq_lower = VectorXd::Constant(1, -kInf);
        p.ineq_upper = VectorXd::Constant(1, 2.0);
        return p;
    };
    VectorXd x0(2);
    x0 << -3.0, 4.0;
    const NlpSolution a = solve_sqp(build(), x0);
    const NlpSolution b = solve_sqp(build(), x0);
    REQUIRE(a.iterations == b.iterations);
    CHECK(a.x[0] == b.x[0]);
    CHECK(a.x[1] == b.x[1]);
    CHECK(a.cost == b.cost);
}

TEST_CASE("kkt residual: exact optimum with exact multipliers is tiny", "[nlp]") {
    NlpProblem p = bounded_problem(2);
    p.cost = [](const VectorXd& x) {
        const double a = x[0] - 2.0, b = x[1] - 1.0;
        return a * a + b * b;
    };
    p.grad = [](const VectorXd& x) {
        VectorXd g(2);
        g << 2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0);
        return g;
    };
    p.ineq = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] + x[1]); };
    p.ineq_jac = [](const VectorXd&) {
        MatrixXd J(1, 2);
        J << 1.0, 1.0;
        return J;
    };
    p.ineq_lower = VectorXd::Constant(1, -kInf);
    p.ineq_upper = VectorXd::Constant(1, 2.0);

    NlpMultipliers m;
    m.eq = VectorXd();
    m.ineq_lower = VectorXd::Zero(1);
    m.ineq_upper = VectorXd::Constant(1, 1.0);
    m.bound_lower = VectorXd::Zero(2);
    m.bound_upper = VectorXd::Zero(2);
    VectorXd xopt(2);
    xopt << 1.5, 0.5;
    CHECK(kkt_residual(p, xopt, m) < 1e-12);

    // A perturbed point scores a residual of the same order as the offset.
    VectorXd xoff(2);
    xoff << 1.5 + 1e-3, 0.5;
    const double r = kkt_residual(p, xoff, m);
    CHECK(r > 1e-4);
    CHECK(r < 1e-1);
}

TEST_CASE("sqp: verbose mode logs one line per iteration", "[nlp]") {
    NlpProblem p = bounded_problem(1);
    p.cost = [](const VectorXd& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
    p.grad = [](const VectorXd& x) { return VectorXd::Constant(1, 2.0 * (x[0] - 3.0)); };
    std::ostringstream oss;
    SolverSettings s;
    s.verbose = true;
    s.log = &oss;
    const NlpSolution sol = solve_sqp(p, VectorXd::Zero(1), s);
    REQUIRE(sol.status == SolveStatus::Converged);
    const std::string text = oss.str();
    CHECK(text.find("iter 0") != std::string::npos);
    CHECK(text.find("kkt") != std::string::npos);
}
