/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/nlp.hpp                                             *
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
#ifndef EXOSIM_NLP_HPP
#define EXOSIM_NLP_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace exosim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// General NLP in functional form:
///   minimize    cost(x)
///   subject to  eq(x) = 0
///               ineq_lower <= ineq(x) <= ineq_upper
///               lb <= x <= ub
/// Derivative callbacks are optional; missing ones fall back to forward
/// differences with step max(1e-6, 1e-6·|x_i|).
struct NlpProblem {
    int n = 0;
    VectorXd lb, ub;

    std::function<double(const VectorXd&)> cost;
    std::function<VectorXd(const VectorXd&)> grad;

    /// Optional least-squares structure: residuals r with ‖r‖² equal to the
    /// nonlinear-quadratic part of the cost (linear terms may be left out).
    /// The Gauss-Newton Hessian mode then models cost curvature as 2·JᵣᵀJᵣ.
    std::function<VectorXd(const VectorXd&)> cost_residuals;

    std::function<VectorXd(const VectorXd&)> eq;
    std::function<MatrixXd(const VectorXd&)> eq_jac;

    std::function<VectorXd(const VectorXd&)> ineq;
    VectorXd ineq_lower, ineq_upper;
    std::function<MatrixXd(const VectorXd&)> ineq_jac;
};

inline double fd_step_size(double xi) { return std::max(1e-6, 1e-6 * std::abs(xi)); }

namespace nlp_detail {

inline VectorXd eval_eq(const NlpProblem& p, const VectorXd& x) {
    return p.eq ? p.eq(x) : VectorXd();
}

inline VectorXd eval_ineq(const NlpProblem& p, const VectorXd& x) {
    return p.ineq ? p.ineq(x) : VectorXd();
}

inline VectorXd eval_grad(const NlpProblem& p, const VectorXd& x) {
    if (p.grad) return p.grad(x);
    VectorXd g(p.n);
    const double f0 = p.cost(x);
    VectorXd xp = x;
    for (int i = 0; i < p.n; ++i) {
        const double h = fd_step_size(x[i]);
        xp[i] = x[i] + h;
        g[i] = (p.cost(xp) - f0) / h;
        xp[i] = x[i];
    }
    return g;
}

inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f,
                            const VectorXd& x) {
    const VectorXd f0 = f(x);
    MatrixXd J(f0.size(), x.size());
    VectorXd xp = x;
    for (int i = 0; i < x.size(); ++i) {
        const double h = fd_step_size(x[i]);
        xp[i] = x[i] + h;
        J.col(i) = (f(xp) - f0) / h;
        xp[i] = x[i];
    }
    return J;
}

inline MatrixXd eval_eq_jac(const NlpProblem& p, const VectorXd& x) {
    if (!p.eq) return MatrixXd(0, p.n);
    return p.eq_jac ? p.eq_jac(x) : fd_jacobian(p.eq, x);
}

inline MatrixXd eval_ineq_jac(const NlpProblem& p, const VectorXd& x) {
    if (!p.ineq) return MatrixXd(0, p.n);
    return p.ineq_jac ? p.ineq_jac(x) : fd_jacobian(p.ineq, x);
}

}  // namespace nlp_detail

// ------------------------------------------------------------------ QP layer

struct QpResult {
    VectorXd d;                 ///< primal step
    VectorXd eq_mult;           ///< one per equality row, free sign
    VectorXd row_mult_lower;    ///< per inequality row, >= 0
    VectorXd row_mult_upper;    ///< per inequality row, >= 0
    VectorXd bound_mult_lower;  ///< per variable, >= 0
    VectorXd bound_mult_upper;  ///< per variable, >= 0
};

/// Thrown when the linearized constraint set admits no solution.
struct QpInfeasible : std::runtime_error {
    QpInfeasible() : std::runtime_error("infeasible linearized constraints") {}
};

/// Thrown when the active-set iteration exceeds its safeguard bound.
struct QpFailure : std::runtime_error {
    explicit QpFailure(const char* what) : std::runtime_error(what) {}
};

/// Strictly convex QP over d:
///   minimize    1/2 dᵀHd + gᵀd
///   subject to  A_eq d = b_eq;  in_lo <= A_in d <= in_up;  d_lo <= d <= d_up
/// solved with a dual active-set method: start from the equality-constrained
/// optimum, repeatedly add the most violated inequality, and drop rows whose
/// multipliers go negative. H is regularized by 1e-8·I (plus growing shifts
/// if a factorization still fails) so the subproblem stays strictly convex.
/// `warm_active` carries the active inequality id set across calls.
inline QpResult qp_solve(const MatrixXd& H, const VectorXd& g, const MatrixXd& A_eq,
                         const VectorXd& b_eq, const MatrixXd& A_in, const VectorXd& in_lo,
                         const VectorXd& in_up, const VectorXd& d_lo, const VectorXd& d_up,
                         std::vector<int>* warm_active = nullptr) {
    const int n = static_cast<int>(g.size());
    const int m_eq0 = static_cast<int>(b_eq.size());
    const int m_in = static_cast<int>(in_lo.size());

    // Variables pinned by coincident bounds join the equality block; kept as
    // a bound pair they would make every working set holding both dependent.
    std::vector<int> fixed;
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(d_lo[j]) && std::isfinite(d_up[j])) {
            if (d_lo[j] > d_up[j]) throw QpInfeasible();
            if (d_lo[j] == d_up[j]) fixed.push_back(j);
        }
    }
    const int m_eq = m_eq0 + static_cast<int>(fixed.size());
    MatrixXd Aeq(m_eq, n);
    VectorXd beq(m_eq);
    Aeq.topRows(m_eq0) = A_eq;
    beq.head(m_eq0) = b_eq;
    for (size_t k = 0; k < fixed.size(); ++k) {
        Aeq.row(m_eq0 + static_cast<int>(k)).setZero();
        Aeq(m_eq0 + static_cast<int>(k), fixed[k]) = 1.0;
        beq[m_eq0 + static_cast<int>(k)] = d_lo[fixed[k]];
    }

    // Inequality catalogue in a·d >= b form. Ids are stable so warm starts
    // and multiplier mapping stay deterministic.
    struct Row {
        VectorXd a;
        double b;
        int id;
    };
    std::vector<Row> rows;
    for (int i = 0; i < m_in; ++i) {
        if (std::isfinite(in_lo[i])) rows.push_back({A_in.row(i).transpose(), in_lo[i], i});
        if (std::isfinite(in_up[i]))
            rows.push_back({-A_in.row(i).transpose(), -in_up[i], m_in + i});
    }
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(d_lo[j]) && d_lo[j] == d_up[j]) continue;  // pinned above
        if (std::isfinite(d_lo[j])) {
            VectorXd e = VectorXd::Zero(n);
            e[j] = 1.0;
            rows.push_back({e, d_lo[j], 2 * m_in + j});
        }
        if (std::isfinite(d_up[j])) {
            VectorXd e = VectorXd::Zero(n);
            e[j] = -1.0;
            rows.push_back({e, -d_up[j], 2 * m_in + n + j});
        }
    }

    // Cholesky of the regularized Hessian, with growing shifts as a backstop.
    MatrixXd Hr = 0.5 * (H + H.transpose()) + 1e-8 * MatrixXd::Identity(n, n);
    Eigen::LLT<MatrixXd> chol(Hr);
    double shift = 1e-8;
    while (chol.info() != Eigen::Success && shift < 1.0) {
        shift *= 100.0;
        chol.compute(Hr + shift * MatrixXd::Identity(n, n));
    }
    if (chol.info() != Eigen::Success) throw QpFailure("qp: Hessian factorization failed");
    const VectorXd y0 = chol.solve(g);

    // Working set: equalities always, plus active inequality indices into
    // `rows`. Returns false when the working set is linearly dependent.
    // On success `ws_A` and `ws_ldlt` hold the row matrix and the Schur
    // factorization so a dual step can reuse them.
    std::vector<int> active;
    VectorXd d = VectorXd::Zero(n);
    VectorXd mult;  // size m_eq + active.size()
    MatrixXd ws_A;
    Eigen::LDLT<MatrixXd> ws_ldlt;
    const auto solve_working_set = [&]() -> bool {
        const int m = m_eq + static_cast<int>(active.size());
        if (m == 0) {
            d = -y0;
            mult.resize(0);
            return true;
        }
        MatrixXd A(m, n);
        VectorXd b(m);
        A.topRows(m_eq) = Aeq;
        b.head(m_eq) = beq;
        for (size_t k = 0; k < active.size(); ++k) {
            A.row(m_eq + static_cast<int>(k)) = rows[active[k]].a.transpose();
            b[m_eq + static_cast<int>(k)] = rows[active[k]].b;
        }
        const MatrixXd Y = chol.solve(A.transpose());
        const MatrixXd S = 0.5 * (A * Y + (A * Y).transpose());
        Eigen::LDLT<MatrixXd> Sldlt(S);
        if (Sldlt.info() != Eigen::Success) return false;
        // Rank test on the pivots: a dependent working set shows up as a
        // pivot collapsing relative to the largest one.
        const VectorXd piv = Sldlt.vectorD().cwiseAbs();
        if (piv.minCoeff() < 1e-12 * std::max(1.0, piv.maxCoeff())) return false;
        const VectorXd rhs = b + A * y0;
        mult = Sldlt.solve(rhs);
        mult += Sldlt.solve(rhs - S * mult);  // refinement pass for stiff rows
        d = Y * mult - y0;
        const double scale = 1.0 + b.cwiseAbs().maxCoeff();
        if ((A * d - b).cwiseAbs().maxCoeff() > 1e-6 * scale) return false;
        ws_A = std::move(A);
        ws_ldlt = std::move(Sldlt);
        return true;
    };

    // Warm start: previously active rows that still exist.
    if (warm_active) {
        for (int id : *warm_active)
            for (size_t r = 0; r < rows.size(); ++r)
                if (rows[r].id == id) active.push_back(static_cast<int>(r));
        if (!solve_working_set()) {
            active.clear();
            if (!solve_working_set()) throw QpInfeasible();
        }
    } else if (!solve_working_set()) {
        throw QpInfeasible();
    }

    const int max_changes = 200 + 20 * (n + static_cast<int>(rows.size()));
    std::vector<char> skip(rows.size(), 0);
    for (int change = 0;; ++change) {
        if (change > max_changes) throw QpFailure("qp: active-set iteration limit");
        // Degenerate sets can make the greedy rules cycle; beyond half the
        // budget switch to Bland's smallest-index selection, which cannot.
        const bool bland = change > max_changes / 2;

        // Drop an inequality with a negative multiplier, if any.
        int drop = -1;
        double most_negative = -1e-10;
        int lowest_row = std::numeric_limits<int>::max();
        for (size_t k = 0; k < active.size(); ++k) {
            const double lam = mult[m_eq + static_cast<int>(k)];
            if (lam >= most_negative && !bland) continue;
            if (bland) {
                if (lam >= -1e-10 || active[k] >= lowest_row) continue;
                lowest_row = active[k];
            }
            most_negative = lam;
            drop = static_cast<int>(k);
        }
        if (drop >= 0) {
            active.erase(active.begin() + drop);
            if (!solve_working_set()) throw QpInfeasible();
            continue;
        }

        // Add a violated inactive inequality.
        int add = -1;
        double worst = 1e-10;
        for (size_t r = 0; r < rows.size(); ++r) {
            if (skip[r]) continue;
            bool in_set = false;
            for (int k : active)
                if (k == static_cast<int>(r)) in_set = true;
            if (in_set) continue;
            const double viol = rows[r].b - rows[r].a.dot(d);
            if (viol > worst) {
                worst = viol;
                add = static_cast<int>(r);
                if (bland) break;
            }
        }
        if (add < 0) break;  // primal feasible, dual feasible: done

        const std::vector<int> saved = active;
        active.push_back(add);
        if (!solve_working_set()) {
            // Dependent row: its normal lies in the span of the working set.
            active = saved;
            if (!solve_working_set()) throw QpInfeasible();
            if (rows[add].b - rows[add].a.dot(d) > 1e-8) {
                // Dependent yet violated: a dual step drops the active row
                // that blocks it (smallest multiplier-to-coefficient ratio).
                // No positive coefficient means the rows are inconsistent.
                const VectorXd r = ws_ldlt.solve(ws_A * chol.solve(rows[add].a));
                int blocker = -1;
                double best_ratio = kInf;
                for (size_t k = 0; k < active.size(); ++k) {
                    const double rk = r[m_eq + static_cast<int>(k)];
                    if (rk <= 1e-10) continue;
                    const double ratio = mult[m_eq + static_cast<int>(k)] / rk;
                    if (ratio < best_ratio) {
                        best_ratio = ratio;
                        blocker = static_cast<int>(k);
                    }
                }
                if (blocker < 0) throw QpInfeasible();
                active.erase(active.begin() + blocker);
                if (!solve_working_set()) throw QpInfeasible();
                continue;
            }
            skip[add] = 1;
        }
    }

    if (warm_active) {
        warm_active->clear();
        for (int k : active) warm_active->push_back(rows[k].id);
    }

    QpResult res;
    res.d = d;
    res.eq_mult = mult.head(m_eq0);
    res.row_mult_lower = VectorXd::Zero(m_in);
    res.row_mult_upper = VectorXd::Zero(m_in);
    res.bound_mult_lower = VectorXd::Zero(n);
    res.bound_mult_upper = VectorXd::Zero(n);
    for (size_t k = 0; k < fixed.size(); ++k) {
        // A pinned variable's free-sign multiplier splits into the bound pair.
        const double nu = mult[m_eq0 + static_cast<int>(k)];
        if (nu >= 0.0)
            res.bound_mult_lower[fixed[k]] = nu;
        else
            res.bound_mult_upper[fixed[k]] = -nu;
    }
    for (size_t k = 0; k < active.size(); ++k) {
        const double lam = std::max(0.0, mult[m_eq + static_cast<int>(k)]);
        const int id = rows[active[k]].id;
        if (id < m_in)
            res.row_mult_lower[id] = lam;
        else if (id < 2 * m_in)
            res.row_mult_upper[id - m_in] = lam;
        else if (id < 2 * m_in + n)
            res.bound_mult_lower[id - 2 * m_in] = lam;
        else
            res.bound_mult_upper[id - 2 * m_in - n] = lam;
    }
    return res;
}

// ----------------------------------------------------------------- SQP layer

struct NlpMultipliers {
    VectorXd eq;
    VectorXd ineq_lower, ineq_upper;
    VectorXd bound_lower, bound_upper;
};

enum class SolveStatus { Converged, MaxIter, LineSearchFailure, QpFailureStatus };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxIter: return "max_iter";
        case SolveStatus::LineSearchFailure: return "line_search_failure";
        default: return "qp_failure";
    }
}

enum class HessianMode { DampedBfgs, GaussNewtonDefects };

struct SolverSettings {
    double kkt_tol = 1e-6;
    double constraint_tol = 1e-8;
    int max_iterations = 200;
    HessianMode hessian = HessianMode::DampedBfgs;
    bool verbose = false;
    std::ostream* log = &std::cerr;
};

struct NlpSolution {
    VectorXd x;
    NlpMultipliers mult;
    double cost = 0.0;
    double kkt_residual = 0.0;
    double constraint_violation = 0.0;
    int iterations = 0;
    SolveStatus status = SolveStatus::MaxIter;
    bool clipped_start = false;
    std::vector<double> merit_history;
};

/// ∞-norm of the stacked KKT conditions: Lagrangian gradient, equality
/// violation, inequality/bound violation, and complementarity products.
inline double kkt_residual(const NlpProblem& p, const VectorXd& x, const NlpMultipliers& m) {
    const VectorXd grad = nlp_detail::eval_grad(p, x);
    const VectorXd ceq = nlp_detail::eval_eq(p, x);
    const VectorXd cin = nlp_detail::eval_ineq(p, x);
    const MatrixXd Jeq = nlp_detail::eval_eq_jac(p, x);
    const MatrixXd Jin = nlp_detail::eval_ineq_jac(p, x);

    VectorXd grad_L = grad;
    if (ceq.size() > 0) grad_L -= Jeq.transpose() * m.eq;
    if (cin.size() > 0)
        grad_L += Jin.transpose() * (m.ineq_upper - m.ineq_lower);
    grad_L += m.bound_upper - m.bound_lower;

    double r = grad_L.size() > 0 ? grad_L.cwiseAbs().maxCoeff() : 0.0;
    for (int i = 0; i < ceq.size(); ++i) r = std::max(r, std::abs(ceq[i]));
    for (int i = 0; i < cin.size(); ++i) {
        if (std::isfinite(p.ineq_lower[i])) {
            r = std::max(r, std::max(0.0, p.ineq_lower[i] - cin[i]));
            r = std::max(r, std::abs(m.ineq_lower[i] * (cin[i] - p.ineq_lower[i])));
        }
        if (std::isfinite(p.ineq_upper[i])) {
            r = std::max(r, std::max(0.0, cin[i] - p.ineq_upper[i]));
            r = std::max(r, std::abs(m.ineq_upper[i] * (p.ineq_upper[i] - cin[i])));
        }
    }
    for (int j = 0; j < x.size(); ++j) {
        if (std::isfinite(p.lb[j])) {
            r = std::max(r, std::max(0.0, p.lb[j] - x[j]));
            r = std::max(r, std::abs(m.bound_lower[j] * (x[j] - p.lb[j])));
        }
        if (std::isfinite(p.ub[j])) {
            r = std::max(r, std::max(0.0, x[j] - p.ub[j]));
            r = std::max(r, std::abs(m.bound_upper[j] * (p.ub[j] - x[j])));
        }
    }
    return r;
}

namespace nlp_detail {

inline double constraint_violation(const NlpProblem& p, const VectorXd& ceq,
                                   const VectorXd& cin) {
    double v = 0.0;
    for (int i = 0; i < ceq.size(); ++i) v = std::max(v, std::abs(ceq[i]));
    for (int i = 0; i < cin.size(); ++i) {
        if (std::isfinite(p.ineq_lower[i])) v = std::max(v, p.ineq_lower[i] - cin[i]);
        if (std::isfinite(p.ineq_upper[i])) v = std::max(v, cin[i] - p.ineq_upper[i]);
    }
    return std::max(v, 0.0);
}

inline double l1_infeasibility(const NlpProblem& p, const VectorXd& ceq, const VectorXd& cin) {
    double s = ceq.cwiseAbs().sum();
    for (int i = 0; i < cin.size(); ++i) {
        if (std::isfinite(p.ineq_lower[i])) s += std::max(0.0, p.ineq_lower[i] - cin[i]);
        if (std::isfinite(p.ineq_upper[i])) s += std::max(0.0, cin[i] - p.ineq_upper[i]);
    }
    return s;
}

/// Elastic QP: equality rows get slack pairs with a linear penalty so an
/// inconsistent linearization still yields a useful step.
inline QpResult qp_solve_elastic(const MatrixXd& H, const VectorXd& g, const MatrixXd& A_eq,
                                 const VectorXd& b_eq, const MatrixXd& A_in,
                                 const VectorXd& in_lo, const VectorXd& in_up,
                                 const VectorXd& d_lo, const VectorXd& d_up) {
    const int n = static_cast<int>(g.size());
    const int m_eq = static_cast<int>(b_eq.size());
    const int ne = n + 2 * m_eq;
    // Unit slack curvature keeps the Schur complement well conditioned; the
    // linear 1e4 weight still dominates and drives the slacks to zero.
    MatrixXd He = MatrixXd::Identity(ne, ne);
    He.topLeftCorner(n, n) = H;
    VectorXd ge(ne);
    ge.head(n) = g;
    ge.tail(2 * m_eq).setConstant(1e4);
    MatrixXd Ae(m_eq, ne);
    Ae.leftCols(n) = A_eq;
    Ae.middleCols(n, m_eq) = -MatrixXd::Identity(m_eq, m_eq);
    Ae.rightCols(m_eq) = MatrixXd::Identity(m_eq, m_eq);
    MatrixXd Aine(in_lo.size(), ne);
    Aine.setZero();
    Aine.leftCols(n) = A_in;
    VectorXd lo_e(ne), up_e(ne);
    lo_e.head(n) = d_lo;
    up_e.head(n) = d_up;
    lo_e.tail(2 * m_eq).setZero();
    up_e.tail(2 * m_eq).setConstant(kInf);
    QpResult r = qp_solve(He, ge, Ae, b_eq, Aine, in_lo, in_up, lo_e, up_e, nullptr);
    QpResult out;
    out.d = r.d.head(n);
    out.eq_mult = r.eq_mult;
    out.row_mult_lower = r.row_mult_lower;
    out.row_mult_upper = r.row_mult_upper;
    out.bound_mult_lower = r.bound_mult_lower.head(n);
    out.bound_mult_upper = r.bound_mult_upper.head(n);
    return out;
}

}  // namespace nlp_detail

/// BFGS update with Powell damping: y is blended toward B·s whenever the
/// curvature condition sᵀy >= 0.2·sᵀBs fails, so B stays positive definite.
inline void damped_bfgs_update(MatrixXd& B, const VectorXd& s, VectorXd y) {
    const VectorXd Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs <= 0.0) return;
    const double sy = s.dot(y);
    if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        y = theta * y + (1.0 - theta) * Bs;
    }
    const double sy_damped = s.dot(y);
    if (sy_damped > 1e-14)
        B += -(Bs * Bs.transpose()) / sBs + (y * y.transpose()) / sy_damped;
}

/// Sequential quadratic programming with a damped-BFGS (or Gauss-Newton)
/// Hessian, L1 exact-penalty backtracking line search, and elastic handling
/// of inconsistent linearizations.
inline NlpSolution solve_sqp(const NlpProblem& p, const VectorXd& x0,
                             const SolverSettings& settings = {}) {
    using namespace nlp_detail;
    NlpSolution sol;
    VectorXd x = x0;
    for (int i = 0; i < p.n; ++i) {
        const double clipped = std::clamp(x[i], p.lb[i], p.ub[i]);
        if (clipped != x[i]) sol.clipped_start = true;
        x[i] = clipped;
    }

    VectorXd ceq = eval_eq(p, x);
    VectorXd cin = eval_ineq(p, x);
    double f = p.cost(x);
    const int m_eq = static_cast<int>(ceq.size());
    const int m_in = static_cast<int>(cin.size());

    NlpMultipliers mult;
    mult.eq = VectorXd::Zero(m_eq);
    mult.ineq_lower = VectorXd::Zero(m_in);
    mult.ineq_upper = VectorXd::Zero(m_in);
    mult.bound_lower = VectorXd::Zero(p.n);
    mult.bound_upper = VectorXd::Zero(p.n);

    MatrixXd B = MatrixXd::Identity(p.n, p.n);  // BFGS approximation
    double mu = 1.0;                            // L1 penalty parameter
    double last_alpha = 0.0;
    double lm_damping = 0.0;  // extra Gauss-Newton ridge, line-search driven
    bool bfgs_was_reset = false;
    std::vector<int> warm_active;

    for (int iter = 0; iter < settings.max_iterations; ++iter) {
        sol.iterations = iter;
        const VectorXd grad = eval_grad(p, x);
        const MatrixXd Jeq = eval_eq_jac(p, x);
        const MatrixXd Jin = eval_ineq_jac(p, x);

        sol.kkt_residual = kkt_residual(p, x, mult);
        sol.constraint_violation = constraint_violation(p, ceq, cin);
        if (settings.verbose)
            (*settings.log) << "iter " << iter << ", cost " << f << ", kkt "
                            << sol.kkt_residual << ", viol " << sol.constraint_violation
                            << ", step " << last_alpha << std::endl;
        if (sol.kkt_residual <= settings.kkt_tol &&
            sol.constraint_violation <= settings.constraint_tol) {
            sol.status = SolveStatus::Converged;
            break;
        }

        // The Gauss-Newton surrogate carries the equality rows' sensitivity
        // scale exactly and, when the cost declares its least-squares
        // structure, the cost curvature as 2·JᵣᵀJᵣ. The ridge covers the
        // remaining null space and is adapted from line-search feedback in
        // the Levenberg-Marquardt fashion.
        const bool gauss_newton =
            settings.hessian == HessianMode::GaussNewtonDefects && m_eq > 0;
        MatrixXd H;
        if (gauss_newton) {
            H = Jeq.transpose() * Jeq +
                (1e-4 + lm_damping) * MatrixXd::Identity(p.n, p.n);
            if (p.cost_residuals) {
                const MatrixXd Jr = fd_jacobian(p.cost_residuals, x);
                H += 2.0 * Jr.transpose() * Jr;
            }
        } else {
            H = B;
        }

        QpResult qp;
        try {
            try {
                qp = qp_solve(H, grad, Jeq, -ceq, Jin, p.ineq_lower - cin, p.ineq_upper - cin,
                              p.lb - x, p.ub - x, &warm_active);
            } catch (const QpInfeasible&) {
                qp = qp_solve_elastic(H, grad, Jeq, -ceq, Jin, p.ineq_lower - cin,
                                      p.ineq_upper - cin, p.lb - x, p.ub - x);
            }
        } catch (const std::runtime_error&) {
            // A stale curvature estimate or warm start can wedge the QP;
            // one retry from scratch before conceding.
            if (!bfgs_was_reset) {
                B = MatrixXd::Identity(p.n, p.n);
                warm_active.clear();
                bfgs_was_reset = true;
                continue;
            }
            sol.status = SolveStatus::QpFailureStatus;
            break;
        }

        mult.eq = qp.eq_mult;
        mult.ineq_lower = qp.row_mult_lower;
        mult.ineq_upper = qp.row_mult_upper;
        mult.bound_lower = qp.bound_mult_lower;
        mult.bound_upper = qp.bound_mult_upper;

        double mult_norm = 0.0;
        for (const VectorXd* mv :
             {&mult.eq, &mult.ineq_lower, &mult.ineq_upper, &mult.bound_lower,
              &mult.bound_upper})
            if (mv->size() > 0) mult_norm = std::max(mult_norm, mv->cwiseAbs().maxCoeff());
        mu = std::max(mu, 1.1 * mult_norm);

        const double step_norm = qp.d.size() > 0 ? qp.d.cwiseAbs().maxCoeff() : 0.0;
        if (step_norm < 1e-14) {
            // Stationary: loop once more so the fresh multipliers are judged
            // by the convergence test.
            ceq = eval_eq(p, x);
            cin = eval_ineq(p, x);
            sol.merit_history.push_back(f + mu * l1_infeasibility(p, ceq, cin));
            continue;
        }

        const double merit0 = f + mu * l1_infeasibility(p, ceq, cin);
        // Directional derivative bound of the L1 merit along d.
        const double ddir = grad.dot(qp.d) - mu * l1_infeasibility(p, ceq, cin);
        const auto try_point = [&](const VectorXd& xt, double armijo_alpha, double& merit_out,
                                   double& f_out, VectorXd& ceq_out, VectorXd& cin_out) {
            f_out = p.cost(xt);
            ceq_out = eval_eq(p, xt);
            cin_out = eval_ineq(p, xt);
            merit_out = f_out + mu * l1_infeasibility(p, ceq_out, cin_out);
            return std::isfinite(merit_out) &&
                   merit_out <= merit0 + 1e-4 * armijo_alpha * std::min(ddir, 0.0);
        };

        double alpha = 1.0;
        double f_new = f, merit_new = merit0;
        VectorXd x_new = x, ceq_new = ceq, cin_new = cin;
        VectorXd step = qp.d;
        bool accepted = try_point(x + qp.d, 1.0, merit_new, f_new, ceq_new, cin_new);
        if (accepted) {
            x_new = x + qp.d;
        } else if (m_eq > 0) {
            // Second-order correction: a least-norm shift cancelling the
            // constraint values at the trial point rescues full steps the L1
            // merit would otherwise reject near the constraint manifold.
            try {
                const VectorXd c_trial = eval_eq(p, VectorXd(x + qp.d));
                const MatrixXd none_rows(0, p.n);
                const VectorXd none;
                const QpResult soc = qp_solve(
                    MatrixXd::Identity(p.n, p.n), VectorXd::Zero(p.n), Jeq, -c_trial,
                    none_rows, none, none, p.lb - x - qp.d, p.ub - x - qp.d, nullptr);
                if (try_point(x + qp.d + soc.d, 1.0, merit_new, f_new, ceq_new, cin_new)) {
                    accepted = true;
                    x_new = x + qp.d + soc.d;
                    step = qp.d + soc.d;
                }
            } catch (const std::runtime_error&) {
                // Correction unavailable; fall through to backtracking.
            }
        }
        while (!accepted && (alpha *= 0.5) >= 1e-10) {
            if (try_point(x + alpha * qp.d, alpha, merit_new, f_new, ceq_new, cin_new)) {
                accepted = true;
                x_new = x + alpha * qp.d;
                step = alpha * qp.d;
            }
        }
        bool env_accept = false;
        if ((m_eq + m_in) > 0 && (!accepted || alpha < 1e-2)) {
            // Chronic backtracking starves BFGS of full-length secant pairs
            // and the iterates creep.  Permit the full step whenever it stays
            // under the envelope of recent merit values (non-monotone rule).
            double merit_ref = merit0;
            const size_t hist = sol.merit_history.size();
            for (size_t k = hist > 8 ? hist - 8 : 0; k < hist; ++k)
                merit_ref = std::max(merit_ref, sol.merit_history[k]);
            const VectorXd x_full = x + qp.d;
            const double f_full = p.cost(x_full);
            const VectorXd ceq_full = eval_eq(p, x_full);
            const VectorXd cin_full = eval_ineq(p, x_full);
            const double merit_full = f_full + mu * l1_infeasibility(p, ceq_full, cin_full);
            if (std::isfinite(merit_full) &&
                merit_full <= merit_ref + 1e-4 * std::min(ddir, 0.0)) {
                accepted = true;
                env_accept = true;
                alpha = 1.0;
                x_new = x_full;
                step = qp.d;
                f_new = f_full;
                merit_new = merit_full;
                ceq_new = ceq_full;
                cin_new = cin_full;
            }
        }
        if (!accepted) {
            if (gauss_newton && lm_damping < 1e5) {
                // Stronger ridge, shorter step: retry in place.
                lm_damping = std::min(1e6, std::max(16.0 * lm_damping, 1.0));
                continue;
            }
            // One fresh-curvature retry per stall before giving up.
            if (!gauss_newton && !bfgs_was_reset) {
                B = MatrixXd::Identity(p.n, p.n);
                bfgs_was_reset = true;
                continue;
            }
            sol.status = SolveStatus::LineSearchFailure;
            break;
        }
        bfgs_was_reset = false;
        last_alpha = alpha;
        if (gauss_newton) {
            // Levenberg-Marquardt ridge control: short or envelope-only
            // steps raise it, clean full steps relax it.
            if (env_accept || alpha < 0.25)
                lm_damping = std::min(1e6, std::max(4.0 * lm_damping, 1e-2));
            else if (alpha >= 1.0) {
                lm_damping /= 3.0;
                if (lm_damping < 1e-8) lm_damping = 0.0;
            }
        }
        sol.merit_history.push_back(merit_new);

        if (settings.hessian == HessianMode::DampedBfgs) {
            // Secant pair from the Lagrangian gradient at the new multipliers.
            const VectorXd grad_new = eval_grad(p, x_new);
            const MatrixXd Jeq_new = eval_eq_jac(p, x_new);
            const MatrixXd Jin_new = eval_ineq_jac(p, x_new);
            const auto lag_grad = [&](const VectorXd& gr, const MatrixXd& Je,
                                      const MatrixXd& Ji) {
                VectorXd gl = gr;
                if (m_eq > 0) gl -= Je.transpose() * mult.eq;
                if (m_in > 0) gl += Ji.transpose() * (mult.ineq_upper - mult.ineq_lower);
                gl += mult.bound_upper - mult.bound_lower;
                return gl;
            };
            const VectorXd s = x_new - x;
            const VectorXd y =
                lag_grad(grad_new, Jeq_new, Jin_new) - lag_grad(grad, Jeq, Jin);
            damped_bfgs_update(B, s, y);
        }

        x = x_new;
        f = f_new;
        ceq = ceq_new;
        cin = cin_new;
        if (iter + 1 == settings.max_iterations) sol.iterations = iter + 1;
    }

    // Final bookkeeping (also covers loop exhaustion).  The working-set
    // solves honor bounds only to their residual tolerance, so snap the
    // iterate onto the box before the reported quantities are recomputed.
    for (int i = 0; i < p.n; ++i) x[i] = std::clamp(x[i], p.lb[i], p.ub[i]);
    ceq = eval_eq(p, x);
    cin = eval_ineq(p, x);
    sol.x = x;
    sol.mult = mult;
    sol.cost = p.cost(x);
    sol.kkt_residual = kkt_residual(p, x, mult);
    sol.constraint_violation = constraint_violation(p, ceq, cin);
    if (sol.status == SolveStatus::MaxIter && sol.kkt_residual <= settings.kkt_tol &&
        sol.constraint_violation <= settings.constraint_tol)
        sol.status = SolveStatus::Converged;
    return sol;
}

}  // namespace exosim

#endif  // EXOSIM_NLP_HPP
