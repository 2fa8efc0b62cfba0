/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/ocp.hpp                                             *
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
#ifndef EXOSIM_OCP_HPP
#define EXOSIM_OCP_HPP

#include <atomic>
#include <cstdlib>
#include <memory>
#include <thread>

#include "exosim/contact.hpp"
#include "exosim/exoskeleton.hpp"
#include "exosim/muscle.hpp"
#include "exosim/nlp.hpp"

namespace exosim {

// ------------------------------------------------------------- problem types

/// Velocity projection applied when entering a stage.
enum class TransitionKind { None, ImpactMap };

/// Scalar path quantity bounded at every shooting node of a stage.
struct PathConstraint {
    enum class Kind { ContactForce, State, Control };
    Kind kind = Kind::ContactForce;
    int index = 0;  ///< lambda row / state index / control index
    double lower = -kInf;
    double upper = kInf;
};

/// Equality constraint pinned to a stage's first or last node state.
struct BoundaryConstraint {
    bool at_end = true;
    int dim = 0;
    std::function<VectorXd(const VectorXd& x)> fn;
};

/// One phase of the motion: a fixed contact set, its own shooting grid, and a
/// free duration within bounds.
struct Stage {
    std::vector<ContactPoint> contacts;
    std::vector<CompliantContact> compliant_contacts;
    double duration_lower = 0.1;  ///< s
    double duration_upper = 1.0;  ///< s
    int n_shooting_intervals = 10;
    std::vector<PathConstraint> path_constraints;
    std::vector<BoundaryConstraint> boundary_constraints;
    TransitionKind transition = TransitionKind::None;
};

/// Quadratic penalty on one component of the final state.
struct TerminalCostTerm {
    int state_index = 0;
    double target = 0.0;
    double weight = 0.0;
};

struct OcpCost {
    double w_excitation = 0.0;  ///< weight on ‖e‖² in the running cost
    double w_actuator = 0.0;    ///< weight on ‖u_act‖² in the running cost
    double w_time = 0.0;        ///< weight on total duration
    std::vector<TerminalCostTerm> terminal;
};

/// Multi-stage optimal control problem. State layout x = [q; q̇; a...] with
/// two activations per muscle pair (agonist first); control layout
/// u = [e...; u_act...] with one actuator command per exo element.
struct OcProblem {
    MultibodyModel model;
    std::vector<MusclePair> muscles;
    std::vector<ExoElement> exo;
    ExoDesignSpace design_space;  ///< empty: all parameters fixed
    std::vector<Stage> stages;
    OcpCost cost;
    VectorXd initial_state;
    std::vector<VectorXd> guess_anchors;  ///< S+1 states; empty: hold initial
    VectorXd state_lower, state_upper;    ///< per-state bounds; empty: free
    int rk4_substeps = 10;
};

inline int state_dim(const OcProblem& p) {
    return p.model.nq + p.model.nv + 2 * static_cast<int>(p.muscles.size());
}

inline int control_dim(const OcProblem& p) {
    return 2 * static_cast<int>(p.muscles.size()) + static_cast<int>(p.exo.size());
}

namespace ocp_detail {

/// Position slot of a single-DoF joint owning velocity slot dq.
inline int q_slot_of_dq(const MultibodyModel& model, int dq) {
    for (const auto& j : model.joints)
        if (!j.floating && j.dq_offset == dq) return j.q_offset;
    throw std::invalid_argument("coordinate " + std::to_string(dq) +
                                " is not a revolute degree of freedom");
}

/// Design space normalized to one all-fixed block per element when empty.
inline ExoDesignSpace effective_space(const OcProblem& p) {
    if (!p.design_space.params.empty()) return p.design_space;
    ExoDesignSpace s;
    s.params.resize(p.exo.size());
    return s;
}

}  // namespace ocp_detail

inline void validate_problem(const OcProblem& p) {
    if (p.stages.empty()) throw std::invalid_argument("problem: at least one stage required");
    const int nx = state_dim(p);
    for (size_t k = 0; k < p.muscles.size(); ++k) {
        const auto& pair = p.muscles[k];
        const std::string what = "muscle pair " + std::to_string(k);
        validate_muscle(pair.agonist, what + " agonist");
        validate_muscle(pair.antagonist, what + " antagonist");
        if (pair.agonist.sign != 1.0 || pair.antagonist.sign != -1.0)
            throw std::invalid_argument(what + ": agonist needs sign +1, antagonist -1");
        if (pair.agonist.dof_index != pair.antagonist.dof_index)
            throw std::invalid_argument(what + ": both muscles must share one DoF");
        ocp_detail::q_slot_of_dq(p.model, pair.agonist.dof_index);
    }
    for (size_t k = 0; k < p.exo.size(); ++k) {
        validate_element(p.model, p.exo[k], "exo element " + std::to_string(k));
        ocp_detail::q_slot_of_dq(p.model, p.exo[k].dof_index);
    }
    validate_design_space(ocp_detail::effective_space(p), p.exo);
    for (size_t i = 0; i < p.stages.size(); ++i) {
        const auto& st = p.stages[i];
        const std::string what = "stage " + std::to_string(i);
        if (!(st.duration_lower > 0.0 && st.duration_lower <= st.duration_upper))
            throw std::invalid_argument(what + ": need 0 < duration lower <= upper");
        if (st.n_shooting_intervals < 1)
            throw std::invalid_argument(what + ": at least one shooting interval");
        for (const auto& c : st.contacts) validate_contact(p.model, c);
        for (const auto& pc : st.path_constraints) {
            const int limit = pc.kind == PathConstraint::Kind::ContactForce
                                  ? contact_rows(st.contacts)
                                  : pc.kind == PathConstraint::Kind::State ? nx
                                                                           : control_dim(p);
            if (pc.index < 0 || pc.index >= limit)
                throw std::invalid_argument(what + ": path constraint index out of range");
            if (!(pc.lower <= pc.upper))
                throw std::invalid_argument(what + ": path constraint bounds inverted");
        }
        for (const auto& bc : st.boundary_constraints)
            if (!bc.fn || bc.dim < 1)
                throw std::invalid_argument(what + ": boundary constraint needs fn and dim");
        if (i == 0 && st.transition != TransitionKind::None)
            throw std::invalid_argument("stage 0: no incoming transition allowed");
    }
    if (p.cost.w_excitation < 0.0 || p.cost.w_actuator < 0.0 || p.cost.w_time < 0.0)
        throw std::invalid_argument("cost: weights must be nonnegative");
    double weight_sum = p.cost.w_excitation + p.cost.w_actuator + p.cost.w_time;
    for (const auto& t : p.cost.terminal) {
        if (t.weight < 0.0) throw std::invalid_argument("cost: terminal weight negative");
        if (t.state_index < 0 || t.state_index >= nx)
            throw std::invalid_argument("cost: terminal state index out of range");
        weight_sum += t.weight;
    }
    if (weight_sum == 0.0) throw std::invalid_argument("cost: all weights are zero");
    if (p.initial_state.size() != nx)
        throw std::invalid_argument("initial state: expected dimension " + std::to_string(nx));
    if (!p.guess_anchors.empty() && p.guess_anchors.size() != p.stages.size() + 1)
        throw std::invalid_argument("guess anchors: need one per stage boundary");
    for (const auto& g : p.guess_anchors)
        if (g.size() != nx) throw std::invalid_argument("guess anchor: wrong dimension");
    if (p.state_lower.size() != 0 && p.state_lower.size() != nx)
        throw std::invalid_argument("state bounds: wrong dimension");
    if (p.state_upper.size() != 0 && p.state_upper.size() != nx)
        throw std::invalid_argument("state bounds: wrong dimension");
    if (p.rk4_substeps < 1) throw std::invalid_argument("rk4 substeps must be >= 1");
    p.model.check_q(p.initial_state.head(p.model.nq));
}

namespace ocp_detail {

/// Model and element set with a design vector applied.
struct DesignContext {
    MultibodyModel model;
    std::vector<ExoElement> elements;
};

inline DesignContext make_context(const OcProblem& p, const VectorXd& design) {
    DesignContext ctx;
    ctx.elements = design.size() > 0
                       ? unpack_design_parameters(effective_space(p), p.exo, design)
                       : p.exo;
    ctx.model = attach_exo(p.model, ctx.elements);
    return ctx;
}

struct DynamicsEval {
    VectorXd xdot;
    VectorXd lambda;  ///< contact force per constrained direction
    VectorXd tau;     ///< generalized forces (muscle + exo)
};

/// Full dynamics evaluation: splits the state/control layouts, assembles
/// muscle and exo torques, and runs the constrained forward dynamics.
/// Activations, excitations, and actuator commands are folded back into
/// their closed sets so finite-difference probes and integrator overshoot
/// stay valid inputs for the torque models.
inline DynamicsEval eval_dynamics(const OcProblem& p, const Stage& stage,
                                  const DesignContext& ctx, const VectorXd& x,
                                  const VectorXd& u) {
    const int nq = p.model.nq, nv = p.model.nv;
    const int m = 2 * static_cast<int>(p.muscles.size());
    if (x.size() != state_dim(p)) throw std::invalid_argument("state dimension mismatch");
    if (u.size() != control_dim(p)) throw std::invalid_argument("control dimension mismatch");

    const VectorXd q = x.head(nq);
    const VectorXd v = x.segment(nq, nv);
    VectorXd tau = VectorXd::Zero(nv);
    for (size_t k = 0; k < p.muscles.size(); ++k) {
        const auto& pair = p.muscles[k];
        const int dq = pair.agonist.dof_index;
        const int qs = q_slot_of_dq(p.model, dq);
        const double a_ag = std::clamp(x[nq + nv + 2 * static_cast<int>(k)], 0.0, 1.0);
        const double a_an = std::clamp(x[nq + nv + 2 * static_cast<int>(k) + 1], 0.0, 1.0);
        tau[dq] += total_torque(pair, q[qs], v[dq], a_ag, a_an);
    }
    for (size_t k = 0; k < ctx.elements.size(); ++k) {
        const auto& e = ctx.elements[k];
        const int qs = q_slot_of_dq(p.model, e.dof_index);
        const double u_act = std::clamp(u[m + static_cast<int>(k)], -1.0, 1.0);
        tau[e.dof_index] += exo_torque(e, q[qs], v[e.dof_index], u_act);
    }

    ExternalForces fext;
    add_compliant_forces(ctx.model, q, v, stage.compliant_contacts, fext);
    const ConstrainedDynamics cd =
        constrained_forward_dynamics(ctx.model, q, v, tau, stage.contacts, fext);

    DynamicsEval out;
    out.xdot.resize(x.size());
    out.xdot.head(nq) = position_derivative(p.model, q, v);
    out.xdot.segment(nq, nv) = cd.qdd;
    for (size_t k = 0; k < p.muscles.size(); ++k) {
        const int sa = nq + nv + 2 * static_cast<int>(k);
        const double e_ag = std::clamp(u[2 * k], 0.0, 1.0);
        const double e_an = std::clamp(u[2 * k + 1], 0.0, 1.0);
        const auto& pair = p.muscles[k];
        out.xdot[sa] = activation_rate(e_ag, std::clamp(x[sa], 0.0, 1.0), pair.agonist.tc_a,
                                       pair.agonist.tc_d);
        out.xdot[sa + 1] = activation_rate(e_an, std::clamp(x[sa + 1], 0.0, 1.0),
                                           pair.antagonist.tc_a, pair.antagonist.tc_d);
    }
    out.lambda = cd.lambda;
    out.tau = tau;
    return out;
}

}  // namespace ocp_detail

/// Time derivative of the OCP state under a stage's dynamics.
inline VectorXd state_derivative(const OcProblem& p, const Stage& stage, const VectorXd& x,
                                 const VectorXd& u, const VectorXd& design = VectorXd()) {
    const auto ctx = ocp_detail::make_context(p, design);
    return ocp_detail::eval_dynamics(p, stage, ctx, x, u).xdot;
}

/// Classic fixed-step RK4 for a generic time-dependent right-hand side.
/// Throws when a step produces a non-finite state, naming the step.
template <class F>
VectorXd rk4_integrate(F&& f, VectorXd x, double t0, double h, int n_steps) {
    if (!(h > 0.0)) throw std::invalid_argument("rk4: step length must be positive");
    if (n_steps < 1) throw std::invalid_argument("rk4: need at least one step");
    const double hs = h / n_steps;
    for (int s = 0; s < n_steps; ++s) {
        const double t = t0 + s * hs;
        const VectorXd k1 = f(t, x);
        const VectorXd k2 = f(t + 0.5 * hs, VectorXd(x + 0.5 * hs * k1));
        const VectorXd k3 = f(t + 0.5 * hs, VectorXd(x + 0.5 * hs * k2));
        const VectorXd k4 = f(t + hs, VectorXd(x + hs * k3));
        x += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite())
            throw std::runtime_error("integration diverged at step " + std::to_string(s));
    }
    return x;
}

/// Integrates one shooting segment of length h with the control interpolated
/// linearly from u_start to u_end.
inline VectorXd integrate_segment(const OcProblem& p, const Stage& stage, const VectorXd& x0,
                                  const VectorXd& u_start, const VectorXd& u_end, double h,
                                  int n_steps, const VectorXd& design = VectorXd()) {
    const auto ctx = ocp_detail::make_context(p, design);
    const auto f = [&](double t, const VectorXd& x) {
        const double w = std::clamp(t / h, 0.0, 1.0);
        const VectorXd u = (1.0 - w) * u_start + w * u_end;
        return ocp_detail::eval_dynamics(p, stage, ctx, x, u).xdot;
    };
    return rk4_integrate(f, x0, 0.0, h, n_steps);
}

// ------------------------------------------------------------- transcription

/// Index map from (stage, node/interval) to slices of the flat NLP vector.
/// Variable order: all node states stage by stage, then per-interval control
/// endpoint pairs [u_start; u_end], then stage durations, then design
/// parameters.
struct OcpLayout {
    int nx = 0, nu = 0, np = 0;
    int n_vars = 0;
    std::vector<std::vector<int>> state_off;    ///< [stage][node]
    std::vector<std::vector<int>> control_off;  ///< [stage][interval]
    std::vector<int> duration_off;              ///< [stage]
    int param_off = 0;

    VectorXd state(const VectorXd& z, int i, int j) const {
        return z.segment(state_off[i][j], nx);
    }
    VectorXd u_start(const VectorXd& z, int i, int j) const {
        return z.segment(control_off[i][j], nu);
    }
    VectorXd u_end(const VectorXd& z, int i, int j) const {
        return z.segment(control_off[i][j] + nu, nu);
    }
    double duration(const VectorXd& z, int i) const { return z[duration_off[i]]; }
    VectorXd params(const VectorXd& z) const { return z.segment(param_off, np); }
    /// Control value seen at a node (left limit except at the stage start).
    VectorXd node_control(const VectorXd& z, int i, int j) const {
        const int n_int = static_cast<int>(control_off[i].size());
        return j < n_int ? u_start(z, i, j) : u_end(z, i, n_int - 1);
    }
};

inline OcpLayout build_layout(const OcProblem& p) {
    OcpLayout lay;
    lay.nx = state_dim(p);
    lay.nu = control_dim(p);
    lay.np = static_cast<int>(
        pack_design_parameters(ocp_detail::effective_space(p), p.exo).values.size());
    int off = 0;
    for (const auto& st : p.stages) {
        lay.state_off.emplace_back();
        for (int j = 0; j <= st.n_shooting_intervals; ++j) {
            lay.state_off.back().push_back(off);
            off += lay.nx;
        }
    }
    for (const auto& st : p.stages) {
        lay.control_off.emplace_back();
        for (int j = 0; j < st.n_shooting_intervals; ++j) {
            lay.control_off.back().push_back(off);
            off += 2 * lay.nu;
        }
    }
    for (size_t i = 0; i < p.stages.size(); ++i) {
        lay.duration_off.push_back(off);
        off += 1;
    }
    lay.param_off = off;
    off += lay.np;
    lay.n_vars = off;
    return lay;
}

namespace ocp_detail {

/// Shared transcription state captured by the NLP callbacks.
struct Core {
    OcProblem problem;
    OcpLayout lay;
    DesignVector design;

    // Equality row blocks in emission order, with their variable dependencies
    // for the structured finite-difference Jacobian.
    struct EqBlock {
        enum Kind { InitialState, Defect, Transition, ControlC0, Boundary } kind;
        int stage = 0;
        int interval = 0;  ///< Defect: interval; Boundary: constraint index
        int row = 0, dim = 0;
    };
    std::vector<EqBlock> eq_blocks;
    int n_eq = 0;

    struct IneqBlock {
        int stage = 0, node = 0, constraint = 0;
        int row = 0;
    };
    std::vector<IneqBlock> ineq_blocks;
    int n_ineq = 0;
    VectorXd ineq_lower, ineq_upper;
};

inline VectorXd defect_residual(const Core& c, const VectorXd& z, int i, int j) {
    const auto& st = c.problem.stages[i];
    const double h = c.lay.duration(z, i) / st.n_shooting_intervals;
    const VectorXd x_end =
        integrate_segment(c.problem, st, c.lay.state(z, i, j), c.lay.u_start(z, i, j),
                          c.lay.u_end(z, i, j), h, c.problem.rk4_substeps, c.lay.params(z));
    return x_end - c.lay.state(z, i, j + 1);
}

/// State carried into stage i from the end of stage i-1 (impact applied to
/// the velocity block when requested; positions and activations carry over).
inline VectorXd transition_state(const Core& c, const VectorXd& z, int i) {
    const auto& prev = c.problem.stages[i - 1];
    VectorXd x = c.lay.state(z, i - 1, prev.n_shooting_intervals);
    if (c.problem.stages[i].transition == TransitionKind::ImpactMap) {
        const auto ctx = make_context(c.problem, c.lay.params(z));
        const int nq = c.problem.model.nq, nv = c.problem.model.nv;
        x.segment(nq, nv) =
            impact_map(ctx.model, x.head(nq), x.segment(nq, nv), c.problem.stages[i].contacts);
    }
    return x;
}

inline VectorXd transition_residual(const Core& c, const VectorXd& z, int i) {
    return c.lay.state(z, i, 0) - transition_state(c, z, i);
}

inline VectorXd boundary_residual(const Core& c, const VectorXd& z, int i, int k) {
    const auto& bc = c.problem.stages[i].boundary_constraints[k];
    const int node = bc.at_end ? c.problem.stages[i].n_shooting_intervals : 0;
    const VectorXd r = bc.fn(c.lay.state(z, i, node));
    if (r.size() != bc.dim)
        throw std::invalid_argument("boundary constraint returned wrong dimension");
    return r;
}

inline double path_value(const Core& c, const VectorXd& z, int i, int node, int k) {
    const auto& st = c.problem.stages[i];
    const auto& pc = st.path_constraints[k];
    const VectorXd x = c.lay.state(z, i, node);
    const VectorXd u = c.lay.node_control(z, i, node);
    switch (pc.kind) {
        case PathConstraint::Kind::State: return x[pc.index];
        case PathConstraint::Kind::Control: return u[pc.index];
        default: {
            const auto ctx = make_context(c.problem, c.lay.params(z));
            return eval_dynamics(c.problem, st, ctx, x, u).lambda[pc.index];
        }
    }
}

inline VectorXd eval_equalities(const Core& c, const VectorXd& z) {
    VectorXd r(c.n_eq);
    for (const auto& b : c.eq_blocks) {
        switch (b.kind) {
            case Core::EqBlock::InitialState:
                r.segment(b.row, b.dim) = c.lay.state(z, 0, 0) - c.problem.initial_state;
                break;
            case Core::EqBlock::Defect:
                r.segment(b.row, b.dim) = defect_residual(c, z, b.stage, b.interval);
                break;
            case Core::EqBlock::Transition:
                r.segment(b.row, b.dim) = transition_residual(c, z, b.stage);
                break;
            case Core::EqBlock::ControlC0:
                r.segment(b.row, b.dim) =
                    c.lay.u_start(z, b.stage, 0) -
                    c.lay.u_end(z, b.stage - 1,
                                c.problem.stages[b.stage - 1].n_shooting_intervals - 1);
                break;
            case Core::EqBlock::Boundary:
                r.segment(b.row, b.dim) = boundary_residual(c, z, b.stage, b.interval);
                break;
        }
    }
    return r;
}

inline VectorXd eval_inequalities(const Core& c, const VectorXd& z) {
    VectorXd r(c.n_ineq);
    for (const auto& b : c.ineq_blocks)
        r[b.row] = path_value(c, z, b.stage, b.node, b.constraint);
    return r;
}

inline double eval_cost(const Core& c, const VectorXd& z) {
    const auto& cost = c.problem.cost;
    const int m = 2 * static_cast<int>(c.problem.muscles.size());
    double J = 0.0;
    for (size_t i = 0; i < c.problem.stages.size(); ++i) {
        const auto& st = c.problem.stages[i];
        const double T = c.lay.duration(z, static_cast<int>(i));
        const double h = T / st.n_shooting_intervals;
        const auto integrand = [&](const VectorXd& u) {
            return cost.w_excitation * u.head(m).squaredNorm() +
                   cost.w_actuator * u.tail(c.lay.nu - m).squaredNorm();
        };
        for (int j = 0; j < st.n_shooting_intervals; ++j)
            J += 0.5 * h *
                 (integrand(c.lay.u_start(z, static_cast<int>(i), j)) +
                  integrand(c.lay.u_end(z, static_cast<int>(i), j)));
        J += cost.w_time * T;
    }
    const int last = static_cast<int>(c.problem.stages.size()) - 1;
    const VectorXd x_final =
        c.lay.state(z, last, c.problem.stages[last].n_shooting_intervals);
    for (const auto& t : cost.terminal) {
        const double d = x_final[t.state_index] - t.target;
        J += t.weight * d * d;
    }
    return J;
}

}  // namespace ocp_detail

/// Constraint Jacobians and cost gradient at a point. Entries outside the
/// transcription's dependency pattern are exact zeros.
struct OcpDerivatives {
    MatrixXd eq_jac;
    MatrixXd ineq_jac;
    VectorXd grad;
};

/// Transcribed problem: the generic NLP plus the layout needed to interpret
/// its variables. The core is shared with the NLP callbacks.
struct TranscribedNlp {
    std::shared_ptr<const ocp_detail::Core> core;
    NlpProblem nlp;

    const OcpLayout& layout() const { return core->lay; }
    const OcProblem& problem() const { return core->problem; }
    int n_equalities() const { return core->n_eq; }
    int n_inequalities() const { return core->n_ineq; }
};

namespace ocp_detail {

inline int fd_thread_count(int n_jobs) {
    if (const char* env = std::getenv("EXOSIM_THREADS")) {
        const int k = std::atoi(env);
        if (k >= 1) return std::min(k, n_jobs);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return std::min(n_jobs, hw == 0 ? 1 : static_cast<int>(hw));
}

/// Runs jobs [0, n) on a deterministic result: every job writes only its own
/// output slot, so the assembled matrices are independent of scheduling.
template <class Fn>
void run_jobs(int n_jobs, Fn&& fn) {
    const int n_threads = fd_thread_count(n_jobs);
    if (n_threads <= 1) {
        for (int j = 0; j < n_jobs; ++j) fn(j);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (int j = next.fetch_add(1); j < n_jobs; j = next.fetch_add(1)) fn(j);
        });
    for (auto& th : pool) th.join();
}

/// Forward-difference block of a vector function with respect to selected
/// columns of z.
template <class Fn>
void fd_block(MatrixXd& out, int row0, const std::vector<int>& cols, const VectorXd& z,
              const VectorXd& r0, Fn&& eval) {
    VectorXd zp = z;
    for (int col : cols) {
        const double h = fd_step_size(z[col]);
        zp[col] = z[col] + h;
        const VectorXd r = eval(zp);
        if (!r.allFinite())
            throw std::runtime_error("finite-difference probe produced non-finite values");
        out.block(row0, col, r.size(), 1) = (r - r0) / h;
        zp[col] = z[col];
    }
}

inline std::vector<int> block_cols(int offset, int len) {
    std::vector<int> cols(len);
    for (int k = 0; k < len; ++k) cols[k] = offset + k;
    return cols;
}

}  // namespace ocp_detail

/// Structured forward-difference derivatives. Each equality/inequality block
/// touches only the variables it depends on (its nodes, its stage duration,
/// and the design parameters); identity couplings are filled analytically.
/// Jobs are distributed over threads capped by EXOSIM_THREADS.
inline OcpDerivatives fd_jacobians(const TranscribedNlp& t, const VectorXd& z) {
    using namespace ocp_detail;
    const Core& c = *t.core;
    const OcpLayout& lay = c.lay;
    OcpDerivatives d;
    d.eq_jac = MatrixXd::Zero(c.n_eq, lay.n_vars);
    d.ineq_jac = MatrixXd::Zero(c.n_ineq, lay.n_vars);
    d.grad = VectorXd::Zero(lay.n_vars);

    const std::vector<int> param_cols = block_cols(lay.param_off, lay.np);

    // Assemble the job list first; every job owns disjoint output rows.
    std::vector<std::function<void()>> jobs;
    for (const auto& b : c.eq_blocks) {
        switch (b.kind) {
            case Core::EqBlock::InitialState:
                d.eq_jac.block(b.row, lay.state_off[0][0], lay.nx, lay.nx) =
                    MatrixXd::Identity(lay.nx, lay.nx);
                break;
            case Core::EqBlock::Defect: {
                d.eq_jac.block(b.row, lay.state_off[b.stage][b.interval + 1], lay.nx,
                               lay.nx) = -MatrixXd::Identity(lay.nx, lay.nx);
                jobs.push_back([&, b] {
                    std::vector<int> cols = block_cols(lay.state_off[b.stage][b.interval],
                                                       lay.nx);
                    const auto cu = block_cols(lay.control_off[b.stage][b.interval],
                                               2 * lay.nu);
                    cols.insert(cols.end(), cu.begin(), cu.end());
                    cols.push_back(lay.duration_off[b.stage]);
                    cols.insert(cols.end(), param_cols.begin(), param_cols.end());
                    // The -I at the next node is analytic; differentiate only
                    // the integrated end state.
                    const auto eval = [&](const VectorXd& zp) {
                        return VectorXd(defect_residual(c, zp, b.stage, b.interval) +
                                        lay.state(zp, b.stage, b.interval + 1));
                    };
                    fd_block(d.eq_jac, b.row, cols, z, eval(z), eval);
                });
                break;
            }
            case Core::EqBlock::Transition: {
                d.eq_jac.block(b.row, lay.state_off[b.stage][0], lay.nx, lay.nx) =
                    MatrixXd::Identity(lay.nx, lay.nx);
                const auto& prev = c.problem.stages[b.stage - 1];
                const int prev_off = lay.state_off[b.stage - 1][prev.n_shooting_intervals];
                if (c.problem.stages[b.stage].transition == TransitionKind::None) {
                    // Pure hand-off: the dependency on the previous end state
                    // is exactly -I.
                    d.eq_jac.block(b.row, prev_off, lay.nx, lay.nx) =
                        -MatrixXd::Identity(lay.nx, lay.nx);
                    break;
                }
                jobs.push_back([&, b, prev_off] {
                    std::vector<int> cols = block_cols(prev_off, lay.nx);
                    cols.insert(cols.end(), param_cols.begin(), param_cols.end());
                    const auto eval = [&](const VectorXd& zp) {
                        return VectorXd(-transition_state(c, zp, b.stage));
                    };
                    fd_block(d.eq_jac, b.row, cols, z, eval(z), eval);
                });
                break;
            }
            case Core::EqBlock::ControlC0: {
                const int cs = lay.control_off[b.stage][0];
                const auto& prev = c.problem.stages[b.stage - 1];
                const int ce =
                    lay.control_off[b.stage - 1][prev.n_shooting_intervals - 1] + lay.nu;
                d.eq_jac.block(b.row, cs, lay.nu, lay.nu) =
                    MatrixXd::Identity(lay.nu, lay.nu);
                d.eq_jac.block(b.row, ce, lay.nu, lay.nu) =
                    -MatrixXd::Identity(lay.nu, lay.nu);
                break;
            }
            case Core::EqBlock::Boundary: {
                jobs.push_back([&, b] {
                    const auto& bc = c.problem.stages[b.stage].boundary_constraints[b.interval];
                    const int node =
                        bc.at_end ? c.problem.stages[b.stage].n_shooting_intervals : 0;
                    const auto cols = block_cols(lay.state_off[b.stage][node], lay.nx);
                    const auto eval = [&](const VectorXd& zp) {
                        return boundary_residual(c, zp, b.stage, b.interval);
                    };
                    fd_block(d.eq_jac, b.row, cols, z, eval(z), eval);
                });
                break;
            }
        }
    }
    for (const auto& b : c.ineq_blocks) {
        jobs.push_back([&, b] {
            const auto& st = c.problem.stages[b.stage];
            std::vector<int> cols = block_cols(lay.state_off[b.stage][b.node], lay.nx);
            const int n_int = st.n_shooting_intervals;
            const int coff = b.node < n_int ? lay.control_off[b.stage][b.node]
                                            : lay.control_off[b.stage][n_int - 1] + lay.nu;
            const auto cu = block_cols(coff, lay.nu);
            cols.insert(cols.end(), cu.begin(), cu.end());
            cols.insert(cols.end(), param_cols.begin(), param_cols.end());
            const auto eval = [&](const VectorXd& zp) {
                return VectorXd::Constant(1, path_value(c, zp, b.stage, b.node, b.constraint));
            };
            fd_block(d.ineq_jac, b.row, cols, z, eval(z), eval);
        });
    }
    ocp_detail::run_jobs(static_cast<int>(jobs.size()),
                         [&](int j) { jobs[static_cast<size_t>(j)](); });

    // Cost gradient: controls, durations, the final state node (terminal
    // terms), and design parameters; all other entries are structural zeros.
    std::vector<int> cost_cols;
    for (size_t i = 0; i < lay.control_off.size(); ++i)
        for (int off : lay.control_off[i]) {
            const auto cu = ocp_detail::block_cols(off, 2 * lay.nu);
            cost_cols.insert(cost_cols.end(), cu.begin(), cu.end());
        }
    cost_cols.insert(cost_cols.end(), lay.duration_off.begin(), lay.duration_off.end());
    if (!c.problem.cost.terminal.empty()) {
        const int last = static_cast<int>(c.problem.stages.size()) - 1;
        const auto cu = ocp_detail::block_cols(
            lay.state_off[last][c.problem.stages[last].n_shooting_intervals], lay.nx);
        cost_cols.insert(cost_cols.end(), cu.begin(), cu.end());
    }
    cost_cols.insert(cost_cols.end(), param_cols.begin(), param_cols.end());
    const double f0 = ocp_detail::eval_cost(c, z);
    VectorXd zp = z;
    for (int col : cost_cols) {
        const double h = fd_step_size(z[col]);
        zp[col] = z[col] + h;
        d.grad[col] = (ocp_detail::eval_cost(c, zp) - f0) / h;
        zp[col] = z[col];
    }
    return d;
}

/// Builds the multiple-shooting NLP: node states, per-interval control
/// endpoints, stage durations, and design parameters as variables; defects,
/// transitions, boundary conditions, and stage-boundary control continuity
/// as equalities; path constraints at nodes as inequalities.
inline TranscribedNlp transcribe(const OcProblem& problem) {
    using namespace ocp_detail;
    validate_problem(problem);
    auto core = std::make_shared<Core>();
    core->problem = problem;
    core->lay = build_layout(problem);
    core->design = pack_design_parameters(effective_space(problem), problem.exo);
    Core& c = *core;
    const OcpLayout& lay = c.lay;
    const int S = static_cast<int>(problem.stages.size());

    int row = 0;
    c.eq_blocks.push_back({Core::EqBlock::InitialState, 0, 0, row, lay.nx});
    row += lay.nx;
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < problem.stages[i].n_shooting_intervals; ++j) {
            c.eq_blocks.push_back({Core::EqBlock::Defect, i, j, row, lay.nx});
            row += lay.nx;
        }
    for (int i = 1; i < S; ++i) {
        c.eq_blocks.push_back({Core::EqBlock::Transition, i, 0, row, lay.nx});
        row += lay.nx;
        c.eq_blocks.push_back({Core::EqBlock::ControlC0, i, 0, row, lay.nu});
        row += lay.nu;
    }
    for (int i = 0; i < S; ++i)
        for (size_t k = 0; k < problem.stages[i].boundary_constraints.size(); ++k) {
            const int dim = problem.stages[i].boundary_constraints[k].dim;
            c.eq_blocks.push_back({Core::EqBlock::Boundary, i, static_cast<int>(k), row, dim});
            row += dim;
        }
    c.n_eq = row;

    row = 0;
    std::vector<double> ilo, iup;
    for (int i = 0; i < S; ++i)
        for (int j = 0; j <= problem.stages[i].n_shooting_intervals; ++j)
            for (size_t k = 0; k < problem.stages[i].path_constraints.size(); ++k) {
                c.ineq_blocks.push_back({i, j, static_cast<int>(k), row});
                ilo.push_back(problem.stages[i].path_constraints[k].lower);
                iup.push_back(problem.stages[i].path_constraints[k].upper);
                row += 1;
            }
    c.n_ineq = row;
    c.ineq_lower = VectorXd(row);
    c.ineq_upper = VectorXd(row);
    for (int k = 0; k < row; ++k) {
        c.ineq_lower[k] = ilo[static_cast<size_t>(k)];
        c.ineq_upper[k] = iup[static_cast<size_t>(k)];
    }

    TranscribedNlp t;
    t.core = core;
    t.nlp.n = lay.n_vars;
    t.nlp.lb = VectorXd::Constant(lay.n_vars, -kInf);
    t.nlp.ub = VectorXd::Constant(lay.n_vars, kInf);
    const int m = 2 * static_cast<int>(problem.muscles.size());
    for (int i = 0; i < S; ++i) {
        for (int off : lay.state_off[i]) {
            if (problem.state_lower.size() > 0)
                t.nlp.lb.segment(off, lay.nx) = problem.state_lower;
            if (problem.state_upper.size() > 0)
                t.nlp.ub.segment(off, lay.nx) = problem.state_upper;
            // Activation bounds override any scenario state bounds.
            t.nlp.lb.segment(off + lay.nx - m, m).setZero();
            t.nlp.ub.segment(off + lay.nx - m, m).setOnes();
        }
        for (int off : lay.control_off[i])
            for (int end = 0; end < 2; ++end) {
                t.nlp.lb.segment(off + end * lay.nu, m).setZero();
                t.nlp.ub.segment(off + end * lay.nu, m).setOnes();
                t.nlp.lb.segment(off + end * lay.nu + m, lay.nu - m).setConstant(-1.0);
                t.nlp.ub.segment(off + end * lay.nu + m, lay.nu - m).setConstant(1.0);
            }
        t.nlp.lb[lay.duration_off[i]] = problem.stages[i].duration_lower;
        t.nlp.ub[lay.duration_off[i]] = problem.stages[i].duration_upper;
    }
    t.nlp.lb.segment(lay.param_off, lay.np) = c.design.lower;
    t.nlp.ub.segment(lay.param_off, lay.np) = c.design.upper;

    t.nlp.cost = [core](const VectorXd& z) { return eval_cost(*core, z); };
    // Least-squares view of the cost for the Gauss-Newton Hessian mode: the
    // quadrature and terminal terms of eval_cost written as residuals, the
    // linear time term left to the gradient.
    t.nlp.cost_residuals = [core](const VectorXd& z) {
        const auto& cost = core->problem.cost;
        const int m = 2 * static_cast<int>(core->problem.muscles.size());
        std::vector<double> r;
        for (size_t i = 0; i < core->problem.stages.size(); ++i) {
            const auto& st = core->problem.stages[i];
            const double h =
                core->lay.duration(z, static_cast<int>(i)) / st.n_shooting_intervals;
            for (int j = 0; j < st.n_shooting_intervals; ++j)
                for (const VectorXd& u : {core->lay.u_start(z, static_cast<int>(i), j),
                                          core->lay.u_end(z, static_cast<int>(i), j)}) {
                    for (int k = 0; k < m; ++k)
                        r.push_back(std::sqrt(0.5 * h * cost.w_excitation) * u[k]);
                    for (int k = m; k < core->lay.nu; ++k)
                        r.push_back(std::sqrt(0.5 * h * cost.w_actuator) * u[k]);
                }
        }
        const int last = static_cast<int>(core->problem.stages.size()) - 1;
        const VectorXd x_final =
            core->lay.state(z, last, core->problem.stages[last].n_shooting_intervals);
        for (const auto& t : cost.terminal)
            r.push_back(std::sqrt(t.weight) * (x_final[t.state_index] - t.target));
        return VectorXd(
            Eigen::Map<VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())));
    };
    t.nlp.eq = [core](const VectorXd& z) { return eval_equalities(*core, z); };
    t.nlp.ineq = [core](const VectorXd& z) { return eval_inequalities(*core, z); };
    t.nlp.ineq_lower = c.ineq_lower;
    t.nlp.ineq_upper = c.ineq_upper;

    // One structured FD pass per iterate serves gradient and both Jacobians.
    struct DerivCache {
        VectorXd z;
        OcpDerivatives d;
        bool valid = false;
    };
    auto cache = std::make_shared<DerivCache>();
    TranscribedNlp for_cache;
    for_cache.core = core;
    const auto ensure = [core, cache, for_cache](const VectorXd& z) {
        if (!cache->valid || cache->z.size() != z.size() || cache->z != z) {
            cache->d = fd_jacobians(for_cache, z);
            cache->z = z;
            cache->valid = true;
        }
    };
    t.nlp.grad = [ensure, cache](const VectorXd& z) {
        ensure(z);
        return cache->d.grad;
    };
    t.nlp.eq_jac = [ensure, cache](const VectorXd& z) {
        ensure(z);
        return cache->d.eq_jac;
    };
    t.nlp.ineq_jac = [ensure, cache](const VectorXd& z) {
        ensure(z);
        return cache->d.ineq_jac;
    };
    return t;
}

/// Running + terminal cost of a point (same value the NLP callbacks see).
inline double evaluate_cost(const TranscribedNlp& t, const VectorXd& z) {
    return ocp_detail::eval_cost(*t.core, z);
}

/// Cold-start point: states linearly interpolated between the guess anchors,
/// every control entry at 0.1, durations at the midpoint of their bounds,
/// design parameters at their packed (clamped) values.
inline VectorXd build_initial_guess(const TranscribedNlp& t) {
    const auto& c = *t.core;
    const OcpLayout& lay = c.lay;
    const int S = static_cast<int>(c.problem.stages.size());
    VectorXd z = VectorXd::Zero(lay.n_vars);
    for (int i = 0; i < S; ++i) {
        const VectorXd xa =
            c.problem.guess_anchors.empty() ? c.problem.initial_state
                                            : c.problem.guess_anchors[i];
        const VectorXd xb = c.problem.guess_anchors.empty()
                                ? c.problem.initial_state
                                : c.problem.guess_anchors[i + 1];
        const int N = c.problem.stages[i].n_shooting_intervals;
        for (int j = 0; j <= N; ++j) {
            const double w = static_cast<double>(j) / N;
            z.segment(lay.state_off[i][j], lay.nx) = (1.0 - w) * xa + w * xb;
        }
        for (int off : lay.control_off[i]) z.segment(off, 2 * lay.nu).setConstant(0.1);
        z[lay.duration_off[i]] =
            0.5 * (c.problem.stages[i].duration_lower + c.problem.stages[i].duration_upper);
    }
    z.segment(lay.param_off, lay.np) = c.design.values;
    return z;
}

// ----------------------------------------------------------------- extraction

struct TrajectorySample {
    double t = 0.0;
    int stage = 0;
    VectorXd q, qd;
    VectorXd e, a;        ///< per muscle (agonist, antagonist per pair)
    VectorXd tau_muscle;  ///< per muscle; the agonist entry carries the
                          ///< pair's passive torque
    VectorXd tau_exo;     ///< per exo element
    VectorXd lambda;      ///< padded to the widest stage's contact rows
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::vector<double> stage_start_times;
    double total_duration = 0.0;
    int lambda_dim = 0;
};

namespace ocp_detail {

inline TrajectorySample make_sample(const OcProblem& p, const DesignContext& ctx,
                                    int stage, double t, const VectorXd& x,
                                    const VectorXd& u) {
    const int nq = p.model.nq, nv = p.model.nv;
    TrajectorySample s;
    s.t = t;
    s.stage = stage;
    s.q = x.head(nq);
    s.qd = x.segment(nq, nv);
    const int m = 2 * static_cast<int>(p.muscles.size());
    s.e = u.head(m);
    s.a = x.tail(m);
    s.tau_muscle.resize(m);
    for (size_t k = 0; k < p.muscles.size(); ++k) {
        const auto& pair = p.muscles[k];
        const int qs = q_slot_of_dq(p.model, pair.agonist.dof_index);
        const double q = s.q[qs], qd = s.qd[pair.agonist.dof_index];
        const double a_ag = std::clamp(s.a[2 * k], 0.0, 1.0);
        const double a_an = std::clamp(s.a[2 * k + 1], 0.0, 1.0);
        s.tau_muscle[2 * k] = passive_torque(pair.agonist, q, qd) +
                              active_torque(pair.agonist, q, qd, a_ag);
        s.tau_muscle[2 * k + 1] = active_torque(pair.antagonist, q, qd, a_an);
    }
    s.tau_exo.resize(ctx.elements.size());
    for (size_t k = 0; k < ctx.elements.size(); ++k) {
        const auto& e = ctx.elements[k];
        const int qs = q_slot_of_dq(p.model, e.dof_index);
        const double u_act = std::clamp(u[m + static_cast<int>(k)], -1.0, 1.0);
        s.tau_exo[static_cast<int>(k)] =
            exo_torque(e, s.q[qs], s.qd[e.dof_index], u_act);
    }
    return s;
}

}  // namespace ocp_detail

/// Dense output by re-integrating every shooting interval from its node
/// variable. Node samples are the node variables themselves; interior
/// samples come from the RK4 substeps. At a stage boundary only the
/// post-transition state is emitted, so times stay strictly increasing.
inline Trajectory extract_trajectory(const TranscribedNlp& t, const VectorXd& z) {
    using namespace ocp_detail;
    const Core& c = *t.core;
    const OcpLayout& lay = c.lay;
    const auto ctx = make_context(c.problem, lay.params(z));
    const int S = static_cast<int>(c.problem.stages.size());

    Trajectory traj;
    for (int i = 0; i < S; ++i) traj.lambda_dim =
        std::max(traj.lambda_dim, contact_rows(c.problem.stages[i].contacts));

    double stage_start = 0.0;
    for (int i = 0; i < S; ++i) {
        const auto& st = c.problem.stages[i];
        const int N = st.n_shooting_intervals;
        const double T = lay.duration(z, i);
        const double h = T / N;
        traj.stage_start_times.push_back(stage_start);

        const auto push = [&](double time, const VectorXd& x, const VectorXd& u) {
            TrajectorySample s = make_sample(c.problem, ctx, i, time, x, u);
            s.lambda = VectorXd::Zero(traj.lambda_dim);
            const auto dyn = eval_dynamics(c.problem, st, ctx, x, u);
            s.lambda.head(dyn.lambda.size()) = dyn.lambda;
            traj.samples.push_back(std::move(s));
        };

        if (i == 0) push(0.0, lay.state(z, 0, 0), lay.u_start(z, 0, 0));
        else push(stage_start, lay.state(z, i, 0), lay.u_start(z, i, 0));

        for (int j = 0; j < N; ++j) {
            const VectorXd u_s = lay.u_start(z, i, j);
            const VectorXd u_e = lay.u_end(z, i, j);
            const int n_sub = c.problem.rk4_substeps;
            VectorXd x = lay.state(z, i, j);
            for (int k = 1; k <= n_sub; ++k) {
                const double w0 = static_cast<double>(k - 1) / n_sub;
                const double w1 = static_cast<double>(k) / n_sub;
                const VectorXd ua = (1.0 - w0) * u_s + w0 * u_e;
                const VectorXd ub = (1.0 - w1) * u_s + w1 * u_e;
                const auto f = [&](double theta, const VectorXd& xs) {
                    const double w = std::clamp(theta / (h / n_sub), 0.0, 1.0);
                    const VectorXd u = (1.0 - w) * ua + w * ub;
                    return eval_dynamics(c.problem, st, ctx, xs, u).xdot;
                };
                x = rk4_integrate(f, x, 0.0, h / n_sub, 1);
                if (k < n_sub)
                    push(stage_start + j * h + k * (h / n_sub), x, ub);
            }
            // Interval end: emit the node variable, not the integrated state,
            // so node samples match the NLP solution exactly.
            const bool stage_end = (j == N - 1);
            const double t_node = stage_end ? stage_start + T : stage_start + (j + 1) * h;
            if (!stage_end || i == S - 1) push(t_node, lay.state(z, i, j + 1), u_e);
        }
        stage_start += T;
    }
    traj.total_duration = stage_start;
    return traj;
}

}  // namespace exosim

#endif  // EXOSIM_OCP_HPP
