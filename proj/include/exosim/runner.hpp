/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/runner.hpp                                          *
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
#ifndef EXOSIM_RUNNER_HPP
#define EXOSIM_RUNNER_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "exosim/scenario.hpp"

namespace exosim {

// -------------------------------------------------------------------- CSV

/// One column name per individual muscle, pair order, agonist first.
inline std::vector<std::string> muscle_column_names(const OcProblem& p) {
    std::vector<std::string> names;
    for (const auto& pair : p.muscles) {
        names.push_back(pair.name + "_ag");
        names.push_back(pair.name + "_an");
    }
    return names;
}

/// Full-precision trajectory export, one row per dense-output sample.
/// %.17g keeps re-parsed values bit-exact, so identical runs produce
/// byte-identical files.
inline void write_trajectory_csv(const OcProblem& p, const Trajectory& traj,
                                 std::ostream& os) {
    os << "t,stage";
    for (int i = 0; i < p.model.nq; ++i) os << ",q" << i;
    for (int i = 0; i < p.model.nv; ++i) os << ",qd" << i;
    const auto names = muscle_column_names(p);
    for (const auto& n : names) os << ",e_" << n;
    for (const auto& n : names) os << ",a_" << n;
    for (const auto& n : names) os << ",tau_" << n;
    for (size_t i = 0; i < p.exo.size(); ++i) os << ",tau_exo_" << i;
    for (int i = 0; i < traj.lambda_dim; ++i) os << ",lambda_" << i;
    os << "\n";

    char buf[40];
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ',' << buf;
    };
    for (const auto& s : traj.samples) {
        std::snprintf(buf, sizeof buf, "%.17g", s.t);
        os << buf << ',' << s.stage;
        for (int i = 0; i < s.q.size(); ++i) put(s.q[i]);
        for (int i = 0; i < s.qd.size(); ++i) put(s.qd[i]);
        for (int i = 0; i < s.e.size(); ++i) put(s.e[i]);
        for (int i = 0; i < s.a.size(); ++i) put(s.a[i]);
        for (int i = 0; i < s.tau_muscle.size(); ++i) put(s.tau_muscle[i]);
        for (int i = 0; i < s.tau_exo.size(); ++i) put(s.tau_exo[i]);
        for (int i = 0; i < s.lambda.size(); ++i) put(s.lambda[i]);
        os << "\n";
    }
}

inline void write_trajectory_csv(const OcProblem& p, const Trajectory& traj,
                                 const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    write_trajectory_csv(p, traj, os);
    os.flush();
    if (!os) throw std::runtime_error(path + ": write failed");
}

// -------------------------------------------------------- forward rollout

/// Pure forward simulation: integrates the stages sequentially from the
/// problem's initial state with every control held at u_value, applying
/// transitions at stage entries. Sampling matches extract_trajectory.
inline Trajectory simulate_problem(const OcProblem& p,
                                   const std::vector<double>& durations,
                                   double u_value) {
    using namespace ocp_detail;
    validate_problem(p);
    if (durations.size() != p.stages.size())
        throw std::invalid_argument("simulate: one duration per stage required");
    const DesignVector design = pack_design_parameters(effective_space(p), p.exo);
    const auto ctx = make_context(p, design.values);
    const int nq = p.model.nq, nv = p.model.nv;

    Trajectory traj;
    for (const auto& st : p.stages)
        traj.lambda_dim = std::max(traj.lambda_dim, contact_rows(st.contacts));

    VectorXd x = p.initial_state;
    const VectorXd u = VectorXd::Constant(control_dim(p), u_value);
    double stage_start = 0.0;
    for (size_t i = 0; i < p.stages.size(); ++i) {
        const auto& st = p.stages[i];
        const double T = durations[i];
        if (!(T >= st.duration_lower && T <= st.duration_upper))
            throw std::invalid_argument("simulate: duration outside stage bounds");
        const int N = st.n_shooting_intervals;
        const double h = T / N;
        traj.stage_start_times.push_back(stage_start);

        if (st.transition == TransitionKind::ImpactMap)
            x.segment(nq, nv) =
                impact_map(ctx.model, x.head(nq), x.segment(nq, nv), st.contacts);

        const auto push = [&](double time, const VectorXd& xs) {
            TrajectorySample s = make_sample(p, ctx, static_cast<int>(i), time, xs, u);
            s.lambda = VectorXd::Zero(traj.lambda_dim);
            const auto dyn = eval_dynamics(p, st, ctx, xs, u);
            s.lambda.head(dyn.lambda.size()) = dyn.lambda;
            traj.samples.push_back(std::move(s));
        };

        push(stage_start, x);
        const int n_sub = p.rk4_substeps;
        for (int j = 0; j < N; ++j)
            for (int k = 1; k <= n_sub; ++k) {
                const auto f = [&](double, const VectorXd& xs) {
                    return eval_dynamics(p, st, ctx, xs, u).xdot;
                };
                x = rk4_integrate(f, x, 0.0, h / n_sub, 1);
                const bool stage_end = (j == N - 1 && k == n_sub);
                if (!stage_end || i + 1 == p.stages.size())
                    push(stage_start + j * h + k * (h / n_sub), x);
            }
        stage_start += T;
    }
    traj.total_duration = stage_start;
    return traj;
}

// ----------------------------------------------------------------- runner

struct RunOptions {
    std::string out_dir = ".";
    bool verbose = false;
};

inline std::string output_stem(const Scenario& s) {
    return s.name.empty() ? "scenario" : s.name;
}

/// {status, cost, kkt, iterations, stage_durations, design_parameters}.
inline Json solution_summary(const OcProblem& p, const TranscribedNlp& t,
                             const NlpSolution& sol) {
    Json j;
    j["status"] = to_string(sol.status);
    j["cost"] = sol.cost;
    j["kkt"] = sol.kkt_residual;
    j["iterations"] = sol.iterations;
    Json durs = Json::array();
    for (size_t i = 0; i < t.core->problem.stages.size(); ++i)
        durs.push_back(sol.x[t.layout().duration_off[i]]);
    j["stage_durations"] = durs;
    Json dps = Json::array();
    const VectorXd pv = t.layout().params(sol.x);
    const ExoDesignSpace space = ocp_detail::effective_space(p);
    int idx = 0;
    for (size_t e = 0; e < space.params.size(); ++e)
        for (int slot = 0; slot < kExoParamCount; ++slot) {
            if (!space.params[e][slot].free) continue;
            Json dj;
            dj["element"] = static_cast<int>(e);
            dj["parameter"] = scenario_detail::kParamNames[slot];
            dj["value"] = pv[idx++];
            dps.push_back(dj);
        }
    j["design_parameters"] = dps;
    return j;
}

inline void write_json(const Json& j, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    os << j.dump(2) << "\n";
    os.flush();
    if (!os) throw std::runtime_error(path + ": write failed");
}

/// Guess vector with the scenario's overrides applied on top of the
/// transcription's cold start.
inline VectorXd scenario_initial_guess(const Scenario& s, const TranscribedNlp& t) {
    const OcpLayout& lay = t.layout();
    VectorXd z = build_initial_guess(t);
    for (size_t i = 0; i < s.guess_durations.size(); ++i)
        z[lay.duration_off[i]] = s.guess_durations[i];
    for (size_t i = 0; i < lay.control_off.size(); ++i)
        for (int off : lay.control_off[i])
            z.segment(off, 2 * lay.nu).setConstant(s.guess_control);
    return z;
}

/// Transcribes, solves, and exports <name>_trajectory.csv plus
/// <name>_summary.json under opt.out_dir. Exit code 0 when converged,
/// 2 otherwise (the summary still records the final status).
inline int solve_scenario(const Scenario& s, const RunOptions& opt,
                          std::ostream& diag = std::cerr) {
    const OcProblem p = build_problem(s);
    const TranscribedNlp t = transcribe(p);

    SolverSettings settings = s.solver;
    settings.verbose = opt.verbose;
    settings.log = &diag;
    const NlpSolution sol = solve_sqp(t.nlp, scenario_initial_guess(s, t), settings);

    std::filesystem::create_directories(opt.out_dir);
    const std::string stem = (std::filesystem::path(opt.out_dir) /
                              output_stem(s)).string();
    write_trajectory_csv(p, extract_trajectory(t, sol.x), stem + "_trajectory.csv");
    write_json(solution_summary(p, t, sol), stem + "_summary.json");
    diag << output_stem(s) << ": " << to_string(sol.status) << ", cost " << sol.cost
         << ", kkt " << sol.kkt_residual << ", " << sol.iterations << " iterations"
         << std::endl;
    return sol.status == SolveStatus::Converged ? 0 : 2;
}

/// Forward-simulates with the scenario's guess controls and durations and
/// exports the same trajectory CSV; no optimization.
inline int simulate_scenario(const Scenario& s, const RunOptions& opt,
                             std::ostream& diag = std::cerr) {
    const OcProblem p = build_problem(s);
    std::vector<double> durs = s.guess_durations;
    if (durs.empty())
        for (const auto& st : s.stages)
            durs.push_back(0.5 * (st.duration_lower + st.duration_upper));
    const Trajectory traj = simulate_problem(p, durs, s.guess_control);

    std::filesystem::create_directories(opt.out_dir);
    const std::string stem = (std::filesystem::path(opt.out_dir) /
                              output_stem(s)).string();
    write_trajectory_csv(p, traj, stem + "_trajectory.csv");
    Json j;
    j["status"] = "simulated";
    j["stage_durations"] = durs;
    write_json(j, stem + "_summary.json");
    diag << output_stem(s) << ": simulated " << traj.samples.size() << " samples over "
         << traj.total_duration << " s" << std::endl;
    return 0;
}

}  // namespace exosim

#endif  // EXOSIM_RUNNER_HPP
