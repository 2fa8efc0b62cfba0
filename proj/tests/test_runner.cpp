/* -------------------------------------------------------------------------- *
 * exosim: tests/test_runner.cpp                                              *
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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "exosim/runner.hpp"

using namespace exosim;

namespace {

std::string fixture(const std::string& name) {
    return std::string(EXOSIM_SCENARIO_DIR) + "/" + name;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("trajectory CSV carries the documented column layout", "[runner]") {
    const OcProblem p = build_problem(parse_scenario(fixture("pendulum_reach.json")));
    const Trajectory traj = simulate_problem(p, {0.5}, 0.1);

    std::ostringstream out;
    write_trajectory_csv(p, traj, out);
    std::istringstream in(out.str());
    std::string header;
    REQUIRE(std::getline(in, header));
    const auto cols = split_line(header);

    const int n_muscles = 2 * static_cast<int>(p.muscles.size());
    const size_t expect = 2 + p.model.nq + p.model.nv + 3 * n_muscles +
                          p.exo.size() + traj.lambda_dim;
    REQUIRE(cols.size() == expect);
    REQUIRE(cols[0] == "t");
    REQUIRE(cols[1] == "stage");
    REQUIRE(cols[2] == "q0");
    REQUIRE(cols[3] == "qd0");
    REQUIRE(cols[4] == "e_shoulder_ag");
    REQUIRE(cols[5] == "e_shoulder_an");
    REQUIRE(cols[6] == "a_shoulder_ag");
    REQUIRE(cols[8] == "tau_shoulder_ag");

    std::string row;
    size_t n_rows = 0;
    while (std::getline(in, row)) {
        REQUIRE(split_line(row).size() == expect);
        ++n_rows;
    }
    REQUIRE(n_rows == traj.samples.size());
}

TEST_CASE("empty trajectory writes the header only", "[runner]") {
    const OcProblem p = build_problem(parse_scenario(fixture("pendulum_reach.json")));
    std::ostringstream out;
    write_trajectory_csv(p, Trajectory{}, out);
    const std::string text = out.str();
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 1);
    REQUIRE(text.rfind("t,stage,", 0) == 0);
}

TEST_CASE("CSV values survive a write and reparse round trip", "[runner]") {
    const OcProblem p = build_problem(parse_scenario(fixture("pendulum_reach.json")));
    const Trajectory traj = simulate_problem(p, {0.5}, 0.1);

    std::ostringstream out;
    write_trajectory_csv(p, traj, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);  // header

    for (const auto& s : traj.samples) {
        REQUIRE(std::getline(in, line));
        const auto cells = split_line(line);
        // %.17g round-trips IEEE doubles exactly.
        REQUIRE(std::stod(cells[0]) == s.t);
        REQUIRE(std::stod(cells[2]) == s.q[0]);
        REQUIRE(std::stod(cells[3]) == s.qd[0]);
        REQUIRE(std::stod(cells[4]) == s.e[0]);
        REQUIRE(std::stod(cells[6]) == s.a[0]);
        REQUIRE(std::stod(cells[8]) == s.tau_muscle[0]);
    }
}

TEST_CASE("simulation reproduces the analytic double integrator", "[runner]") {
    const Scenario s = parse_scenario(fixture("double_integrator_min_time.json"));
    const OcProblem p = build_problem(s);
    const double T = 2.25, u = 0.1;
    const Trajectory traj = simulate_problem(p, {T}, u);

    REQUIRE(traj.total_duration == Catch::Approx(T));
    const TrajectorySample& last = traj.samples.back();
    // Unit inertia, no gravity: constant acceleration u.
    REQUIRE(last.q[0] == Catch::Approx(0.5 * u * T * T).margin(1e-12));
    REQUIRE(last.qd[0] == Catch::Approx(u * T).margin(1e-12));
    REQUIRE(last.tau_exo[0] == Catch::Approx(u).margin(1e-15));
}

TEST_CASE("simulation applies the impact map at stage entry", "[runner]") {
    const Scenario s = parse_scenario(fixture("leg_land_two_stage.json"));
    const OcProblem p = build_problem(s);
    const Trajectory traj = simulate_problem(p, {0.3, 0.3}, 0.0);

    double prev_t = -1.0;
    for (const auto& smp : traj.samples) {
        REQUIRE(smp.t > prev_t);
        prev_t = smp.t;
    }

    // First stance sample: post-impact velocity is consistent with the pin.
    const auto it = std::find_if(traj.samples.begin(), traj.samples.end(),
                                 [](const TrajectorySample& x) { return x.stage == 1; });
    REQUIRE(it != traj.samples.end());
    const MatrixXd J = contact_jacobian(p.model, it->q, p.stages[1].contacts);
    REQUIRE((J * it->qd).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("solve_scenario exports deterministic artifacts", "[runner]") {
    Scenario s = parse_scenario(fixture("double_integrator_min_time.json"));
    const std::string dir_a = "runner_test_out_a", dir_b = "runner_test_out_b";

    std::ostringstream diag;
    REQUIRE(solve_scenario(s, {dir_a, false}, diag) == 0);
    REQUIRE(solve_scenario(s, {dir_b, false}, diag) == 0);

    const std::string stem = "/double_integrator_min_time";
    const Json summary = Json::parse(slurp(dir_a + stem + "_summary.json"));
    REQUIRE(summary["status"] == "converged");
    REQUIRE(summary["stage_durations"].size() == 1);
    REQUIRE(std::abs(summary["stage_durations"][0].get<double>() - 2.0) < 1e-3);

    REQUIRE(slurp(dir_a + stem + "_trajectory.csv") ==
            slurp(dir_b + stem + "_trajectory.csv"));
    REQUIRE(slurp(dir_a + stem + "_summary.json") ==
            slurp(dir_b + stem + "_summary.json"));

    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("solve_scenario reports non-convergence with exit code 2", "[runner]") {
    Scenario s = parse_scenario(fixture("double_integrator_min_time.json"));
    s.solver.max_iterations = 1;
    const std::string dir = "runner_test_out_maxit";

    std::ostringstream diag;
    REQUIRE(solve_scenario(s, {dir, false}, diag) == 2);
    const Json summary =
        Json::parse(slurp(dir + "/double_integrator_min_time_summary.json"));
    REQUIRE(summary["status"] == "max_iter");

    std::filesystem::remove_all(dir);
}
