/* -------------------------------------------------------------------------- *
 * exosim: tools/exosim_main.cpp                                              *
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
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "exosim/runner.hpp"

// Exit codes: 0 success/converged, 1 input error, 2 solver non-convergence.
int main(int argc, char** argv) {
    CLI::App app{"exosim: predictive simulation of human-exoskeleton movement"};
    app.require_subcommand(1);

    std::string check_file, solve_file, sim_file;
    exosim::RunOptions opt;

    CLI::App* check = app.add_subcommand("check", "Validate a scenario file");
    check->add_option("file", check_file, "scenario JSON")->required();

    CLI::App* solve = app.add_subcommand("solve", "Solve a scenario's optimal control "
                                                  "problem and export results");
    solve->add_option("file", solve_file, "scenario JSON")->required();
    solve->add_option("--out", opt.out_dir, "output directory (default: .)");
    solve->add_flag("--verbose", opt.verbose, "iteration log to standard error");

    CLI::App* sim = app.add_subcommand("simulate", "Forward-simulate with the "
                                                   "scenario's guess controls");
    sim->add_option("file", sim_file, "scenario JSON")->required();
    sim->add_option("--out", opt.out_dir, "output directory (default: .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (check->parsed()) {
            const exosim::Scenario s = exosim::parse_scenario(check_file);
            std::cout << "ok: " << (s.name.empty() ? check_file : s.name) << ": "
                      << s.bodies.size() << " bodies, " << s.muscles.size()
                      << " muscle pairs, " << s.exo.size() << " exo elements, "
                      << s.stages.size() << " stages" << std::endl;
            return 0;
        }
        if (solve->parsed())
            return exosim::solve_scenario(exosim::parse_scenario(solve_file), opt);
        return exosim::simulate_scenario(exosim::parse_scenario(sim_file), opt);
    } catch (const exosim::ScenarioError& e) {
        for (const auto& msg : e.errors) std::cerr << "error: " << msg << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
