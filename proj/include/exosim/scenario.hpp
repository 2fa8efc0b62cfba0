/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/scenario.hpp                                        *
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
#ifndef EXOSIM_SCENARIO_HPP
#define EXOSIM_SCENARIO_HPP

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "exosim/ocp.hpp"

namespace exosim {

using Json = nlohmann::json;

// Declarative mirror of an OcProblem, as read from a versioned JSON file.
// Units throughout: rad, rad/s, s, kg, m, N·m. All angles are radians in
// files as well; there are no hidden conversions.

struct ScenarioBody {
    std::string name;
    double mass = 1.0;
    Vector3d com = Vector3d::Zero();          ///< body frame, m
    Matrix3d inertia_com = Matrix3d::Zero();  ///< about the COM, kg·m²
    JointSpec joint;
};

/// One agonist-antagonist pair. Curves and time constants are shared by the
/// two sides; the passive element belongs to the pair and is carried by the
/// agonist so per-muscle torques sum to the pair torque exactly.
struct ScenarioMuscle {
    std::string name;
    int dof_index = 0;
    double tau_max = 1.0;             ///< agonist peak torque, N·m
    double tau_max_antagonist = 1.0;  ///< defaults to tau_max
    double tc_a = 0.011;              ///< s
    double tc_d = 0.068;              ///< s
    BezierCurve2D active_torque_angle;
    BezierCurve2D torque_velocity;
    PassiveParams passive;
};

/// One freed design parameter: (element, slot) plus its box.
struct ScenarioFreeParam {
    int element = 0;
    int slot = kSpringK;
    double lower = 0.0;
    double upper = 0.0;
};

/// Equality constraint pinned to a stage's first or last node.
struct ScenarioBoundary {
    enum class Kind { State, PointHeight };
    Kind kind = Kind::State;
    bool at_end = true;
    std::vector<int> indices;     ///< State: state components to pin
    std::vector<double> values;   ///< State: target values
    int body = 0;                 ///< PointHeight: body index
    Vector3d point = Vector3d::Zero();  ///< PointHeight: body-fixed point, m
    double height = 0.0;          ///< PointHeight: world Z target, m
};

struct ScenarioStage {
    double duration_lower = 0.1;  ///< s
    double duration_upper = 1.0;  ///< s
    int n_shooting_intervals = 10;
    TransitionKind transition = TransitionKind::None;
    std::vector<ContactPoint> contacts;
    std::vector<CompliantContact> compliant_contacts;
    std::vector<PathConstraint> path_constraints;
    std::vector<ScenarioBoundary> boundaries;
};

struct Scenario {
    std::string version = "1";
    std::string name;
    Vector3d gravity = Vector3d(0.0, 0.0, -9.81);
    std::vector<ScenarioBody> bodies;
    std::vector<ScenarioMuscle> muscles;
    std::vector<ExoElement> exo;
    std::vector<ScenarioFreeParam> free_params;
    std::vector<ScenarioStage> stages;
    OcpCost cost;
    VectorXd initial_state;
    std::vector<VectorXd> guess_anchors;    ///< empty, or n_stages+1 states
    std::vector<double> guess_durations;    ///< empty, or one per stage
    double guess_control = 0.1;             ///< initial value for all controls
    int rk4_substeps = 10;
    SolverSettings solver;
};

/// Carries every validation error found, not just the first.
class ScenarioError : public std::runtime_error {
  public:
    explicit ScenarioError(std::vector<std::string> errs)
        : std::runtime_error(join(errs)), errors(std::move(errs)) {}

    std::vector<std::string> errors;

  private:
    static std::string join(const std::vector<std::string>& errs) {
        std::string s = "scenario validation failed:";
        for (const auto& e : errs) {
            s += "\n  ";
            s += e;
        }
        return s;
    }
};

namespace scenario_detail {

inline std::string joined(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline std::string at(const std::string& path, int i) {
    return path + "[" + std::to_string(i) + "]";
}

/// Typed JSON field access with error accumulation. Every getter records a
/// path-qualified message on failure and returns its fallback so parsing can
/// continue and report all problems in one pass.
struct Reader {
    std::vector<std::string> errs;

    void fail(const std::string& path, const std::string& msg) {
        errs.push_back(path + ": " + msg);
    }

    const Json* get(const Json& obj, const std::string& path, const char* key,
                    bool required) {
        if (!obj.is_object() || !obj.contains(key)) {
            if (required) fail(joined(path, key), "missing required field");
            return nullptr;
        }
        return &obj.at(key);
    }

    void check_keys(const Json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) return;
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (const char* k : allowed)
                if (it.key() == k) known = true;
            if (!known) fail(joined(path, it.key()), "unknown field");
        }
    }

    bool object(const Json& j, const std::string& path) {
        if (j.is_object()) return true;
        fail(path, "expected an object");
        return false;
    }

    double number(const Json& obj, const std::string& path, const char* key,
                  bool required, double fallback) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        if (!v->is_number()) {
            fail(joined(path, key), "expected a number");
            return fallback;
        }
        return v->get<double>();
    }

    int integer(const Json& obj, const std::string& path, const char* key,
                bool required, int fallback) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        if (!v->is_number_integer()) {
            fail(joined(path, key), "expected an integer");
            return fallback;
        }
        return v->get<int>();
    }

    bool boolean(const Json& obj, const std::string& path, const char* key,
                 bool required, bool fallback) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        if (!v->is_boolean()) {
            fail(joined(path, key), "expected a boolean");
            return fallback;
        }
        return v->get<bool>();
    }

    std::string str(const Json& obj, const std::string& path, const char* key,
                    bool required, const std::string& fallback) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        if (!v->is_string()) {
            fail(joined(path, key), "expected a string");
            return fallback;
        }
        return v->get<std::string>();
    }

    /// Fixed-length numeric array straight into an Eigen vector.
    VectorXd vecn(const Json& obj, const std::string& path, const char* key,
                  bool required, const VectorXd& fallback, int expect = -1) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        return vecn_value(*v, joined(path, key), fallback, expect);
    }

    VectorXd vecn_value(const Json& v, const std::string& path, const VectorXd& fallback,
                        int expect = -1) {
        if (!v.is_array()) {
            fail(path, "expected an array of numbers");
            return fallback;
        }
        VectorXd out(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                fail(at(path, static_cast<int>(i)), "expected a number");
                return fallback;
            }
            out[static_cast<int>(i)] = v[i].get<double>();
        }
        if (expect >= 0 && out.size() != expect) {
            fail(path, "expected " + std::to_string(expect) + " entries, got " +
                           std::to_string(out.size()));
            return fallback;
        }
        return out;
    }

    Vector3d vec3(const Json& obj, const std::string& path, const char* key,
                  bool required, const Vector3d& fallback) {
        const VectorXd v = vecn(obj, path, key, required, fallback, 3);
        return Vector3d(v[0], v[1], v[2]);
    }

    /// 3x3 nested array, or a 3-array shorthand for a diagonal matrix.
    Matrix3d mat3(const Json& obj, const std::string& path, const char* key,
                  bool required, const Matrix3d& fallback) {
        const Json* v = get(obj, path, key, required);
        if (!v) return fallback;
        const std::string p = joined(path, key);
        if (!v->is_array() || v->size() != 3) {
            fail(p, "expected a 3x3 array (or a 3-array diagonal)");
            return fallback;
        }
        if ((*v)[0].is_number()) {
            const VectorXd d = vecn_value(*v, p, Vector3d::Zero(), 3);
            return Vector3d(d[0], d[1], d[2]).asDiagonal();
        }
        Matrix3d m;
        for (int i = 0; i < 3; ++i) {
            const VectorXd row = vecn_value((*v)[i], at(p, i), Vector3d::Zero(), 3);
            m.row(i) = row.transpose();
        }
        return m;
    }
};

inline const char* kParamNames[kExoParamCount] = {"spring_k",      "damper_d",
                                                 "rest_angle",    "actuator_limit",
                                                 "added_mass",    "added_inertia"};

inline int param_slot(const std::string& name) {
    for (int i = 0; i < kExoParamCount; ++i)
        if (name == kParamNames[i]) return i;
    return -1;
}

inline BezierCurve2D read_curve(Reader& r, const Json& obj, const std::string& path,
                                const char* key, const BezierCurve2D& fallback) {
    const Json* v = r.get(obj, path, key, false);
    if (!v) return fallback;
    const std::string p = joined(path, key);
    if (!r.object(*v, p)) return fallback;
    r.check_keys(*v, p, {"x", "y"});
    BezierCurve2D c;
    const VectorXd x = r.vecn(*v, p, "x", true, VectorXd::LinSpaced(6, 0, 5), 6);
    const VectorXd y = r.vecn(*v, p, "y", true, VectorXd::Zero(6), 6);
    for (int i = 0; i < 6; ++i) {
        c.x[static_cast<size_t>(i)] = x[i];
        c.y[static_cast<size_t>(i)] = y[i];
    }
    try {
        validate_curve(c, "curve");
    } catch (const std::exception& e) {
        r.fail(p, e.what());
        return fallback;
    }
    return c;
}

}  // namespace scenario_detail

/// Parses and validates a scenario document. Throws ScenarioError carrying
/// every problem found (field paths included), never just the first one.
inline Scenario scenario_from_json(const Json& root) {
    using namespace scenario_detail;
    Reader r;
    if (!root.is_object()) throw ScenarioError({"root: expected a JSON object"});
    r.check_keys(root, "",
                 {"version", "name", "model", "muscles", "exoskeleton", "stages", "cost",
                  "initial_state", "guess_anchors", "guess_durations", "guess_control",
                  "rk4_substeps", "solver"});

    Scenario s;
    s.version = r.str(root, "", "version", true, "");
    if (!s.version.empty() && s.version != "1")
        r.fail("version", "unrecognized scenario version \"" + s.version +
                              "\" (this reader understands \"1\")");
    s.name = r.str(root, "", "name", false, "");

    // ------------------------------------------------------------- model
    const size_t errs_before_model = r.errs.size();
    if (const Json* model = r.get(root, "", "model", true)) {
        if (r.object(*model, "model")) {
            r.check_keys(*model, "model", {"gravity", "bodies"});
            s.gravity = r.vec3(*model, "model", "gravity", false, s.gravity);
            const Json* bodies = r.get(*model, "model", "bodies", true);
            if (bodies && !bodies->is_array())
                r.fail("model.bodies", "expected an array");
            else if (bodies && bodies->empty())
                r.fail("model.bodies", "at least one body is required");
            else if (bodies) {
                for (size_t i = 0; i < bodies->size(); ++i) {
                    const std::string bp = at("model.bodies", static_cast<int>(i));
                    const Json& bj = (*bodies)[i];
                    if (!r.object(bj, bp)) continue;
                    r.check_keys(bj, bp, {"name", "mass", "com", "inertia_com", "joint"});
                    ScenarioBody b;
                    b.name = r.str(bj, bp, "name", false, "body" + std::to_string(i));
                    b.mass = r.number(bj, bp, "mass", true, 1.0);
                    if (!(b.mass > 0.0) || !std::isfinite(b.mass))
                        r.fail(bp + ".mass", "must be a positive number");
                    b.com = r.vec3(bj, bp, "com", false, Vector3d::Zero());
                    b.inertia_com = r.mat3(bj, bp, "inertia_com", false, Matrix3d::Zero());
                    if ((b.inertia_com - b.inertia_com.transpose())
                            .cwiseAbs()
                            .maxCoeff() > 1e-9)
                        r.fail(bp + ".inertia_com", "must be symmetric");
                    const Json* jj = r.get(bj, bp, "joint", true);
                    if (jj && r.object(*jj, bp + ".joint")) {
                        const std::string jp = bp + ".joint";
                        r.check_keys(*jj, jp,
                                     {"kind", "axes", "parent", "offset_translation",
                                      "offset_rotation"});
                        const std::string kind = r.str(*jj, jp, "kind", true, "");
                        int want_axes = -1;
                        if (kind == "revolute1") b.joint.kind = JointKind::Revolute1,
                                            want_axes = 1;
                        else if (kind == "revolute2") b.joint.kind = JointKind::Revolute2,
                                                 want_axes = 2;
                        else if (kind == "revolute3") b.joint.kind = JointKind::Revolute3,
                                                 want_axes = 3;
                        else if (kind == "floating") b.joint.kind = JointKind::Floating,
                                                want_axes = 0;
                        else if (!kind.empty())
                            r.fail(jp + ".kind",
                                   "unknown joint kind \"" + kind +
                                       "\" (revolute1|revolute2|revolute3|floating)");
                        b.joint.axes.clear();
                        const Json* axes = r.get(*jj, jp, "axes", want_axes > 0);
                        if (axes) {
                            if (!axes->is_array())
                                r.fail(jp + ".axes", "expected an array of 3-vectors");
                            else
                                for (size_t k = 0; k < axes->size(); ++k) {
                                    const std::string ap =
                                        at(jp + ".axes", static_cast<int>(k));
                                    const VectorXd a = r.vecn_value(
                                        (*axes)[k], ap, Vector3d::UnitZ(), 3);
                                    if (std::abs(a.norm() - 1.0) > 1e-9)
                                        r.fail(ap, "axis must be a unit vector");
                                    b.joint.axes.emplace_back(a[0], a[1], a[2]);
                                }
                            if (want_axes >= 0 &&
                                static_cast<int>(b.joint.axes.size()) != want_axes)
                                r.fail(jp + ".axes",
                                       "expected " + std::to_string(want_axes) +
                                           " axes for joint kind \"" + kind + "\"");
                        }
                        b.joint.parent = r.integer(*jj, jp, "parent", false, -1);
                        if (b.joint.parent < -1 ||
                            b.joint.parent >= static_cast<int>(i))
                            r.fail(jp + ".parent",
                                   "must be -1 (base) or the index of an earlier body");
                        const Vector3d tr = r.vec3(*jj, jp, "offset_translation", false,
                                                   Vector3d::Zero());
                        const Matrix3d rot = r.mat3(*jj, jp, "offset_rotation", false,
                                                    Matrix3d::Identity());
                        if ((rot * rot.transpose() - Matrix3d::Identity())
                                    .cwiseAbs()
                                    .maxCoeff() > 1e-6 ||
                            rot.determinant() < 0.0)
                            r.fail(jp + ".offset_rotation",
                                   "must be a right-handed rotation matrix");
                        b.joint.frame_offset = SpatialTransform(rot, tr);
                    }
                    s.bodies.push_back(std::move(b));
                }
            }
        }
    }

    // Cross-reference checks below need the assembled model's dimensions.
    std::optional<MultibodyModel> built;
    if (r.errs.size() == errs_before_model) {
        std::vector<BodySpec> specs;
        for (const auto& b : s.bodies) {
            BodySpec spec;
            spec.name = b.name;
            spec.inertia = SpatialInertia::from_com_inertia(b.mass, b.com, b.inertia_com);
            spec.joint = b.joint;
            specs.push_back(std::move(spec));
        }
        try {
            built = build_model(specs);
            built->gravity = s.gravity;
        } catch (const std::exception& e) {
            r.fail("model", e.what());
        }
    }
    const int nv = built ? built->nv : -1;
    const int n_bodies = static_cast<int>(s.bodies.size());

    // ----------------------------------------------------------- muscles
    if (const Json* muscles = r.get(root, "", "muscles", false)) {
        if (!muscles->is_array()) r.fail("muscles", "expected an array");
        else
            for (size_t i = 0; i < muscles->size(); ++i) {
                const std::string mp = at("muscles", static_cast<int>(i));
                const Json& mj = (*muscles)[i];
                if (!r.object(mj, mp)) continue;
                r.check_keys(mj, mp,
                             {"name", "dof_index", "tau_max", "tau_max_antagonist",
                              "tc_a", "tc_d", "active_torque_angle", "torque_velocity",
                              "passive"});
                ScenarioMuscle m;
                m.name = r.str(mj, mp, "name", false, "muscle" + std::to_string(i));
                for (const auto& other : s.muscles)
                    if (other.name == m.name)
                        r.fail(mp + ".name", "duplicate muscle name \"" + m.name + "\"");
                m.dof_index = r.integer(mj, mp, "dof_index", true, 0);
                if (nv >= 0) {
                    if (m.dof_index < 0 || m.dof_index >= nv)
                        r.fail(mp + ".dof_index", "out of range for a model with " +
                                                      std::to_string(nv) + " DoF");
                    else
                        try {
                            ocp_detail::q_slot_of_dq(*built, m.dof_index);
                        } catch (const std::exception& e) {
                            r.fail(mp + ".dof_index", e.what());
                        }
                }
                m.tau_max = r.number(mj, mp, "tau_max", true, 1.0);
                if (!(m.tau_max >= 0.0) || !std::isfinite(m.tau_max))
                    r.fail(mp + ".tau_max", "must be a nonnegative number");
                m.tau_max_antagonist =
                    r.number(mj, mp, "tau_max_antagonist", false, m.tau_max);
                if (!(m.tau_max_antagonist >= 0.0) || !std::isfinite(m.tau_max_antagonist))
                    r.fail(mp + ".tau_max_antagonist", "must be a nonnegative number");
                m.tc_a = r.number(mj, mp, "tc_a", false, 0.011);
                m.tc_d = r.number(mj, mp, "tc_d", false, 0.068);
                if (!(m.tc_a > 0.0)) r.fail(mp + ".tc_a", "must be positive");
                if (!(m.tc_d > 0.0)) r.fail(mp + ".tc_d", "must be positive");
                m.active_torque_angle = scenario_detail::read_curve(
                    r, mj, mp, "active_torque_angle", default_torque_angle_curve());
                m.torque_velocity = scenario_detail::read_curve(
                    r, mj, mp, "torque_velocity", default_torque_velocity_curve());
                // Even an inert passive element (k_p = 0) needs a valid range,
                // so the omission default is a full revolution.
                m.passive = PassiveParams{0.0, 1.0, -3.141592653589793,
                                          3.141592653589793, 0.0};
                if (const Json* pj = r.get(mj, mp, "passive", false)) {
                    const std::string pp = mp + ".passive";
                    if (r.object(*pj, pp)) {
                        r.check_keys(*pj, pp, {"k_p", "c", "q_lo", "q_hi", "b"});
                        m.passive.k_p = r.number(*pj, pp, "k_p", false, 0.0);
                        m.passive.c = r.number(*pj, pp, "c", false, 1.0);
                        m.passive.q_lo = r.number(*pj, pp, "q_lo", true, -1.0);
                        m.passive.q_hi = r.number(*pj, pp, "q_hi", true, 1.0);
                        m.passive.b = r.number(*pj, pp, "b", false, 0.0);
                        if (m.passive.k_p < 0.0) r.fail(pp + ".k_p", "must be nonnegative");
                        if (!(m.passive.c > 0.0)) r.fail(pp + ".c", "must be positive");
                        if (m.passive.b < 0.0) r.fail(pp + ".b", "must be nonnegative");
                        if (!(m.passive.q_lo < m.passive.q_hi))
                            r.fail(pp, "q_lo must be strictly below q_hi");
                    }
                }
                s.muscles.push_back(std::move(m));
            }
    }

    // ------------------------------------------------------- exoskeleton
    if (const Json* exo = r.get(root, "", "exoskeleton", false)) {
        if (r.object(*exo, "exoskeleton")) {
            r.check_keys(*exo, "exoskeleton", {"elements", "free_parameters"});
            if (const Json* elems = r.get(*exo, "exoskeleton", "elements", false)) {
                if (!elems->is_array()) r.fail("exoskeleton.elements", "expected an array");
                else
                    for (size_t i = 0; i < elems->size(); ++i) {
                        const std::string ep =
                            at("exoskeleton.elements", static_cast<int>(i));
                        const Json& ej = (*elems)[i];
                        if (!r.object(ej, ep)) continue;
                        r.check_keys(ej, ep,
                                     {"dof_index", "spring_k", "damper_d", "rest_angle",
                                      "actuator_limit", "added_mass", "added_inertia"});
                        ExoElement e;
                        e.dof_index = r.integer(ej, ep, "dof_index", true, 0);
                        e.spring_k = r.number(ej, ep, "spring_k", false, 0.0);
                        e.damper_d = r.number(ej, ep, "damper_d", false, 0.0);
                        e.rest_angle = r.number(ej, ep, "rest_angle", false, 0.0);
                        e.actuator_limit = r.number(ej, ep, "actuator_limit", false, 0.0);
                        e.added_mass = r.number(ej, ep, "added_mass", false, 0.0);
                        e.added_inertia = r.number(ej, ep, "added_inertia", false, 0.0);
                        if (built)
                            try {
                                validate_element(*built, e, ep);
                            } catch (const std::exception& ex) {
                                r.fail(ep, ex.what());
                            }
                        s.exo.push_back(e);
                    }
            }
            if (const Json* fps = r.get(*exo, "exoskeleton", "free_parameters", false)) {
                if (!fps->is_array())
                    r.fail("exoskeleton.free_parameters", "expected an array");
                else
                    for (size_t i = 0; i < fps->size(); ++i) {
                        const std::string fp =
                            at("exoskeleton.free_parameters", static_cast<int>(i));
                        const Json& fj = (*fps)[i];
                        if (!r.object(fj, fp)) continue;
                        r.check_keys(fj, fp, {"element", "parameter", "lower", "upper"});
                        ScenarioFreeParam f;
                        f.element = r.integer(fj, fp, "element", true, 0);
                        if (f.element < 0 || f.element >= static_cast<int>(s.exo.size()))
                            r.fail(fp + ".element", "no such exoskeleton element");
                        const std::string pname = r.str(fj, fp, "parameter", true, "");
                        f.slot = scenario_detail::param_slot(pname);
                        if (f.slot < 0 && !pname.empty())
                            r.fail(fp + ".parameter", "unknown parameter \"" + pname +
                                                          "\"");
                        f.lower = r.number(fj, fp, "lower", true, 0.0);
                        f.upper = r.number(fj, fp, "upper", true, 0.0);
                        if (!std::isfinite(f.lower) || !std::isfinite(f.upper) ||
                            f.lower > f.upper)
                            r.fail(fp, "bounds must be finite with lower <= upper");
                        else if (f.slot >= 0 && f.slot != kRestAngle && f.lower < 0.0)
                            r.fail(fp + ".lower", "must be nonnegative for " + pname);
                        for (const auto& other : s.free_params)
                            if (other.element == f.element && other.slot == f.slot)
                                r.fail(fp, "duplicate free parameter");
                        if (f.slot >= 0) s.free_params.push_back(f);
                    }
            }
        }
    }

    const int n_pairs = static_cast<int>(s.muscles.size());
    const int nx = built ? built->nq + built->nv + 2 * n_pairs : -1;
    const int nu = 2 * n_pairs + static_cast<int>(s.exo.size());

    // ------------------------------------------------------------ stages
    const Json* stages = r.get(root, "", "stages", true);
    if (stages && !stages->is_array()) r.fail("stages", "expected an array");
    else if (stages && stages->empty())
        r.fail("stages", "at least one stage is required");
    else if (stages)
        for (size_t i = 0; i < stages->size(); ++i) {
            const std::string sp = at("stages", static_cast<int>(i));
            const Json& sj = (*stages)[i];
            if (!r.object(sj, sp)) continue;
            r.check_keys(sj, sp,
                         {"duration_lower", "duration_upper", "n_shooting_intervals",
                          "transition", "contacts", "compliant_contacts",
                          "path_constraints", "boundary_constraints"});
            ScenarioStage st;
            st.duration_lower = r.number(sj, sp, "duration_lower", true, 0.1);
            st.duration_upper = r.number(sj, sp, "duration_upper", true, 1.0);
            if (!(st.duration_lower > 0.0) || !std::isfinite(st.duration_upper) ||
                st.duration_lower > st.duration_upper)
                r.fail(sp, "durations must satisfy 0 < duration_lower <= duration_upper");
            st.n_shooting_intervals = r.integer(sj, sp, "n_shooting_intervals", true, 10);
            if (st.n_shooting_intervals < 1)
                r.fail(sp + ".n_shooting_intervals", "must be at least 1");
            const std::string tr = r.str(sj, sp, "transition", false, "none");
            if (tr == "none") st.transition = TransitionKind::None;
            else if (tr == "impact") st.transition = TransitionKind::ImpactMap;
            else r.fail(sp + ".transition", "unknown transition \"" + tr +
                                                "\" (none|impact)");
            if (i == 0 && st.transition != TransitionKind::None)
                r.fail(sp + ".transition", "the first stage cannot have an incoming "
                                           "transition");

            if (const Json* cs = r.get(sj, sp, "contacts", false)) {
                if (!cs->is_array()) r.fail(sp + ".contacts", "expected an array");
                else
                    for (size_t k = 0; k < cs->size(); ++k) {
                        const std::string cp = at(sp + ".contacts", static_cast<int>(k));
                        const Json& cj = (*cs)[k];
                        if (!r.object(cj, cp)) continue;
                        r.check_keys(cj, cp, {"body", "point", "directions"});
                        ContactPoint c;
                        c.body = r.integer(cj, cp, "body", true, 0);
                        if (c.body < 0 || c.body >= n_bodies)
                            r.fail(cp + ".body", "no such body");
                        c.point = r.vec3(cj, cp, "point", false, Vector3d::Zero());
                        const Json* ds = r.get(cj, cp, "directions", true);
                        if (ds && !ds->is_array())
                            r.fail(cp + ".directions", "expected an array of 3-vectors");
                        else if (ds)
                            for (size_t d = 0; d < ds->size(); ++d) {
                                const std::string dp =
                                    at(cp + ".directions", static_cast<int>(d));
                                const VectorXd v =
                                    r.vecn_value((*ds)[d], dp, Vector3d::UnitZ(), 3);
                                if (std::abs(v.norm() - 1.0) > 1e-9)
                                    r.fail(dp, "direction must be a unit vector");
                                c.directions.emplace_back(v[0], v[1], v[2]);
                            }
                        if (built && c.body >= 0 && c.body < n_bodies)
                            try {
                                validate_contact(*built, c);
                            } catch (const std::exception& e) {
                                r.fail(cp, e.what());
                            }
                        st.contacts.push_back(std::move(c));
                    }
            }
            if (st.transition == TransitionKind::ImpactMap && st.contacts.empty())
                r.fail(sp, "an impact transition requires contacts in this stage");

            if (const Json* cs = r.get(sj, sp, "compliant_contacts", false)) {
                if (!cs->is_array())
                    r.fail(sp + ".compliant_contacts", "expected an array");
                else
                    for (size_t k = 0; k < cs->size(); ++k) {
                        const std::string cp =
                            at(sp + ".compliant_contacts", static_cast<int>(k));
                        const Json& cj = (*cs)[k];
                        if (!r.object(cj, cp)) continue;
                        r.check_keys(cj, cp,
                                     {"body", "point", "stiffness", "damping",
                                      "rest_point"});
                        CompliantContact c;
                        c.body = r.integer(cj, cp, "body", true, 0);
                        if (c.body < 0 || c.body >= n_bodies)
                            r.fail(cp + ".body", "no such body");
                        c.point = r.vec3(cj, cp, "point", false, Vector3d::Zero());
                        c.stiffness = r.number(cj, cp, "stiffness", false, 0.0);
                        c.damping = r.number(cj, cp, "damping", false, 0.0);
                        if (c.stiffness < 0.0 || c.damping < 0.0)
                            r.fail(cp, "stiffness and damping must be nonnegative");
                        c.rest_point =
                            r.vec3(cj, cp, "rest_point", false, Vector3d::Zero());
                        st.compliant_contacts.push_back(std::move(c));
                    }
            }

            if (const Json* ps = r.get(sj, sp, "path_constraints", false)) {
                if (!ps->is_array()) r.fail(sp + ".path_constraints", "expected an array");
                else
                    for (size_t k = 0; k < ps->size(); ++k) {
                        const std::string pp =
                            at(sp + ".path_constraints", static_cast<int>(k));
                        const Json& pj = (*ps)[k];
                        if (!r.object(pj, pp)) continue;
                        r.check_keys(pj, pp, {"kind", "index", "lower", "upper"});
                        PathConstraint pc;
                        const std::string kind = r.str(pj, pp, "kind", true, "");
                        int limit = -1;
                        if (kind == "contact_force") {
                            pc.kind = PathConstraint::Kind::ContactForce;
                            limit = contact_rows(st.contacts);
                        } else if (kind == "state") {
                            pc.kind = PathConstraint::Kind::State;
                            limit = nx;
                        } else if (kind == "control") {
                            pc.kind = PathConstraint::Kind::Control;
                            limit = nu;
                        } else if (!kind.empty())
                            r.fail(pp + ".kind", "unknown kind \"" + kind +
                                                     "\" (contact_force|state|control)");
                        pc.index = r.integer(pj, pp, "index", true, 0);
                        if (limit >= 0 && (pc.index < 0 || pc.index >= limit))
                            r.fail(pp + ".index", "out of range (limit " +
                                                      std::to_string(limit) + ")");
                        pc.lower = r.number(pj, pp, "lower", false, -kInf);
                        pc.upper = r.number(pj, pp, "upper", false, kInf);
                        if (pc.lower > pc.upper)
                            r.fail(pp, "lower must not exceed upper");
                        if (!std::isfinite(pc.lower) && !std::isfinite(pc.upper))
                            r.fail(pp, "needs a finite lower or upper bound");
                        st.path_constraints.push_back(pc);
                    }
            }

            if (const Json* bs = r.get(sj, sp, "boundary_constraints", false)) {
                if (!bs->is_array())
                    r.fail(sp + ".boundary_constraints", "expected an array");
                else
                    for (size_t k = 0; k < bs->size(); ++k) {
                        const std::string bp =
                            at(sp + ".boundary_constraints", static_cast<int>(k));
                        const Json& bj = (*bs)[k];
                        if (!r.object(bj, bp)) continue;
                        ScenarioBoundary b;
                        b.at_end = r.boolean(bj, bp, "at_end", false, true);
                        const std::string kind = r.str(bj, bp, "kind", true, "");
                        if (kind == "state") {
                            b.kind = ScenarioBoundary::Kind::State;
                            r.check_keys(bj, bp, {"at_end", "kind", "indices", "values"});
                            const Json* idx = r.get(bj, bp, "indices", true);
                            const Json* val = r.get(bj, bp, "values", true);
                            if (idx && idx->is_array())
                                for (size_t q = 0; q < idx->size(); ++q) {
                                    if (!(*idx)[q].is_number_integer()) {
                                        r.fail(at(bp + ".indices", static_cast<int>(q)),
                                               "expected an integer");
                                        continue;
                                    }
                                    const int ix = (*idx)[q].get<int>();
                                    if (nx >= 0 && (ix < 0 || ix >= nx))
                                        r.fail(at(bp + ".indices", static_cast<int>(q)),
                                               "state index out of range");
                                    b.indices.push_back(ix);
                                }
                            else if (idx)
                                r.fail(bp + ".indices", "expected an array of integers");
                            if (val) {
                                const VectorXd v = r.vecn_value(*val, bp + ".values",
                                                                VectorXd());
                                for (int q = 0; q < v.size(); ++q)
                                    b.values.push_back(v[q]);
                            }
                            if (b.indices.empty())
                                r.fail(bp + ".indices", "must not be empty");
                            if (b.indices.size() != b.values.size())
                                r.fail(bp, "indices and values must have equal length");
                        } else if (kind == "point_height") {
                            b.kind = ScenarioBoundary::Kind::PointHeight;
                            r.check_keys(bj, bp,
                                         {"at_end", "kind", "body", "point", "height"});
                            b.body = r.integer(bj, bp, "body", true, 0);
                            if (b.body < 0 || b.body >= n_bodies)
                                r.fail(bp + ".body", "no such body");
                            b.point = r.vec3(bj, bp, "point", false, Vector3d::Zero());
                            b.height = r.number(bj, bp, "height", false, 0.0);
                        } else if (!kind.empty())
                            r.fail(bp + ".kind",
                                   "unknown kind \"" + kind + "\" (state|point_height)");
                        if (!kind.empty() && (kind == "state" || kind == "point_height"))
                            st.boundaries.push_back(std::move(b));
                    }
            }
            s.stages.push_back(std::move(st));
        }

    // -------------------------------------------------------------- cost
    if (const Json* cj = r.get(root, "", "cost", true)) {
        if (r.object(*cj, "cost")) {
            r.check_keys(*cj, "cost", {"w_excitation", "w_actuator", "w_time", "terminal"});
            s.cost.w_excitation = r.number(*cj, "cost", "w_excitation", false, 0.0);
            s.cost.w_actuator = r.number(*cj, "cost", "w_actuator", false, 0.0);
            s.cost.w_time = r.number(*cj, "cost", "w_time", false, 0.0);
            if (s.cost.w_excitation < 0.0) r.fail("cost.w_excitation", "must be nonnegative");
            if (s.cost.w_actuator < 0.0) r.fail("cost.w_actuator", "must be nonnegative");
            if (s.cost.w_time < 0.0) r.fail("cost.w_time", "must be nonnegative");
            double total = s.cost.w_excitation + s.cost.w_actuator + s.cost.w_time;
            if (const Json* ts = r.get(*cj, "cost", "terminal", false)) {
                if (!ts->is_array()) r.fail("cost.terminal", "expected an array");
                else
                    for (size_t k = 0; k < ts->size(); ++k) {
                        const std::string tp = at("cost.terminal", static_cast<int>(k));
                        const Json& tj = (*ts)[k];
                        if (!r.object(tj, tp)) continue;
                        r.check_keys(tj, tp, {"state_index", "target", "weight"});
                        TerminalCostTerm t;
                        t.state_index = r.integer(tj, tp, "state_index", true, 0);
                        if (nx >= 0 && (t.state_index < 0 || t.state_index >= nx))
                            r.fail(tp + ".state_index", "out of range");
                        t.target = r.number(tj, tp, "target", false, 0.0);
                        t.weight = r.number(tj, tp, "weight", true, 0.0);
                        if (t.weight < 0.0) r.fail(tp + ".weight", "must be nonnegative");
                        total += t.weight;
                        s.cost.terminal.push_back(t);
                    }
            }
            if (!(total > 0.0)) r.fail("cost", "all weights are zero");
        }
    }

    // ----------------------------------------------- state and guesses
    s.initial_state = r.vecn(root, "", "initial_state", true, VectorXd(), nx);
    if (nx >= 0 && s.initial_state.size() == nx &&
        !s.initial_state.allFinite())
        r.fail("initial_state", "entries must be finite");
    for (int k = 0; nx >= 0 && k < n_pairs; ++k) {
        if (s.initial_state.size() != nx) break;
        const double a0 = s.initial_state[nx - 2 * n_pairs + 2 * k];
        const double a1 = s.initial_state[nx - 2 * n_pairs + 2 * k + 1];
        if (a0 < 0.0 || a0 > 1.0 || a1 < 0.0 || a1 > 1.0)
            r.fail("initial_state", "activations must lie in [0,1]");
    }

    if (const Json* ga = r.get(root, "", "guess_anchors", false)) {
        if (!ga->is_array()) r.fail("guess_anchors", "expected an array of states");
        else {
            for (size_t k = 0; k < ga->size(); ++k)
                s.guess_anchors.push_back(r.vecn_value(
                    (*ga)[k], at("guess_anchors", static_cast<int>(k)), VectorXd(), nx));
            if (s.guess_anchors.size() != s.stages.size() + 1)
                r.fail("guess_anchors", "expected n_stages+1 = " +
                                            std::to_string(s.stages.size() + 1) +
                                            " anchors, got " +
                                            std::to_string(s.guess_anchors.size()));
        }
    }
    if (const Json* gd = r.get(root, "", "guess_durations", false)) {
        const VectorXd v = r.vecn_value(*gd, "guess_durations", VectorXd(),
                                        static_cast<int>(s.stages.size()));
        for (int k = 0; k < v.size(); ++k) {
            if (k < static_cast<int>(s.stages.size()) &&
                (v[k] < s.stages[static_cast<size_t>(k)].duration_lower ||
                 v[k] > s.stages[static_cast<size_t>(k)].duration_upper))
                r.fail(at("guess_durations", k), "outside the stage's duration bounds");
            s.guess_durations.push_back(v[k]);
        }
    }
    s.guess_control = r.number(root, "", "guess_control", false, 0.1);
    if (!std::isfinite(s.guess_control))
        r.fail("guess_control", "must be finite");

    s.rk4_substeps = r.integer(root, "", "rk4_substeps", false, 10);
    if (s.rk4_substeps < 1) r.fail("rk4_substeps", "must be at least 1");

    // ------------------------------------------------------------ solver
    if (const Json* so = r.get(root, "", "solver", false)) {
        if (r.object(*so, "solver")) {
            r.check_keys(*so, "solver",
                         {"kkt_tol", "constraint_tol", "max_iterations", "hessian"});
            s.solver.kkt_tol = r.number(*so, "solver", "kkt_tol", false, 1e-6);
            s.solver.constraint_tol =
                r.number(*so, "solver", "constraint_tol", false, 1e-8);
            if (!(s.solver.kkt_tol > 0.0)) r.fail("solver.kkt_tol", "must be positive");
            if (!(s.solver.constraint_tol > 0.0))
                r.fail("solver.constraint_tol", "must be positive");
            s.solver.max_iterations = r.integer(*so, "solver", "max_iterations", false, 200);
            if (s.solver.max_iterations < 1)
                r.fail("solver.max_iterations", "must be at least 1");
            const std::string h = r.str(*so, "solver", "hessian", false, "bfgs");
            if (h == "bfgs") s.solver.hessian = HessianMode::DampedBfgs;
            else if (h == "gauss_newton") s.solver.hessian = HessianMode::GaussNewtonDefects;
            else r.fail("solver.hessian", "unknown mode \"" + h +
                                              "\" (bfgs|gauss_newton)");
        }
    }

    if (!r.errs.empty()) throw ScenarioError(std::move(r.errs));
    return s;
}

inline Scenario parse_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError({path + ": cannot open file"});
    Json root;
    try {
        root = Json::parse(in);
    } catch (const std::exception& e) {
        throw ScenarioError({std::string("malformed JSON: ") + e.what()});
    }
    return scenario_from_json(root);
}

// --------------------------------------------------------------- serialize

namespace scenario_detail {

inline Json to_json(const Vector3d& v) { return Json::array({v[0], v[1], v[2]}); }

inline Json to_json(const Matrix3d& m) {
    Json rows = Json::array();
    for (int i = 0; i < 3; ++i)
        rows.push_back(Json::array({m(i, 0), m(i, 1), m(i, 2)}));
    return rows;
}

inline Json to_json(const VectorXd& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json to_json(const BezierCurve2D& c) {
    Json j;
    j["x"] = Json::array({c.x[0], c.x[1], c.x[2], c.x[3], c.x[4], c.x[5]});
    j["y"] = Json::array({c.y[0], c.y[1], c.y[2], c.y[3], c.y[4], c.y[5]});
    return j;
}

}  // namespace scenario_detail

/// Canonical JSON form: every field written explicitly (defaults included),
/// infinite path-constraint bounds omitted. parse ∘ serialize is the
/// identity on valid scenarios.
inline Json serialize_scenario(const Scenario& s) {
    using scenario_detail::to_json;
    Json j;
    j["version"] = s.version;
    j["name"] = s.name;

    Json model;
    model["gravity"] = to_json(s.gravity);
    Json bodies = Json::array();
    for (const auto& b : s.bodies) {
        Json bj;
        bj["name"] = b.name;
        bj["mass"] = b.mass;
        bj["com"] = to_json(b.com);
        bj["inertia_com"] = to_json(b.inertia_com);
        Json jj;
        switch (b.joint.kind) {
            case JointKind::Revolute1: jj["kind"] = "revolute1"; break;
            case JointKind::Revolute2: jj["kind"] = "revolute2"; break;
            case JointKind::Revolute3: jj["kind"] = "revolute3"; break;
            case JointKind::Floating: jj["kind"] = "floating"; break;
        }
        Json axes = Json::array();
        for (const auto& a : b.joint.axes) axes.push_back(to_json(a));
        jj["axes"] = axes;
        jj["parent"] = b.joint.parent;
        jj["offset_translation"] = to_json(b.joint.frame_offset.translation);
        jj["offset_rotation"] = to_json(b.joint.frame_offset.rotation);
        bj["joint"] = jj;
        bodies.push_back(bj);
    }
    model["bodies"] = bodies;
    j["model"] = model;

    Json muscles = Json::array();
    for (const auto& m : s.muscles) {
        Json mj;
        mj["name"] = m.name;
        mj["dof_index"] = m.dof_index;
        mj["tau_max"] = m.tau_max;
        mj["tau_max_antagonist"] = m.tau_max_antagonist;
        mj["tc_a"] = m.tc_a;
        mj["tc_d"] = m.tc_d;
        mj["active_torque_angle"] = to_json(m.active_torque_angle);
        mj["torque_velocity"] = to_json(m.torque_velocity);
        Json pj;
        pj["k_p"] = m.passive.k_p;
        pj["c"] = m.passive.c;
        pj["q_lo"] = m.passive.q_lo;
        pj["q_hi"] = m.passive.q_hi;
        pj["b"] = m.passive.b;
        mj["passive"] = pj;
        muscles.push_back(mj);
    }
    j["muscles"] = muscles;

    Json exo;
    Json elems = Json::array();
    for (const auto& e : s.exo) {
        Json ej;
        ej["dof_index"] = e.dof_index;
        ej["spring_k"] = e.spring_k;
        ej["damper_d"] = e.damper_d;
        ej["rest_angle"] = e.rest_angle;
        ej["actuator_limit"] = e.actuator_limit;
        ej["added_mass"] = e.added_mass;
        ej["added_inertia"] = e.added_inertia;
        elems.push_back(ej);
    }
    exo["elements"] = elems;
    Json fps = Json::array();
    for (const auto& f : s.free_params) {
        Json fj;
        fj["element"] = f.element;
        fj["parameter"] = scenario_detail::kParamNames[f.slot];
        fj["lower"] = f.lower;
        fj["upper"] = f.upper;
        fps.push_back(fj);
    }
    exo["free_parameters"] = fps;
    j["exoskeleton"] = exo;

    Json stages = Json::array();
    for (const auto& st : s.stages) {
        Json sj;
        sj["duration_lower"] = st.duration_lower;
        sj["duration_upper"] = st.duration_upper;
        sj["n_shooting_intervals"] = st.n_shooting_intervals;
        sj["transition"] =
            st.transition == TransitionKind::ImpactMap ? "impact" : "none";
        Json cs = Json::array();
        for (const auto& c : st.contacts) {
            Json cj;
            cj["body"] = c.body;
            cj["point"] = to_json(c.point);
            Json ds = Json::array();
            for (const auto& d : c.directions) ds.push_back(to_json(d));
            cj["directions"] = ds;
            cs.push_back(cj);
        }
        sj["contacts"] = cs;
        Json ccs = Json::array();
        for (const auto& c : st.compliant_contacts) {
            Json cj;
            cj["body"] = c.body;
            cj["point"] = to_json(c.point);
            cj["stiffness"] = c.stiffness;
            cj["damping"] = c.damping;
            cj["rest_point"] = to_json(c.rest_point);
            ccs.push_back(cj);
        }
        sj["compliant_contacts"] = ccs;
        Json ps = Json::array();
        for (const auto& pc : st.path_constraints) {
            Json pj;
            switch (pc.kind) {
                case PathConstraint::Kind::ContactForce:
                    pj["kind"] = "contact_force";
                    break;
                case PathConstraint::Kind::State: pj["kind"] = "state"; break;
                case PathConstraint::Kind::Control: pj["kind"] = "control"; break;
            }
            pj["index"] = pc.index;
            if (std::isfinite(pc.lower)) pj["lower"] = pc.lower;
            if (std::isfinite(pc.upper)) pj["upper"] = pc.upper;
            ps.push_back(pj);
        }
        sj["path_constraints"] = ps;
        Json bs = Json::array();
        for (const auto& b : st.boundaries) {
            Json bj;
            bj["at_end"] = b.at_end;
            if (b.kind == ScenarioBoundary::Kind::State) {
                bj["kind"] = "state";
                bj["indices"] = b.indices;
                bj["values"] = b.values;
            } else {
                bj["kind"] = "point_height";
                bj["body"] = b.body;
                bj["point"] = to_json(b.point);
                bj["height"] = b.height;
            }
            bs.push_back(bj);
        }
        sj["boundary_constraints"] = bs;
        stages.push_back(sj);
    }
    j["stages"] = stages;

    Json cost;
    cost["w_excitation"] = s.cost.w_excitation;
    cost["w_actuator"] = s.cost.w_actuator;
    cost["w_time"] = s.cost.w_time;
    Json terms = Json::array();
    for (const auto& t : s.cost.terminal) {
        Json tj;
        tj["state_index"] = t.state_index;
        tj["target"] = t.target;
        tj["weight"] = t.weight;
        terms.push_back(tj);
    }
    cost["terminal"] = terms;
    j["cost"] = cost;

    j["initial_state"] = to_json(s.initial_state);
    Json anchors = Json::array();
    for (const auto& a : s.guess_anchors) anchors.push_back(to_json(a));
    j["guess_anchors"] = anchors;
    j["guess_durations"] = s.guess_durations;
    j["guess_control"] = s.guess_control;
    j["rk4_substeps"] = s.rk4_substeps;

    Json solver;
    solver["kkt_tol"] = s.solver.kkt_tol;
    solver["constraint_tol"] = s.solver.constraint_tol;
    solver["max_iterations"] = s.solver.max_iterations;
    solver["hessian"] =
        s.solver.hessian == HessianMode::GaussNewtonDefects ? "gauss_newton" : "bfgs";
    j["solver"] = solver;
    return j;
}

// ------------------------------------------------------------------ build

/// Materializes the optimal control problem a validated scenario describes.
/// Boundary-constraint callbacks capture the built model by value, so the
/// returned problem does not reference the scenario.
inline OcProblem build_problem(const Scenario& s) {
    OcProblem p;
    std::vector<BodySpec> specs;
    for (const auto& b : s.bodies) {
        BodySpec spec;
        spec.name = b.name;
        spec.inertia = SpatialInertia::from_com_inertia(b.mass, b.com, b.inertia_com);
        spec.joint = b.joint;
        specs.push_back(std::move(spec));
    }
    p.model = build_model(specs);
    p.model.gravity = s.gravity;

    for (const auto& m : s.muscles) {
        MusclePair pair;
        pair.name = m.name;
        pair.agonist.dof_index = m.dof_index;
        pair.agonist.sign = 1.0;
        pair.agonist.tau_max = m.tau_max;
        pair.agonist.active_torque_angle = m.active_torque_angle;
        pair.agonist.torque_velocity = m.torque_velocity;
        pair.agonist.passive = m.passive;
        pair.agonist.tc_a = m.tc_a;
        pair.agonist.tc_d = m.tc_d;
        pair.antagonist = pair.agonist;
        pair.antagonist.sign = -1.0;
        pair.antagonist.tau_max = m.tau_max_antagonist;
        // The pair-level passive element lives on the agonist; the antagonist
        // keeps the range (validity) but contributes no passive torque.
        pair.antagonist.passive.k_p = 0.0;
        pair.antagonist.passive.b = 0.0;
        p.muscles.push_back(std::move(pair));
    }

    p.exo = s.exo;
    p.design_space.params.assign(s.exo.size(), {});
    for (const auto& f : s.free_params)
        p.design_space.params[static_cast<size_t>(f.element)][static_cast<size_t>(
            f.slot)] = ParamSpec{true, f.lower, f.upper};

    for (const auto& st : s.stages) {
        Stage stage;
        stage.duration_lower = st.duration_lower;
        stage.duration_upper = st.duration_upper;
        stage.n_shooting_intervals = st.n_shooting_intervals;
        stage.transition = st.transition;
        stage.contacts = st.contacts;
        stage.compliant_contacts = st.compliant_contacts;
        stage.path_constraints = st.path_constraints;
        for (const auto& b : st.boundaries) {
            BoundaryConstraint bc;
            bc.at_end = b.at_end;
            if (b.kind == ScenarioBoundary::Kind::State) {
                bc.dim = static_cast<int>(b.indices.size());
                bc.fn = [idx = b.indices, val = b.values](const VectorXd& x) {
                    VectorXd rr(idx.size());
                    for (size_t k = 0; k < idx.size(); ++k)
                        rr[static_cast<int>(k)] = x[idx[k]] - val[k];
                    return rr;
                };
            } else {
                bc.dim = 1;
                bc.fn = [model = p.model, body = b.body, pt = b.point,
                         h = b.height](const VectorXd& x) {
                    const Vector3d pw =
                        point_position(model, x.head(model.nq), body, pt);
                    return VectorXd::Constant(1, pw.z() - h);
                };
            }
            stage.boundary_constraints.push_back(std::move(bc));
        }
        p.stages.push_back(std::move(stage));
    }

    p.cost = s.cost;
    p.initial_state = s.initial_state;
    p.guess_anchors = s.guess_anchors;
    p.rk4_substeps = s.rk4_substeps;
    return p;
}

}  // namespace exosim

#endif  // EXOSIM_SCENARIO_HPP
