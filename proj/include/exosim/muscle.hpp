/* -------------------------------------------------------------------------- *
 * exosim: include/exosim/muscle.hpp                                          *
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
#ifndef EXOSIM_MUSCLE_HPP
#define EXOSIM_MUSCLE_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "exosim/spatial.hpp"

namespace exosim {

/// Planar 5th-order Bézier curve through 6 control points. The x coordinates
/// must be strictly increasing so x(t) is invertible.
struct BezierCurve2D {
    std::array<double, 6> x{};
    std::array<double, 6> y{};
};

inline void validate_curve(const BezierCurve2D& c, const std::string& what) {
    for (int i = 0; i + 1 < 6; ++i)
        if (!(c.x[i] < c.x[i + 1]))
            throw std::invalid_argument(what + ": x control points must be strictly increasing");
    for (int i = 0; i < 6; ++i)
        if (c.y[i] < 0.0)
            throw std::invalid_argument(what + ": y control points must be nonnegative");
}

/// De Casteljau evaluation of both coordinates at parameter t in [0,1].
inline Eigen::Vector2d bezier_eval(const BezierCurve2D& c, double t) {
    if (t < 0.0 || t > 1.0)
        throw std::invalid_argument("bezier_eval: parameter outside [0,1]");
    std::array<Eigen::Vector2d, 6> p;
    for (int i = 0; i < 6; ++i) p[i] = Eigen::Vector2d(c.x[i], c.y[i]);
    for (int r = 5; r >= 1; --r)
        for (int i = 0; i < r; ++i) p[i] = (1.0 - t) * p[i] + t * p[i + 1];
    return p[0];
}

/// Derivative (dx/dt, dy/dt) at parameter t.
inline Eigen::Vector2d bezier_derivative(const BezierCurve2D& c, double t) {
    if (t < 0.0 || t > 1.0)
        throw std::invalid_argument("bezier_derivative: parameter outside [0,1]");
    std::array<Eigen::Vector2d, 5> d;
    for (int i = 0; i < 5; ++i)
        d[i] = 5.0 * Eigen::Vector2d(c.x[i + 1] - c.x[i], c.y[i + 1] - c.y[i]);
    for (int r = 4; r >= 1; --r)
        for (int i = 0; i < r; ++i) d[i] = (1.0 - t) * d[i] + t * d[i + 1];
    return d[0];
}

/// Solves x(t) = x_query for t by safeguarded Newton iteration with a
/// bisection fallback. x_query outside the x range clamps to t = 0 or 1.
inline double bezier_solve_parameter(const BezierCurve2D& c, double x_query) {
    if (x_query <= c.x[0]) return 0.0;
    if (x_query >= c.x[5]) return 1.0;
    double lo = 0.0, hi = 1.0;
    double t = (x_query - c.x[0]) / (c.x[5] - c.x[0]);
    for (int iter = 0; iter < 200; ++iter) {
        const double err = bezier_eval(c, t)[0] - x_query;
        if (std::abs(err) < 1e-13) break;
        if (err > 0.0)
            hi = t;
        else
            lo = t;
        const double slope = bezier_derivative(c, t)[0];
        double next = (slope > 1e-14) ? t - err / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        t = next;
    }
    return t;
}

/// y at the parameter where x(t) = x_query; outside the x range the endpoint
/// y value is returned (constant extrapolation).
inline double bezier_value_at(const BezierCurve2D& c, double x_query) {
    return bezier_eval(c, bezier_solve_parameter(c, x_query))[1];
}

/// Joint-limit stiffness and damping parameters of the passive torque.
struct PassiveParams {
    double k_p = 0.0;   ///< N·m
    double c = 1.0;     ///< 1/rad
    double q_lo = 0.0;  ///< rad
    double q_hi = 0.0;  ///< rad
    double b = 0.0;     ///< N·m·s/rad
};

/// One directional torque muscle acting on a joint DoF. sign +1 pulls the
/// coordinate positive (agonist), -1 negative (antagonist).
struct TorqueMuscle {
    int dof_index = 0;
    double sign = 1.0;
    double tau_max = 1.0;  ///< N·m
    BezierCurve2D active_torque_angle;
    BezierCurve2D torque_velocity;
    PassiveParams passive;
    double tc_a = 0.011;  ///< activation time constant, s
    double tc_d = 0.068;  ///< deactivation time constant, s
};

/// Bell-shaped torque-angle factor: peak 1.0 at mid-range, 0.3 at the ends.
inline BezierCurve2D default_torque_angle_curve() {
    BezierCurve2D c;
    c.x = {-1.5, -0.9, -0.3, 0.3, 0.9, 1.5};
    c.y = {0.3, 0.54, 1.3, 1.3, 0.54, 0.3};
    return c;
}

/// Torque-velocity factor: 1.0 at rest, saturating at 1.4 for eccentric,
/// zero at 10 rad/s concentric.
inline BezierCurve2D default_torque_velocity_curve() {
    BezierCurve2D c;
    c.x = {-10.0, -6.0, -2.0, 2.0, 6.0, 10.0};
    c.y = {1.4, 1.4, 1.4, 0.96, 0.0, 0.0};
    return c;
}

inline void validate_muscle(const TorqueMuscle& m, const std::string& what) {
    if (!(m.tau_max > 0.0)) throw std::invalid_argument(what + ": tau_max must be positive");
    if (!(m.tc_a > 0.0 && m.tc_d > 0.0))
        throw std::invalid_argument(what + ": time constants must be positive");
    if (!(m.passive.q_lo < m.passive.q_hi))
        throw std::invalid_argument(what + ": passive range needs q_lo < q_hi");
    if (m.sign != 1.0 && m.sign != -1.0)
        throw std::invalid_argument(what + ": sign must be +1 or -1");
    validate_curve(m.active_torque_angle, what + " torque-angle");
    validate_curve(m.torque_velocity, what + " torque-velocity");
}

/// Passive joint-limit torque: double-exponential stiffness plus linear
/// damping. Exponent arguments are clamped to ±50 to avoid overflow.
inline double passive_torque(const TorqueMuscle& m, double q, double qd) {
    const auto bounded_exp = [](double arg) {
        return std::exp(std::clamp(arg, -50.0, 50.0));
    };
    const auto& p = m.passive;
    return p.k_p * (bounded_exp(p.c * (p.q_lo - q)) - bounded_exp(p.c * (q - p.q_hi))) -
           p.b * qd;
}

/// Active contraction torque: sign-folded torque-angle and torque-velocity
/// factors scaled by activation.
inline double active_torque(const TorqueMuscle& m, double q, double qd, double a) {
    if (a < 0.0 || a > 1.0)
        throw std::invalid_argument("active_torque: activation outside [0,1]");
    const double fa = bezier_value_at(m.active_torque_angle, m.sign * q);
    const double fv = bezier_value_at(m.torque_velocity, m.sign * qd);
    return m.sign * fa * fv * m.tau_max * a;
}

/// Agonist-antagonist pair acting on one joint DoF. The passive element is
/// carried once, by the agonist.
struct MusclePair {
    std::string name;
    TorqueMuscle agonist;     ///< sign +1
    TorqueMuscle antagonist;  ///< sign -1
};

/// Total muscle torque on the pair's DoF: passive plus both active terms.
inline double total_torque(const MusclePair& pair, double q, double qd, double a_ag,
                           double a_an) {
    return passive_torque(pair.agonist, q, qd) + active_torque(pair.agonist, q, qd, a_ag) +
           active_torque(pair.antagonist, q, qd, a_an);
}

/// Activation rate from excitation e: fast excitation-weighted rise, slower
/// first-order decay. Both branches vanish exactly at e = a.
inline double activation_rate(double e, double a, double tc_a, double tc_d) {
    if (e < 0.0 || e > 1.0) throw std::invalid_argument("activation_rate: e outside [0,1]");
    if (a < 0.0 || a > 1.0) throw std::invalid_argument("activation_rate: a outside [0,1]");
    if (e >= a) return (e - a) * (e / tc_a + (1.0 - e) / tc_d);
    return (e - a) / tc_d;
}

/// Analytic activation trajectory under constant excitation. Constant e
/// cannot cross a(t), so the branch chosen at t=0 holds for all t ≥ 0.
inline double activation_closed_form(double e, double a0, double t, double tc_a = 0.011,
                                     double tc_d = 0.068) {
    if (e < 0.0 || e > 1.0)
        throw std::invalid_argument("activation_closed_form: e outside [0,1]");
    if (a0 < 0.0 || a0 > 1.0)
        throw std::invalid_argument("activation_closed_form: a0 outside [0,1]");
    const double lambda = (e >= a0) ? (e / tc_a + (1.0 - e) / tc_d) : (1.0 / tc_d);
    return e + (a0 - e) * std::exp(-lambda * t);
}

}  // namespace exosim

#endif  // EXOSIM_MUSCLE_HPP
