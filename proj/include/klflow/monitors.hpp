#pragma once

#include <klflow/flow_types.hpp>

#include <algorithm>
#include <cmath>
#include <utility>

namespace klflow {

// Forward-difference residual of the energy identity
//   d/dt PHI + lambda ||xdot||^2 + <xdot, vdot> = 0
// over one step. Zero for the exact flow in the h -> 0 limit; the magnitude
// tracks the stepping scheme's consistency error.
inline double energy_identity_residual(double phi_next, double phi, const Vector& dx,
                                       const Vector& dv, double h, double lambda) {
    if (!(h > 0.0)) throw std::invalid_argument("energy_identity_residual: h must be > 0");
    const Vector xr = dx / h;
    const Vector vr = dv / h;
    return (phi_next - phi) / h + lambda * xr.squaredNorm() + xr.dot(vr);
}

// Baillon-Haddad slack: <dx, dv> - rho ||dv||^2, nonnegative whenever both
// v's are gradients of a convex phi with (1/rho)-Lipschitz gradient.
inline double cocoercivity_slack(const Vector& dx, const Vector& dv, double rho) {
    return dx.dot(dv) - rho * dv.squaredNorm();
}

// Discrete slack of the forcing bound
//   d/dt( 0.5 ||v + grad psi||^2 ) + 0.75 ||vdot||^2 <= L(lambda+L) ||xdot||^2,
// with s = ||v + grad psi(x)|| at the step endpoints. Positive = violation.
inline double forcing_residual(double s_next, double s_prev, const Vector& dx,
                               const Vector& dv, double h, double L, double lambda) {
    if (!(h > 0.0)) throw std::invalid_argument("forcing_residual: h must be > 0");
    const double ds2 = 0.5 * (s_next * s_next - s_prev * s_prev) / h;
    return ds2 + 0.75 * dv.squaredNorm() / (h * h) -
           L * (lambda + L) * dx.squaredNorm() / (h * h);
}

// Worst positive forcing slack across a run; 0 when the bound always holds.
inline double forcing_inequality_check(const std::vector<StepDiagnostics>& diags) {
    double worst = 0.0;
    for (const auto& d : diags) worst = std::max(worst, d.forcing_slack);
    return worst;
}

// Max increase of PHI across consecutive accepted steps (0 = monotone).
inline double monotonicity_check(const Trajectory& traj) {
    double worst = 0.0;
    if (traj.diagnostics.empty()) return 0.0;
    for (const auto& d : traj.diagnostics) worst = std::max(worst, d.descent);
    return worst;
}

// Smallest <dx,dv>/h over the run; subdifferential monotonicity keeps it >= 0.
inline double cross_term_min(const Trajectory& traj) {
    double worst = 0.0;
    for (const auto& d : traj.diagnostics) worst = std::min(worst, d.cross_term);
    return worst;
}

struct KLCheckReport {
    int points_total = 0;    // grid points supplied
    int points_checked = 0;  // after the radius / level-gap filters
    int violations = 0;      // points with violation above tol
    double max_violation = 0.0;
    double empirical_constant = 0.0;  // minimal C supported by the checked points
};

namespace detail {

inline void kl_accumulate(KLCheckReport& rep, double gap, double resid_norm, double theta,
                          double C, double tol) {
    ++rep.points_checked;
    const double lhs = std::pow(gap, theta);
    const double violation = lhs - C * resid_norm;
    rep.max_violation = std::max(rep.max_violation, violation);
    if (violation > tol) ++rep.violations;
    if (resid_norm > 1e-300)
        rep.empirical_constant = std::max(rep.empirical_constant, lhs / resid_norm);
}

}  // namespace detail

// Checks |PHI(x) - PHI(xbar)|^theta <= C ||grad PHI(x)|| on the supplied grid,
// restricted to 0 < ||x - xbar|| < radius and a level gap in (0, level_gap).
// Smooth mode only; prox-mode points need a certified subgradient (see the
// trajectory overload).
inline KLCheckReport kl_inequality_check(const ObjectiveSpec& spec, const KLProfile& profile,
                                         const std::vector<Vector>& grid,
                                         double tol = 1e-12) {
    if (grid.empty()) throw std::invalid_argument("kl_inequality_check: empty grid");
    if (!spec.is_smooth_mode())
        throw std::logic_error("kl_inequality_check: grid form needs gradient oracles; "
                               "pass a trajectory in prox mode");
    KLCheckReport rep;
    rep.points_total = static_cast<int>(grid.size());
    for (const Vector& x : grid) {
        const double dist = (x - profile.critical_point).norm();
        if (!(dist > 0.0) || dist >= profile.radius) continue;
        const double gap = eval_objective(spec, x) - profile.critical_value;
        if (!(gap > 0.0) || gap >= profile.level_gap) continue;
        detail::kl_accumulate(rep, gap, grad_total(spec, x).norm(), profile.theta,
                              profile.constant, tol);
    }
    return rep;
}

// Trajectory overload: uses the visited states and their certified v, so it
// works in prox mode where grad phi does not exist.
inline KLCheckReport kl_inequality_check(const ObjectiveSpec& spec, const KLProfile& profile,
                                         const Trajectory& traj, double tol = 1e-12) {
    if (traj.samples.empty()) throw std::invalid_argument("kl_inequality_check: empty grid");
    KLCheckReport rep;
    rep.points_total = static_cast<int>(traj.samples.size());
    for (const FlowState& s : traj.samples) {
        const double dist = (s.x - profile.critical_point).norm();
        if (!(dist > 0.0) || dist >= profile.radius) continue;
        const double gap = eval_objective(spec, s.x) - profile.critical_value;
        if (!(gap > 0.0) || gap >= profile.level_gap) continue;
        detail::kl_accumulate(rep, gap, (s.v + spec.smooth.gradient(s.x)).norm(),
                              profile.theta, profile.constant, tol);
    }
    return rep;
}

// Tail residuals over the final fraction of samples: returns
// (max ||v + grad psi(x)||, max (||dx|| + ||dv||)/dt). Both must vanish for
// the run to qualify as converged to a stationary pair.
inline std::pair<double, double> vanishing_check(const Trajectory& traj,
                                                 double tail_fraction = 0.1) {
    if (traj.samples.empty()) throw std::invalid_argument("vanishing_check: no samples");
    if (!(tail_fraction > 0.0) || tail_fraction > 1.0)
        throw std::invalid_argument("vanishing_check: tail_fraction in (0,1]");
    const size_t n = traj.samples.size();
    const size_t first = n - std::max<size_t>(1, static_cast<size_t>(tail_fraction * n));
    double max_stat = 0.0, max_rate = 0.0;
    for (size_t k = first; k < n; ++k) {
        const FlowState& s = traj.samples[k];
        max_stat = std::max(max_stat, (s.v + traj.spec->smooth.gradient(s.x)).norm());
        if (k + 1 < n) {
            const FlowState& nx = traj.samples[k + 1];
            const double dt = nx.t - s.t;
            if (dt > 0.0)
                max_rate = std::max(max_rate,
                                    ((nx.x - s.x).norm() + (nx.v - s.v).norm()) / dt);
        }
    }
    return {max_stat, max_rate};
}

}  // namespace klflow
