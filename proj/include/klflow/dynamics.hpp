#pragma once

#include <klflow/monitors.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <random>

namespace klflow {

// Above this dimension the shifted Hessian solve switches from an assembled
// LLT factorization to matrix-free conjugate gradients.
inline constexpr int kDenseHessianMaxDim = 512;
inline constexpr double kCgTol = 1e-12;

namespace detail {

// Solves (lambda I + hess phi(x)) y = rhs. SPD by construction: lambda > 0
// and the convex term's Hessian is positive semidefinite.
inline Vector solve_shifted_hessian(const ObjectiveSpec& spec, double lambda,
                                    const Vector& x, const Vector& rhs) {
    const int n = static_cast<int>(x.size());
    if (n <= kDenseHessianMaxDim) {
        Matrix H(n, n);
        Vector e = Vector::Zero(n);
        for (int j = 0; j < n; ++j) {
            e[j] = 1.0;
            H.col(j) = spec.convex.hessian_vec(x, e);
            e[j] = 0.0;
        }
        H.diagonal().array() += lambda;
        return H.llt().solve(rhs);
    }
    // CG on the matrix-free operator.
    Vector y = rhs / lambda;
    Vector r = rhs - (lambda * y + spec.convex.hessian_vec(x, y));
    Vector p = r;
    double rs = r.squaredNorm();
    const double stop = kCgTol * rhs.norm() + 1e-300;
    for (int it = 0; it < 5 * n && std::sqrt(rs) > stop; ++it) {
        const Vector Ap = lambda * p + spec.convex.hessian_vec(x, p);
        const double alpha = rs / p.dot(Ap);
        y += alpha * p;
        r -= alpha * Ap;
        const double rs_new = r.squaredNorm();
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    return y;
}

struct FieldEval {
    Vector F;    // xdot = -(lambda I + hess phi)^(-1) grad PHI
    double D;    // dissipation density lambda||xdot||^2 + <xdot, vdot>
};

inline FieldEval eval_field(const ObjectiveSpec& spec, double lambda, const Vector& x) {
    FieldEval fe;
    const Vector g = spec.convex.gradient(x) + spec.smooth.gradient(x);
    fe.F = solve_shifted_hessian(spec, lambda, x, Vector(-g));
    fe.D = lambda * fe.F.squaredNorm() + fe.F.dot(spec.convex.hessian_vec(x, fe.F));
    return fe;
}

struct SmoothStep {
    Vector x_next;
    double dW = 0.0;          // quadrature of the dissipation integral over the step
    double err_scaled = 0.0;  // embedded-pair error in WRMS norm (adaptive only)
};

inline SmoothStep rk4_step(const ObjectiveSpec& spec, double lambda, const Vector& x,
                           double h) {
    const FieldEval f1 = eval_field(spec, lambda, x);
    const FieldEval f2 = eval_field(spec, lambda, Vector(x + 0.5 * h * f1.F));
    const FieldEval f3 = eval_field(spec, lambda, Vector(x + 0.5 * h * f2.F));
    const FieldEval f4 = eval_field(spec, lambda, Vector(x + h * f3.F));
    SmoothStep out;
    out.x_next = x + (h / 6.0) * (f1.F + 2.0 * f2.F + 2.0 * f3.F + f4.F);
    out.dW = (h / 6.0) * (f1.D + 2.0 * f2.D + 2.0 * f3.D + f4.D);
    return out;
}

// Dormand-Prince 5(4) tableau.
inline constexpr double dp_a21 = 1.0 / 5.0;
inline constexpr double dp_a31 = 3.0 / 40.0, dp_a32 = 9.0 / 40.0;
inline constexpr double dp_a41 = 44.0 / 45.0, dp_a42 = -56.0 / 15.0, dp_a43 = 32.0 / 9.0;
inline constexpr double dp_a51 = 19372.0 / 6561.0, dp_a52 = -25360.0 / 2187.0,
                        dp_a53 = 64448.0 / 6561.0, dp_a54 = -212.0 / 729.0;
inline constexpr double dp_a61 = 9017.0 / 3168.0, dp_a62 = -355.0 / 33.0,
                        dp_a63 = 46732.0 / 5247.0, dp_a64 = 49.0 / 176.0,
                        dp_a65 = -5103.0 / 18656.0;
inline constexpr double dp_b1 = 35.0 / 384.0, dp_b3 = 500.0 / 1113.0, dp_b4 = 125.0 / 192.0,
                        dp_b5 = -2187.0 / 6784.0, dp_b6 = 11.0 / 84.0;
inline constexpr double dp_e1 = 71.0 / 57600.0, dp_e3 = -71.0 / 16695.0,
                        dp_e4 = 71.0 / 1920.0, dp_e5 = -17253.0 / 339200.0,
                        dp_e6 = 22.0 / 525.0, dp_e7 = -1.0 / 40.0;

// One Dormand-Prince step. `fsal` carries the first-same-as-last stage across
// accepted steps and rejected retries at the same base point.
inline SmoothStep dp54_step(const ObjectiveSpec& spec, double lambda, const Vector& x,
                            double h, const StepPolicy& policy,
                            std::optional<FieldEval>& fsal) {
    if (!fsal) fsal = eval_field(spec, lambda, x);
    const FieldEval f1 = *fsal;
    const FieldEval f2 = eval_field(spec, lambda, Vector(x + h * (dp_a21 * f1.F)));
    const FieldEval f3 =
        eval_field(spec, lambda, Vector(x + h * (dp_a31 * f1.F + dp_a32 * f2.F)));
    const FieldEval f4 = eval_field(
        spec, lambda, Vector(x + h * (dp_a41 * f1.F + dp_a42 * f2.F + dp_a43 * f3.F)));
    const FieldEval f5 = eval_field(
        spec, lambda,
        Vector(x + h * (dp_a51 * f1.F + dp_a52 * f2.F + dp_a53 * f3.F + dp_a54 * f4.F)));
    const FieldEval f6 = eval_field(
        spec, lambda,
        Vector(x + h * (dp_a61 * f1.F + dp_a62 * f2.F + dp_a63 * f3.F + dp_a64 * f4.F +
                        dp_a65 * f5.F)));
    SmoothStep out;
    out.x_next = x + h * (dp_b1 * f1.F + dp_b3 * f3.F + dp_b4 * f4.F + dp_b5 * f5.F +
                          dp_b6 * f6.F);
    out.dW = h * (dp_b1 * f1.D + dp_b3 * f3.D + dp_b4 * f4.D + dp_b5 * f5.D + dp_b6 * f6.D);
    const FieldEval f7 = eval_field(spec, lambda, out.x_next);
    const Vector err = h * (dp_e1 * f1.F + dp_e3 * f3.F + dp_e4 * f4.F + dp_e5 * f5.F +
                            dp_e6 * f6.F + dp_e7 * f7.F);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double scale =
            policy.abs_tol + policy.rel_tol * std::max(std::abs(x[i]), std::abs(out.x_next[i]));
        const double q = err[i] / scale;
        acc += q * q;
    }
    out.err_scaled = std::sqrt(acc / static_cast<double>(err.size()));
    fsal = f7;  // stage 7 sits at x_next; valid as k1 if the step is accepted
    return out;
}

}  // namespace detail

// SMOOTH: grad phi(x0). PROX: the certified hint if given, otherwise the
// minimal-norm construction via the Moreau-envelope gradient at small gamma.
// Certification uses the resolvent identity prox_{g phi}(x0 + g v) = x0,
// exact precisely when v is a subgradient at x0.
inline Vector initial_velocity(const ObjectiveSpec& spec, const Vector& x0,
                               const std::optional<Vector>& v0_hint = std::nullopt,
                               double* cert_residual = nullptr) {
    check_dimension(spec, x0);
    if (spec.is_smooth_mode()) {
        if (cert_residual) *cert_residual = 0.0;
        return spec.convex.gradient(x0);
    }
    Vector v;
    if (v0_hint) {
        if (v0_hint->size() != x0.size())
            throw std::invalid_argument("initial_velocity: v0 hint has wrong dimension");
        v = *v0_hint;
    } else {
        const double gamma0 = 1e-8 * (1.0 + x0.norm());
        v = (x0 - spec.convex.prox(gamma0, x0)) / gamma0;
    }
    const double resid = (spec.convex.prox(1.0, Vector(x0 + v)) - x0).norm();
    if (cert_residual) *cert_residual = resid;
    if (!(resid <= 1e-6 * (1.0 + x0.norm())))
        throw std::invalid_argument(
            "initial_velocity: candidate v0 is not a subgradient of phi at x0 "
            "(resolvent residual " + std::to_string(resid) + ")");
    return v;
}

struct StepDecision {
    bool accept = false;
    double h_next = 0.0;
    bool underflow = false;  // rejected and the controller wants h below h_min
};

// PI-free step controller on the scaled error (accept iff error <= 1).
inline StepDecision adapt_step(double error_estimate, double h, const StepPolicy& policy) {
    if (!(h > 0.0)) throw std::invalid_argument("adapt_step: h must be > 0");
    if (error_estimate < 0.0 || std::isnan(error_estimate))
        throw std::invalid_argument("adapt_step: error estimate must be >= 0");
    StepDecision d;
    d.accept = error_estimate <= 1.0;
    const double factor =
        error_estimate == 0.0
            ? 5.0
            : std::clamp(0.9 * std::pow(1.0 / error_estimate, 0.2), 0.2, 5.0);
    const double raw = h * factor;
    d.underflow = !d.accept && raw < policy.h_min;
    d.h_next = std::clamp(raw, policy.h_min, policy.h_max);
    return d;
}

// One fixed RK4 step of (lambda I + hess phi(x)) xdot = -grad PHI(x), with v
// recomputed as grad phi at the new point.
inline FlowState step_smooth(const ObjectiveSpec& spec, const DynamicsParams& params,
                             const FlowState& state, double h) {
    if (!spec.is_smooth_mode())
        throw std::logic_error("step_smooth: objective is in prox mode");
    if (!(h > 0.0)) throw std::invalid_argument("step_smooth: h must be > 0");
    const auto step = detail::rk4_step(spec, params.lambda, state.x, h);
    FlowState out;
    out.t = state.t + h;
    out.x = step.x_next;
    out.v = spec.convex.gradient(out.x);
    return out;
}

// Semi-implicit prox step: exact discrete solution of
//   lambda dx + (1+h) v_next - v + h grad psi(x) = 0,  v_next in dphi(x_next).
inline FlowState step_prox(const ObjectiveSpec& spec, const DynamicsParams& params,
                           const FlowState& state, double h) {
    if (spec.is_smooth_mode())
        throw std::logic_error("step_prox: objective is in smooth mode");
    if (!(h > 0.0)) throw std::invalid_argument("step_prox: h must be > 0");
    const double lambda = params.lambda;
    const Vector gpsi = spec.smooth.gradient(state.x);
    const Vector y = state.x + (state.v - h * gpsi) / lambda;
    const double gamma = (1.0 + h) / lambda;
    FlowState out;
    out.t = state.t + h;
    out.x = spec.convex.prox(gamma, y);
    out.v = lambda * (y - out.x) / (1.0 + h);
    return out;
}

// Runs the flow from (x0, v0) until a stopping rule fires. Diagnostics are
// recorded per accepted step; samples every params.sample_stride steps plus
// the endpoints. DIVERGED is recorded on the trajectory, not thrown.
inline Trajectory integrate(const ObjectiveSpec& spec, const DynamicsParams& params,
                            const Vector& x0,
                            const std::optional<Vector>& v0_hint = std::nullopt) {
    check_dimension(spec, x0);
    if (!(params.lambda > 0.0)) throw std::invalid_argument("integrate: lambda must be > 0");
    if (!(params.step > 0.0)) throw std::invalid_argument("integrate: step must be > 0");
    if (!(params.t_max > 0.0)) throw std::invalid_argument("integrate: t_max must be > 0");
    if (params.sample_stride < 1)
        throw std::invalid_argument("integrate: sample_stride must be >= 1");
    const bool adaptive = params.policy.kind == StepPolicyKind::Adaptive;
    if (adaptive && !spec.is_smooth_mode())
        throw std::invalid_argument("integrate: adaptive stepping needs the smooth mode; "
                                    "the prox scheme is fixed-step");
    if (!x0.allFinite()) throw std::invalid_argument("integrate: x0 must be finite");

    StepPolicy policy = params.policy;
    // Cap adaptive growth so long horizons still sample densely enough for
    // the tail analyses; fixed runs honor the requested step as-is.
    if (!std::isfinite(policy.h_max) && adaptive) policy.h_max = params.t_max / 100.0;
    if (policy.h_min > policy.h_max)
        throw std::invalid_argument("integrate: h_min exceeds h_max");

    Trajectory traj;
    traj.spec = &spec;
    traj.params = params;

    FlowState cur;
    cur.t = 0.0;
    cur.x = x0;
    double v0_resid = kNaN;
    cur.v = spec.is_smooth_mode() ? spec.convex.gradient(x0)
                                  : initial_velocity(spec, x0, v0_hint, &v0_resid);
    traj.v0_cert_residual = spec.is_smooth_mode() ? 0.0 : v0_resid;
    if (!spec.is_smooth_mode()) {
        traj.max_scheme_residual = 0.0;
        traj.max_cert_violation = 0.0;
    }

    traj.samples.push_back(cur);
    traj.sample_diag_index.push_back(-1);

    double obj_prev = eval_objective(spec, cur.x);
    double stat_prev = (cur.v + spec.smooth.gradient(cur.x)).norm();
    if (params.stop_grad_tol > 0.0 && stat_prev <= params.stop_grad_tol) {
        traj.termination = Termination::GradTol;
        return traj;
    }

    std::mt19937_64 probe_rng(0x51ab5eedULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double t_tiny = 1e-14 * std::max(1.0, params.t_max);
    const double L = spec.smooth.lipschitz_grad;
    const double lambda = params.lambda;
    double h = std::clamp(params.step, policy.h_min, policy.h_max);
    std::optional<detail::FieldEval> fsal;

    auto push_sample = [&](const FlowState& s, long diag_index, bool force) {
        if (force || traj.accepted_steps % params.sample_stride == 0) {
            traj.samples.push_back(s);
            traj.sample_diag_index.push_back(diag_index);
        }
    };

    while (true) {
        if (params.t_max - cur.t <= t_tiny) {
            traj.termination = Termination::TMax;
            break;
        }
        double h_eff = std::min(h, params.t_max - cur.t);
        // Absorb a rounding sliver into the final step instead of taking a
        // separate microscopic one.
        if (params.t_max - (cur.t + h_eff) <= 1e-8 * h_eff) h_eff = params.t_max - cur.t;

        FlowState next;
        double dW = 0.0;
        if (spec.is_smooth_mode()) {
            detail::SmoothStep st;
            if (adaptive) {
                st = detail::dp54_step(spec, lambda, cur.x, h_eff, policy, fsal);
                if (!st.x_next.allFinite() || !std::isfinite(st.err_scaled)) {
                    traj.termination = Termination::Diverged;
                    return traj;
                }
                const StepDecision dec = adapt_step(st.err_scaled, h_eff, policy);
                if (!dec.accept) {
                    ++traj.rejected_steps;
                    if (dec.underflow) {
                        traj.termination = Termination::Diverged;
                        return traj;
                    }
                    h = dec.h_next;
                    // fsal still holds the stage at x_next; recompute at cur.x
                    fsal.reset();
                    continue;
                }
                h = dec.h_next;
            } else {
                st = detail::rk4_step(spec, lambda, cur.x, h_eff);
            }
            if (!st.x_next.allFinite()) {
                traj.termination = Termination::Diverged;
                return traj;
            }
            next.t = cur.t + h_eff;
            next.x = std::move(st.x_next);
            next.v = spec.convex.gradient(next.x);
            dW = st.dW;
        } else {
            next = step_prox(spec, params, cur, h_eff);
            if (!next.x.allFinite() || !next.v.allFinite()) {
                traj.termination = Termination::Diverged;
                return traj;
            }
        }
        if (params.t_max - next.t <= t_tiny) next.t = params.t_max;

        const Vector dx = next.x - cur.x;
        const Vector dv = next.v - cur.v;
        const double obj_next = eval_objective(spec, next.x);
        const Vector gpsi_next = spec.smooth.gradient(next.x);
        const double stat_next = (next.v + gpsi_next).norm();

        StepDiagnostics diag;
        diag.t = next.t;
        diag.obj = obj_next;
        diag.descent = obj_next - obj_prev;
        diag.cross_term = dx.dot(dv) / h_eff;
        diag.stationarity = stat_next;
        diag.step_norm_x = dx.norm() / h_eff;
        diag.step_norm_v = dv.norm() / h_eff;
        diag.forcing_slack =
            forcing_residual(stat_next, stat_prev, dx, dv, h_eff, L, lambda);
        if (spec.is_smooth_mode()) {
            // Integrator-consistent audit of the energy identity: the
            // dissipation integral is carried through the same quadrature as
            // the state, so the residual shrinks at the scheme's order.
            diag.energy_residual = (obj_next - obj_prev + dW) / h_eff;
            diag.cocoercivity_slack =
                cocoercivity_slack(dx, dv, spec.convex.cocoercivity_rho);
        } else {
            diag.energy_residual =
                energy_identity_residual(obj_next, obj_prev, dx, dv, h_eff, lambda);
            diag.cocoercivity_slack = kNaN;

            const Vector gpsi_cur = spec.smooth.gradient(cur.x);
            const double scheme_resid =
                (lambda * dx + (1.0 + h_eff) * next.v - cur.v + h_eff * gpsi_cur).norm();
            traj.max_scheme_residual = std::max(traj.max_scheme_residual, scheme_resid);

            // Subgradient certification of v_next on 8 probe points.
            const double phi_next = spec.convex.value(next.x);
            for (int pb = 0; pb < 8; ++pb) {
                Vector dir(next.x.size());
                for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(probe_rng);
                const double nrm = dir.norm();
                if (nrm == 0.0) continue;
                const double scale = (pb % 2 == 0 ? 1e-3 : 1.0) * (1.0 + next.x.norm());
                const Vector z = next.x + (scale / nrm) * dir;
                const double viol = phi_next + next.v.dot(z - next.x) - spec.convex.value(z);
                if (std::isfinite(viol))
                    traj.max_cert_violation = std::max(traj.max_cert_violation, viol);
            }
        }

        ++traj.accepted_steps;
        traj.diagnostics.push_back(diag);
        const long diag_index = static_cast<long>(traj.diagnostics.size()) - 1;

        Termination* fired = nullptr;
        Termination reason = Termination::TMax;
        if (params.stop_grad_tol > 0.0 && stat_next <= params.stop_grad_tol) {
            reason = Termination::GradTol;
            fired = &reason;
        } else if (params.stop_step_tol > 0.0 && diag.step_norm_x <= params.stop_step_tol) {
            reason = Termination::StepTol;
            fired = &reason;
        } else if (params.t_max - next.t <= t_tiny) {
            reason = Termination::TMax;
            fired = &reason;
        }

        push_sample(next, diag_index, fired != nullptr);
        cur = std::move(next);
        obj_prev = obj_next;
        stat_prev = stat_next;
        if (fired) {
            traj.termination = reason;
            break;
        }
    }
    return traj;
}

}  // namespace klflow
