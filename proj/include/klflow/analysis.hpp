#pragma once

#include <klflow/dynamics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace klflow {

enum class RateRegime { Finite, Exponential, Polynomial, Undetermined };

constexpr const char* to_string(RateRegime r) {
    switch (r) {
        case RateRegime::Finite: return "FINITE";
        case RateRegime::Exponential: return "EXPONENTIAL";
        case RateRegime::Polynomial: return "POLYNOMIAL";
        default: return "UNDETERMINED";
    }
}

struct LimitSetEstimate {
    Vector x_limit;
    Vector v_limit;
    double cluster_radius = 0.0;   // max distance to x_limit over the trailing window
    double objective_limit = 0.0;  // objective at the final sample
};

// The limit is taken to be the final sample; the trailing window only grades
// how settled the tail is.
inline LimitSetEstimate estimate_limit(const Trajectory& traj,
                                       double window_fraction = 0.1) {
    if (traj.samples.empty()) throw std::invalid_argument("estimate_limit: empty trajectory");
    if (!(window_fraction > 0.0 && window_fraction <= 1.0))
        throw std::invalid_argument("estimate_limit: window_fraction must be in (0, 1]");
    const std::size_t n = traj.samples.size();
    const std::size_t win = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                         std::ceil(window_fraction * n)));
    LimitSetEstimate est;
    est.x_limit = traj.samples.back().x;
    est.v_limit = traj.samples.back().v;
    for (std::size_t i = n - win; i < n; ++i)
        est.cluster_radius =
            std::max(est.cluster_radius, (traj.samples[i].x - est.x_limit).norm());
    est.objective_limit = eval_objective(*traj.spec, est.x_limit);
    return est;
}

// sigma_k = sum over j >= k of (||x_{j+1} - x_j|| + ||v_{j+1} - v_j||); dominates
// ||x_k - x_limit|| + ||v_k - v_limit|| by the triangle inequality when the
// limit is the final sample pair.
inline std::vector<double> sigma_series(const Trajectory& traj) {
    const std::size_t n = traj.samples.size();
    std::vector<double> sigma(n, 0.0);
    for (std::size_t k = n - 1; k-- > 0;)
        sigma[k] = sigma[k + 1] + (traj.samples[k + 1].x - traj.samples[k].x).norm() +
                   (traj.samples[k + 1].v - traj.samples[k].v).norm();
    return sigma;
}

struct RateEstimate {
    RateRegime regime = RateRegime::Undetermined;
    double a = kNaN;              // amplitude of the fitted model
    double b = kNaN;              // decay rate (exponential regime)
    double q = kNaN;              // decay exponent (polynomial regime)
    double theta_implied = kNaN;  // (1+q)/(1+2q) for polynomial fits, 1/2 for exponential
    double fit_r2 = kNaN;
    double t_arrival = kNaN;      // first sustained-arrival time (finite regime)
    double window_t_start = kNaN;
    double window_t_end = kNaN;
    std::vector<double> window_t;     // decimated fit window, for reports
    std::vector<double> window_dist;
    std::vector<std::pair<double, double>> sigma_samples;  // decimated (t, sigma_k)
};

namespace detail {

struct FitData {
    std::vector<double> t;
    std::vector<double> d;
    double t_end = 0.0;
};

inline double r_squared_log(const std::vector<double>& d,
                            const std::vector<double>& model) {
    double mean = 0.0;
    std::vector<double> ld(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        ld[i] = std::log(d[i]);
        mean += ld[i];
    }
    mean /= static_cast<double>(d.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = ld[i] - std::log(model[i]);
        ss_res += r * r;
        const double c = ld[i] - mean;
        ss_tot += c * c;
    }
    if (ss_tot <= 0.0) return ss_res <= 1e-20 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

struct ProfileFit {
    double param = kNaN;  // b or q
    double log_a = kNaN;
    double r2 = -kInf;
};

// Profiled least squares in log space: for a model d ~= a * s(t; p) with
// shape s > 0, the optimal log a at fixed p is the mean log residual. The
// outer 1-D search is a coarse log-spaced grid followed by golden-section
// refinement.
template <typename Shape>
inline ProfileFit profile_fit(const FitData& fd, double p_lo, double p_hi, Shape shape) {
    std::vector<double> ld(fd.d.size());
    for (std::size_t i = 0; i < fd.d.size(); ++i) ld[i] = std::log(fd.d[i]);

    auto objective = [&](double p) {
        double mean = 0.0;
        std::size_t m = 0;
        std::vector<double> ls(fd.t.size());
        for (std::size_t i = 0; i < fd.t.size(); ++i) {
            const double s = shape(fd.t[i], p);
            if (!(s > 0.0) || !std::isfinite(s)) return std::pair(kInf, 0.0);
            ls[i] = std::log(s);
            mean += ld[i] - ls[i];
            ++m;
        }
        mean /= static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t i = 0; i < fd.t.size(); ++i) {
            const double r = ld[i] - ls[i] - mean;
            ss += r * r;
        }
        return std::pair(ss, mean);
    };

    const int kGrid = 160;
    double best_p = p_lo, best_ss = kInf;
    const double llo = std::log(p_lo), lhi = std::log(p_hi);
    for (int i = 0; i <= kGrid; ++i) {
        const double p = std::exp(llo + (lhi - llo) * i / kGrid);
        const double ss = objective(p).first;
        if (ss < best_ss) {
            best_ss = ss;
            best_p = p;
        }
    }
    // Golden-section refinement around the grid minimum.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = best_p / std::exp((lhi - llo) / kGrid);
    double hi = best_p * std::exp((lhi - llo) / kGrid);
    double c = hi - gr * (hi - lo), dpt = lo + gr * (hi - lo);
    double fc = objective(c).first, fdp = objective(dpt).first;
    for (int it = 0; it < 80; ++it) {
        if (fc < fdp) {
            hi = dpt;
            dpt = c;
            fdp = fc;
            c = hi - gr * (hi - lo);
            fc = objective(c).first;
        } else {
            lo = c;
            c = dpt;
            fc = fdp;
            dpt = lo + gr * (hi - lo);
            fdp = objective(dpt).first;
        }
    }
    ProfileFit out;
    out.param = 0.5 * (lo + hi);
    const auto [ss, log_a] = objective(out.param);
    out.log_a = log_a;
    std::vector<double> model(fd.t.size());
    for (std::size_t i = 0; i < fd.t.size(); ++i)
        model[i] = std::exp(log_a) * shape(fd.t[i], out.param);
    out.r2 = r_squared_log(fd.d, model);
    return out;
}

}  // namespace detail

// Classifies the decay of d_k = ||x_k - x_limit|| over the trailing window
// (samples with t >= (1 - window_fraction) * t_end). Precedence: a sustained
// exact arrival in x before the final sample is FINITE; otherwise an
// exponential fit is tried before a polynomial one, each requiring
// r^2 >= 0.99 in log space.
//
// The distance to the final sample self-subtracts as k -> N, so when the
// limit is taken from the trajectory itself the fitted models carry the
// matching endpoint correction: a(e^{-bt} - e^{-bT}) and a(t^{-q} - T^{-q}).
// A caller-supplied external limit (x_true) selects the pure models instead.
inline RateEstimate classify_rate(const Trajectory& traj, const Vector& x_limit,
                                  double window_fraction = 0.6,
                                  const Vector* x_true = nullptr) {
    if (traj.samples.size() < 2)
        throw std::invalid_argument("classify_rate: trajectory has fewer than 2 samples");
    if (!(window_fraction > 0.0 && window_fraction < 1.0))
        throw std::invalid_argument("classify_rate: window_fraction must be in (0, 1)");
    const Vector& xl = x_true ? *x_true : x_limit;
    const std::size_t n = traj.samples.size();
    const double t_end = traj.samples.back().t;

    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = (traj.samples[i].x - xl).norm();

    RateEstimate est;

    {
        const std::vector<double> sigma = sigma_series(traj);
        const std::size_t stride = std::max<std::size_t>(1, n / 64);
        for (std::size_t i = 0; i + 1 < n; i += stride)
            est.sigma_samples.emplace_back(traj.samples[i].t, sigma[i]);
        est.sigma_samples.emplace_back(traj.samples.back().t, sigma.back());
    }

    // Sustained exact arrival in x strictly before the end. The velocity is
    // excluded on purpose: in the prox scheme v keeps relaxing geometrically
    // after x lands, and the regime is about the state reaching its limit.
    const double kArrivalTol = 1e-13;
    std::size_t first_arrival = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= kArrivalTol * (1.0 + xl.norm())) {
            bool sustained = true;
            for (std::size_t j = i; j < n; ++j)
                if (dist[j] > kArrivalTol * (1.0 + xl.norm())) {
                    sustained = false;
                    break;
                }
            if (sustained) first_arrival = i;
            break;
        }
    }
    if (first_arrival < n - 1) {
        est.regime = RateRegime::Finite;
        est.t_arrival = traj.samples[first_arrival].t;
        est.fit_r2 = 1.0;
        return est;
    }

    detail::FitData fd;
    fd.t_end = t_end;
    const double t_start = (1.0 - window_fraction) * t_end;
    for (std::size_t i = 0; i < n; ++i) {
        if (traj.samples[i].t < t_start) continue;
        if (!(dist[i] > 0.0)) continue;  // the final sample when the limit is internal
        fd.t.push_back(traj.samples[i].t);
        fd.d.push_back(dist[i]);
    }
    if (fd.t.size() < 50)
        throw std::invalid_argument(
            "classify_rate: fewer than 50 samples in the fit window; lower the "
            "sample stride or extend t_max");

    est.window_t_start = fd.t.front();
    est.window_t_end = fd.t.back();
    const std::size_t stride = std::max<std::size_t>(1, fd.t.size() / 256);
    for (std::size_t i = 0; i < fd.t.size(); i += stride) {
        est.window_t.push_back(fd.t[i]);
        est.window_dist.push_back(fd.d[i]);
    }

    const bool corrected = x_true == nullptr;
    const double T = fd.t_end;
    const double span = fd.t.back() - fd.t.front();
    const double kR2Min = 0.99;

    auto exp_shape = [corrected, T](double t, double b) {
        return corrected ? std::exp(-b * t) - std::exp(-b * T) : std::exp(-b * t);
    };
    auto poly_shape = [corrected, T](double t, double q) {
        return corrected ? std::pow(t, -q) - std::pow(T, -q) : std::pow(t, -q);
    };

    const double b_lo = 1e-8, b_hi = 1e4;
    const auto ef = detail::profile_fit(fd, b_lo, b_hi, exp_shape);
    // A near-flat exponential over the window is indistinguishable from a
    // polynomial ramp; demand at least two e-folds across the window before
    // accepting the exponential label.
    if (ef.r2 >= kR2Min && ef.param * span >= 2.0) {
        est.regime = RateRegime::Exponential;
        est.a = std::exp(ef.log_a);
        est.b = ef.param;
        est.theta_implied = 0.5;
        est.fit_r2 = ef.r2;
        return est;
    }

    const auto pf = detail::profile_fit(fd, 1e-3, 1e3, poly_shape);
    if (pf.r2 >= kR2Min) {
        est.regime = RateRegime::Polynomial;
        est.a = std::exp(pf.log_a);
        est.q = pf.param;
        est.theta_implied = (1.0 + est.q) / (1.0 + 2.0 * est.q);
        est.fit_r2 = pf.r2;
        return est;
    }

    est.regime = RateRegime::Undetermined;
    est.fit_r2 = std::max(ef.r2, pf.r2);
    est.b = ef.param;
    est.q = pf.param;
    return est;
}

// Regime implied by the Lojasiewicz exponent theta of the objective at the
// limit: theta < 1/2 gives finite-time arrival, theta = 1/2 exponential decay,
// theta > 1/2 polynomial decay with exponent (1-theta)/(2theta-1).
struct RegimePrediction {
    RateRegime regime = RateRegime::Undetermined;
    double poly_exponent = kNaN;
};

inline RegimePrediction predicted_regime(double theta) {
    if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("predicted_regime: theta must be in (0, 1)");
    RegimePrediction p;
    if (std::abs(theta - 0.5) <= 1e-12) {
        p.regime = RateRegime::Exponential;
    } else if (theta < 0.5) {
        p.regime = RateRegime::Finite;
    } else {
        p.regime = RateRegime::Polynomial;
        p.poly_exponent = (1.0 - theta) / (2.0 * theta - 1.0);
    }
    return p;
}

struct ObjectiveLimitReport {
    std::vector<double> limits;     // per-trajectory objective limits
    double max_tail_oscillation = 0.0;  // max |obj - limit| over each tail
    double spread = 0.0;            // max pairwise gap between limits
};

// Checks that the objective settles to a single value along each trajectory
// (tail oscillation) and reports how the settled values compare across runs.
// Distinct basins legitimately give distinct limits; the spread is data, not
// a failure.
inline ObjectiveLimitReport objective_limit_check(
    const std::vector<const Trajectory*>& trajs, double tail_fraction = 0.1) {
    if (trajs.empty())
        throw std::invalid_argument("objective_limit_check: no trajectories");
    ObjectiveLimitReport rep;
    for (const Trajectory* tp : trajs) {
        const Trajectory& traj = *tp;
        if (traj.samples.empty()) continue;
        const double limit = eval_objective(*traj.spec, traj.samples.back().x);
        rep.limits.push_back(limit);
        const double t_cut = traj.samples.back().t * (1.0 - tail_fraction);
        for (const auto& s : traj.samples) {
            if (s.t < t_cut) continue;
            rep.max_tail_oscillation = std::max(
                rep.max_tail_oscillation, std::abs(eval_objective(*traj.spec, s.x) - limit));
        }
    }
    for (double a : rep.limits)
        for (double b : rep.limits) rep.spread = std::max(rep.spread, std::abs(a - b));
    return rep;
}

}  // namespace klflow
