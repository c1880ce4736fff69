#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace klflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Smooth component psi: C^1, gradient Lipschitz with constant lipschitz_grad
// on the ball ||x|| <= region_radius. psi may be nonconvex.
struct SmoothTerm {
    int dimension = 0;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    double lipschitz_grad = 0.0;
    double region_radius = kInf;
};

enum class ConvexMode { Smooth, Prox };

// Convex component phi. Smooth mode provides gradient + Hessian-vector
// oracles and a cocoercivity constant rho (gradient is (1/rho)-Lipschitz);
// Prox mode provides the value (extended-real) and an exact prox oracle.
struct ConvexTerm {
    int dimension = 0;
    ConvexMode mode = ConvexMode::Smooth;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<Vector(const Vector&, const Vector&)> hessian_vec;
    double cocoercivity_rho = 1.0;
    std::function<Vector(double, const Vector&)> prox;
};

// Declared Lojasiewicz data at a critical point:
//   |PHI(x) - critical_value|^theta <= constant * dist(0, dPHI(x))
// for 0 < ||x - critical_point|| < radius and
// critical_value < PHI(x) < critical_value + level_gap.
struct KLProfile {
    double theta = 0.5;
    double constant = 1.0;
    double radius = 1.0;
    double level_gap = 1.0;
    Vector critical_point;
    double critical_value = 0.0;
};

struct ObjectiveSpec {
    std::string name;
    SmoothTerm smooth;
    ConvexTerm convex;
    bool coercive = false;
    double infimum = -kInf;
    std::vector<Vector> known_critical_points;
    std::optional<KLProfile> kl_profile;

    int dimension() const { return smooth.dimension; }
    bool is_smooth_mode() const { return convex.mode == ConvexMode::Smooth; }
};

inline void check_dimension(const ObjectiveSpec& spec, const Vector& x) {
    if (x.size() != spec.dimension())
        throw std::invalid_argument("objective: point has dimension " +
                                    std::to_string(x.size()) + ", spec expects " +
                                    std::to_string(spec.dimension()));
}

// PHI(x) = phi(x) + psi(x); +inf outside dom phi in Prox mode.
inline double eval_objective(const ObjectiveSpec& spec, const Vector& x) {
    check_dimension(spec, x);
    const double phi = spec.convex.value(x);
    if (phi == kInf) return kInf;
    return phi + spec.smooth.value(x);
}

// grad PHI; only defined in Smooth mode.
inline Vector grad_total(const ObjectiveSpec& spec, const Vector& x) {
    check_dimension(spec, x);
    if (!spec.is_smooth_mode())
        throw std::logic_error("grad_total: convex term is prox-only; the full "
                               "objective has no gradient oracle");
    return spec.convex.gradient(x) + spec.smooth.gradient(x);
}

inline Vector prox_convex(const ObjectiveSpec& spec, double gamma, const Vector& y) {
    check_dimension(spec, y);
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("prox_convex: gamma must be positive and finite");
    if (!spec.convex.prox)
        throw std::logic_error("prox_convex: no prox oracle attached");
    return spec.convex.prox(gamma, y);
}

// ||v + grad psi(x)||: distance of the certified element v + grad psi(x)
// of dPHI(x) from zero. Stationarity measure used by stopping rules.
inline double subgradient_residual(const ObjectiveSpec& spec, const Vector& x,
                                   const Vector& v) {
    check_dimension(spec, x);
    if (v.size() != x.size())
        throw std::invalid_argument("subgradient_residual: v has wrong dimension");
    return (v + spec.smooth.gradient(x)).norm();
}

// Newton solve of the prox subproblem min_u 0.5||u - y||^2 + gamma*phi(u)
// for a smooth convex phi given by (value, gradient, hessian_vec). Used as
// the fallback prox when no closed form is available.
inline Vector prox_via_newton(const std::function<double(const Vector&)>& value,
                              const std::function<Vector(const Vector&)>& gradient,
                              const std::function<Vector(const Vector&, const Vector&)>& hessian_vec,
                              double gamma, const Vector& y, double tol = 1e-12,
                              int max_iter = 100) {
    Vector u = y;
    const int n = static_cast<int>(y.size());
    for (int it = 0; it < max_iter; ++it) {
        const Vector g = (u - y) + gamma * gradient(u);
        if (g.norm() <= tol * (1.0 + y.norm())) return u;
        Matrix H(n, n);
        Vector e = Vector::Zero(n);
        for (int j = 0; j < n; ++j) {
            e[j] = 1.0;
            H.col(j) = gamma * hessian_vec(u, e);
            e[j] = 0.0;
        }
        H.diagonal().array() += 1.0;
        Vector du = H.llt().solve(-g);
        // Backtrack on the strongly convex subproblem objective.
        const double f0 = 0.5 * (u - y).squaredNorm() + gamma * value(u);
        double step = 1.0;
        for (int bt = 0; bt < 60; ++bt) {
            Vector cand = u + step * du;
            const double f = 0.5 * (cand - y).squaredNorm() + gamma * value(cand);
            if (f <= f0 + 1e-4 * step * g.dot(du)) { u = cand; break; }
            step *= 0.5;
            if (bt == 59) u = u + step * du;
        }
    }
    const Vector g = (u - y) + gamma * gradient(u);
    if (g.norm() > 1e-6 * (1.0 + y.norm()))
        throw std::runtime_error("prox_via_newton: no convergence");
    return u;
}

inline std::function<Vector(double, const Vector&)> make_prox_from_smooth(
    std::function<double(const Vector&)> value,
    std::function<Vector(const Vector&)> gradient,
    std::function<Vector(const Vector&, const Vector&)> hessian_vec,
    double tol = 1e-12) {
    return [=](double gamma, const Vector& y) {
        return prox_via_newton(value, gradient, hessian_vec, gamma, y, tol);
    };
}

}  // namespace klflow
