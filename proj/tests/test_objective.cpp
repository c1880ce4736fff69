#include <klflow/objective.hpp>

#include <klflow/catalog.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace klflow;

namespace {

// phi = 0.5*||x||^2 with analytic derivatives.
ConvexTerm half_sqnorm(int n) {
    ConvexTerm c;
    c.dimension = n;
    c.mode = ConvexMode::Smooth;
    c.value = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    c.gradient = [](const Vector& x) { return x; };
    c.hessian_vec = [](const Vector&, const Vector& v) { return v; };
    c.cocoercivity_rho = 1.0;
    return c;
}

SmoothTerm quartic(int n) {
    SmoothTerm s;
    s.dimension = n;
    s.value = [](const Vector& x) { return 0.25 * std::pow(x.squaredNorm(), 2); };
    s.gradient = [](const Vector& x) { return Vector(x.squaredNorm() * x); };
    s.region_radius = 2.5;
    s.lipschitz_grad = 3.0 * 2.5 * 2.5;
    return s;
}

SmoothTerm zero_smooth(int n) {
    SmoothTerm s;
    s.dimension = n;
    s.value = [](const Vector&) { return 0.0; };
    s.gradient = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
    s.lipschitz_grad = 0.0;
    return s;
}

}  // namespace

TEST_CASE("objective evaluation sums both terms and passes infinities through",
          "[objective]") {
    ObjectiveSpec spec;
    spec.name = "test";
    spec.convex = half_sqnorm(2);
    spec.smooth = quartic(2);

    Vector x(2);
    x << 1.0, -2.0;
    // 0.5*5 + 0.25*25
    CHECK(eval_objective(spec, x) == Catch::Approx(2.5 + 6.25).epsilon(1e-15));

    spec.convex.value = [](const Vector& x) {
        return x.cwiseAbs().maxCoeff() > 1.0 ? kInf : 0.0;
    };
    CHECK(std::isinf(eval_objective(spec, x)));
}

TEST_CASE("dimension checks reject mismatched vectors", "[objective]") {
    ObjectiveSpec spec;
    spec.convex = half_sqnorm(3);
    spec.smooth = zero_smooth(3);
    CHECK(spec.dimension() == 3);
    CHECK_THROWS_AS(check_dimension(spec, Vector::Zero(2)), std::invalid_argument);
    CHECK_NOTHROW(check_dimension(spec, Vector::Zero(3)));
}

TEST_CASE("grad_total is smooth-mode only", "[objective]") {
    ObjectiveSpec spec;
    spec.convex = half_sqnorm(2);
    spec.smooth = quartic(2);
    Vector x(2);
    x << 0.5, 0.5;
    const Vector g = grad_total(spec, x);
    // x + ||x||^2 x = (1 + 0.5) x
    CHECK(g.isApprox(Vector(1.5 * x), 1e-15));

    spec.convex.mode = ConvexMode::Prox;
    CHECK_THROWS_AS(grad_total(spec, x), std::logic_error);
}

TEST_CASE("subgradient residual is the norm of v + grad psi", "[objective]") {
    ObjectiveSpec spec;
    spec.convex = half_sqnorm(2);
    spec.smooth = quartic(2);
    Vector x(2), v(2);
    x << 1.0, 0.0;
    v << -1.0, 0.0;  // exactly cancels grad psi = ||x||^2 x = x
    CHECK(subgradient_residual(spec, x, v) == Catch::Approx(0.0).margin(1e-15));
    v << 1.0, 0.0;
    CHECK(subgradient_residual(spec, x, v) == Catch::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("prox_convex validates its step size", "[objective]") {
    ObjectiveSpec spec;
    spec.convex = half_sqnorm(1);
    spec.convex.mode = ConvexMode::Prox;
    spec.convex.prox = [](double gamma, const Vector& y) { return Vector(y / (1.0 + gamma)); };
    spec.smooth = zero_smooth(1);
    Vector y(1);
    y << 3.0;
    CHECK(prox_convex(spec, 2.0, y)[0] == Catch::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(prox_convex(spec, 0.0, y), std::invalid_argument);
    CHECK_THROWS_AS(prox_convex(spec, -1.0, y), std::invalid_argument);
    CHECK_THROWS_AS(prox_convex(spec, kNaN, y), std::invalid_argument);
}

TEST_CASE("Newton prox matches the closed form for 0.5*||x||^2", "[objective]") {
    const ConvexTerm c = half_sqnorm(3);
    Vector y(3);
    y << 2.0, -1.0, 0.25;
    for (double gamma : {0.1, 1.0, 7.5}) {
        const Vector p = prox_via_newton(c.value, c.gradient, c.hessian_vec, gamma, y);
        CHECK((p - y / (1.0 + gamma)).norm() < 1e-12);
    }
}

TEST_CASE("Newton prox matches the closed form for the Huber function", "[objective]") {
    // huber(x) = 0.5 x^2 on |x| <= delta, delta |x| - 0.5 delta^2 outside.
    const double delta = 0.5;
    ConvexTerm c;
    c.dimension = 1;
    c.mode = ConvexMode::Smooth;
    c.value = [delta](const Vector& x) {
        const double a = std::abs(x[0]);
        return a <= delta ? 0.5 * a * a : delta * a - 0.5 * delta * delta;
    };
    c.gradient = [delta](const Vector& x) {
        Vector g(1);
        g[0] = std::clamp(x[0], -delta, delta);
        return g;
    };
    c.hessian_vec = [delta](const Vector& x, const Vector& v) {
        Vector h(1);
        h[0] = std::abs(x[0]) <= delta ? v[0] : 0.0;
        return h;
    };

    auto reference = [delta](double gamma, double y) {
        return std::abs(y) <= delta * (1.0 + gamma) ? y / (1.0 + gamma)
                                                    : y - gamma * delta * (y > 0 ? 1 : -1);
    };
    for (double gamma : {0.5, 2.0}) {
        for (double y0 : {0.2, 0.7, -3.0, 10.0}) {
            Vector y(1);
            y << y0;
            const Vector p = prox_via_newton(c.value, c.gradient, c.hessian_vec, gamma, y);
            CHECK(p[0] == Catch::Approx(reference(gamma, y0)).margin(1e-10));
        }
    }
}

TEST_CASE("make_prox_from_smooth produces a usable prox operator", "[objective]") {
    ConvexTerm c = half_sqnorm(2);
    c.prox = make_prox_from_smooth(c.value, c.gradient, c.hessian_vec);
    Vector y(2);
    y << 4.0, -4.0;
    CHECK((c.prox(3.0, y) - y / 4.0).norm() < 1e-12);
}

TEST_CASE("oracle validation accepts a consistent spec", "[objective][oracle]") {
    ObjectiveSpec spec;
    spec.name = "consistent";
    spec.convex = half_sqnorm(4);
    spec.smooth = quartic(4);
    const OracleReport rep = validate_oracles(spec);
    INFO((rep.failures.empty() ? std::string() : rep.failures.front()));
    CHECK(rep.pass);
    CHECK(rep.grad_max_err < 1e-6);
    CHECK(rep.convexity_min >= 0.0);
    CHECK(rep.cocoercivity_min >= -1e-12);
    CHECK(rep.hessian_asymmetry < 1e-10);
}

TEST_CASE("oracle validation flags a wrong gradient", "[objective][oracle]") {
    ObjectiveSpec spec;
    spec.name = "broken";
    spec.convex = half_sqnorm(3);
    spec.smooth = quartic(3);
    spec.smooth.gradient = [](const Vector& x) { return Vector(1.1 * x.squaredNorm() * x); };
    const OracleReport rep = validate_oracles(spec);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.failures.empty());
}

TEST_CASE("oracle validation checks prox operators for firm nonexpansiveness",
          "[objective][oracle]") {
    ObjectiveSpec spec;
    spec.name = "prox-ok";
    spec.convex = half_sqnorm(3);
    spec.convex.mode = ConvexMode::Prox;
    spec.convex.prox = [](double gamma, const Vector& y) { return Vector(y / (1.0 + gamma)); };
    spec.smooth = zero_smooth(3);
    const OracleReport ok = validate_oracles(spec);
    INFO((ok.failures.empty() ? std::string() : ok.failures.front()));
    CHECK(ok.pass);
    CHECK(ok.prox_firm_min >= -1e-12);

    // An overshooting "prox" violates firm nonexpansiveness.
    spec.convex.prox = [](double gamma, const Vector& y) {
        return Vector(y * (1.0 + gamma));
    };
    const OracleReport bad = validate_oracles(spec);
    CHECK_FALSE(bad.pass);
}
