#include <klflow/catalog.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace klflow;

TEST_CASE("every catalog entry passes oracle validation", "[catalog][oracle]") {
    struct Entry {
        const char* name;
        std::vector<double> params;
    };
    const Entry entries[] = {
        {"quadratic", {}},
        {"power2p", {2.0}},
        {"power2p", {3.0}},
        {"double_well", {0.1}},
        {"rosenbrock_plus_l2", {1.0, 5.0}},
        {"l1_plus_quadratic", {1.0}},
        {"huber_plus_quartic", {0.5}},
    };
    for (const auto& e : entries) {
        const ObjectiveSpec spec = catalog_make(e.name, 3, e.params);
        const OracleReport rep = validate_oracles(spec);
        INFO(e.name << (rep.failures.empty() ? "" : ": " + rep.failures.front()));
        CHECK(rep.pass);
    }
}

TEST_CASE("catalog rejects bad names, parameters, and dimensions", "[catalog]") {
    CHECK_THROWS_WITH(catalog_make("no_such_entry", 2),
                      "catalog_make: unknown catalog entry 'no_such_entry'");
    CHECK_THROWS_AS(catalog_make("quadratic", 0), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("quadratic", 2, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("power2p", 2, {1.5}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("power2p", 2, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("double_well", 2, {-0.1}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("rosenbrock_plus_l2", 1, {1.0, 5.0}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("l1_plus_quadratic", 2, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(catalog_make("huber_plus_quartic", 2, {-1.0}), std::invalid_argument);
}

TEST_CASE("quadratic entry values and exponent", "[catalog]") {
    const ObjectiveSpec spec = catalog_make("quadratic", 2);
    Vector x(2);
    x << 1.2, -0.5;
    CHECK(eval_objective(spec, x) == Catch::Approx(0.845).epsilon(1e-15));
    CHECK(grad_total(spec, x).isApprox(x, 1e-15));
    REQUIRE(spec.kl_profile.has_value());
    CHECK(spec.kl_profile->theta == 0.5);
    CHECK(spec.infimum == 0.0);

    // gap^theta == C * ||grad|| holds with equality everywhere.
    const double gap = eval_objective(spec, x);
    const double lhs = std::pow(gap, spec.kl_profile->theta);
    const double rhs = spec.kl_profile->constant * grad_total(spec, x).norm();
    CHECK(lhs == Catch::Approx(rhs).margin(1e-14));
}

TEST_CASE("power2p entry values and tight exponent", "[catalog]") {
    const ObjectiveSpec spec = catalog_make("power2p", 2, {2.0});
    Vector x(2);
    x << 0.6, -0.3;
    const double s = x.squaredNorm();
    CHECK(eval_objective(spec, x) == Catch::Approx(s * s / 4.0).epsilon(1e-14));
    CHECK(grad_total(spec, x).isApprox(Vector(s * x), 1e-14));
    REQUIRE(spec.kl_profile.has_value());
    CHECK(spec.kl_profile->theta == Catch::Approx(0.75));

    const double lhs = std::pow(eval_objective(spec, x), 0.75);
    const double rhs = spec.kl_profile->constant * grad_total(spec, x).norm();
    CHECK(lhs == Catch::Approx(rhs).margin(1e-14));

    // p = 1 degenerates to theta = 1/2 with the quadratic's constant.
    const ObjectiveSpec p1 = catalog_make("power2p", 2, {1.0});
    CHECK(p1.kl_profile->theta == 0.5);
    CHECK(p1.kl_profile->constant == Catch::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("double well entry knows its wells and infimum", "[catalog]") {
    const double mu = 0.1;
    const ObjectiveSpec spec = catalog_make("double_well", 3, {mu});
    CHECK(spec.infimum == Catch::Approx(-0.25 * 0.9 * 0.9).epsilon(1e-15));
    REQUIRE(spec.known_critical_points.size() == 3);
    for (std::size_t i = 1; i < 3; ++i) {
        const Vector& well = spec.known_critical_points[i];
        CHECK(well.norm() == Catch::Approx(std::sqrt(1.0 - mu)).epsilon(1e-15));
        CHECK(grad_total(spec, well).norm() < 1e-15);
        CHECK(eval_objective(spec, well) == Catch::Approx(spec.infimum).margin(1e-15));
    }
}

TEST_CASE("rosenbrock entry matches hand-computed values", "[catalog]") {
    const ObjectiveSpec spec = catalog_make("rosenbrock_plus_l2", 2, {1.0, 5.0});
    Vector x(2);
    x << 0.5, 0.25;  // the coupling term vanishes here
    CHECK(eval_objective(spec, x) == Catch::Approx(0.40625).epsilon(1e-15));
    Vector g_expect(2);
    g_expect << -0.5, 0.25;
    CHECK(grad_total(spec, x).isApprox(g_expect, 1e-14));
}

TEST_CASE("l1 entry exposes the soft-threshold prox", "[catalog]") {
    const ObjectiveSpec spec = catalog_make("l1_plus_quadratic", 1, {2.0});
    CHECK_FALSE(spec.is_smooth_mode());
    Vector y(1);
    y << 4.0;
    CHECK(prox_convex(spec, 1.0, y)[0] == Catch::Approx(2.0).epsilon(1e-15));
    y << -1.5;
    CHECK(prox_convex(spec, 1.0, y)[0] == 0.0);
    y << 1.0;
    CHECK(eval_objective(spec, y) == Catch::Approx(2.5).epsilon(1e-15));
    CHECK_THROWS_AS(grad_total(spec, y), std::logic_error);
}

TEST_CASE("huber entry values and gradient saturation", "[catalog]") {
    const ObjectiveSpec spec = catalog_make("huber_plus_quartic", 1, {0.5});
    Vector x(1);
    x << 2.0;
    // huber: 0.5*2 - 0.125 = 0.875; quartic: 0.25*16 = 4
    CHECK(eval_objective(spec, x) == Catch::Approx(4.875).epsilon(1e-15));
    CHECK(grad_total(spec, x)[0] == Catch::Approx(0.5 + 8.0).epsilon(1e-15));
    x << 0.25;
    CHECK(grad_total(spec, x)[0] == Catch::Approx(0.25 + 0.25 * 0.25 * 0.25).epsilon(1e-14));
}

TEST_CASE("declared Lipschitz constants bound sampled gradient ratios", "[catalog]") {
    for (const char* name : {"power2p", "double_well", "huber_plus_quartic"}) {
        const std::vector<double> params = std::string(name) == "power2p"
                                               ? std::vector<double>{2.0}
                                               : std::vector<double>{0.5};
        const ObjectiveSpec spec = catalog_make(name, 4, params);
        const OracleReport rep = validate_oracles(spec);
        INFO(name);
        CHECK(rep.lipschitz_max_ratio <= 1.0 + 1e-9);
    }
}
