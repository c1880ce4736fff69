#include <klflow/runner.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <set>
#include <sstream>

using namespace klflow;

namespace {

RunConfig config_from(const char* text) { return parse_config(json::parse(text)); }

}  // namespace

TEST_CASE("configs parse with explicit values and with defaults", "[io][config]") {
    const RunConfig cfg = config_from(R"({
        "objective": {"name": "double_well", "dimension": 4, "params": {"mu": 0.2}},
        "dynamics": {"lambda": 2.0, "step": 0.005, "t_max": 42.0, "adaptive": true,
                     "rel_tol": 1e-9, "h_max": 0.5, "sample_stride": 3},
        "initial": {"x0": [1, 2, 3, 4], "radius": 1.5},
        "analysis": {"window_fraction": 0.4, "kl_theta_override": 0.75},
        "seed": 99,
        "sweep": {"lambda": [0.5, 1.0], "step": [0.01], "starts": 2}
    })");
    CHECK(cfg.objective_name == "double_well");
    CHECK(cfg.dimension == 4);
    CHECK(cfg.objective_params.at("mu") == 0.2);
    CHECK(cfg.dynamics.lambda == 2.0);
    CHECK(cfg.dynamics.step == 0.005);
    CHECK(cfg.dynamics.t_max == 42.0);
    CHECK(cfg.dynamics.policy.kind == StepPolicyKind::Adaptive);
    CHECK(cfg.dynamics.policy.rel_tol == 1e-9);
    CHECK(cfg.dynamics.policy.h_max == 0.5);
    CHECK(cfg.dynamics.sample_stride == 3);
    REQUIRE(cfg.x0.has_value());
    CHECK((*cfg.x0)[3] == 4.0);
    CHECK(cfg.start_radius == 1.5);
    CHECK(cfg.window_fraction == 0.4);
    CHECK(cfg.kl_theta_override == 0.75);
    CHECK(cfg.seed == 99);
    CHECK(cfg.sweep_lambda == std::vector<double>{0.5, 1.0});
    CHECK(cfg.start_count == 2);

    const RunConfig min = config_from(R"({"objective": {"name": "quadratic", "dimension": 2}})");
    CHECK(min.dynamics.lambda == 1.0);
    CHECK(min.dynamics.step == 0.01);
    CHECK(min.dynamics.policy.kind == StepPolicyKind::Fixed);
    CHECK_FALSE(min.x0.has_value());
    CHECK(min.seed == 12345);
}

TEST_CASE("config validation rejects malformed input", "[io][config]") {
    CHECK_THROWS_AS(config_from(R"([1, 2])"), ConfigError);
    CHECK_THROWS_AS(config_from(R"({})"), ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic"}})"), ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 0}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "dynamics": {"lambda": -1}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "initial": {"x0": [1, 2, 3]}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "analysis": {"window_fraction": 1.0}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "sweep": {"step": [0.0]}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "sweep": {"lambda": []}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "dynamics": {"stop_grad_tol": -1.0}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "dynamics": {"stop_step_tol": -1e-3}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "checks": {"frobnication": 1e-8}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from(R"({"objective": {"name": "quadratic", "dimension": 2},
                                    "checks": {"energy": -1e-8}})"),
                    ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/path.json"), ConfigError);
}

TEST_CASE("check enforcement resolves defaults per mode", "[io][checks]") {
    RunConfig cfg = config_from(R"({
        "objective": {"name": "quadratic", "dimension": 1},
        "dynamics": {"step": 0.01, "t_max": 5.0},
        "initial": {"x0": [1.0]}
    })");
    RunResult res = run_single(cfg);
    CHECK(res.checks_pass);
    std::set<std::string> names;
    for (const auto& c : res.enforced) {
        CHECK(c.pass);
        names.insert(c.name);
    }
    // Smooth defaults plus kl, since quadratic declares a profile.
    CHECK(names == std::set<std::string>{"monotonicity", "cross_term", "energy", "forcing",
                                         "cocoercivity", "kl"});

    cfg = config_from(R"({
        "objective": {"name": "l1_plus_quadratic", "dimension": 1},
        "dynamics": {"step": 0.01, "t_max": 5.0},
        "initial": {"x0": [1.0]}
    })");
    res = run_single(cfg);
    CHECK(res.checks_pass);
    names.clear();
    for (const auto& c : res.enforced) names.insert(c.name);
    CHECK(names == std::set<std::string>{"monotonicity", "cross_term", "scheme_residual",
                                         "certification"});

    // Explicit requests the mode cannot measure are configuration errors.
    cfg.checks = std::map<std::string, double>{{"cocoercivity", 1e-8}};
    CHECK_THROWS_AS(run_single(cfg), ConfigError);

    // An unmeetable tolerance flips the verdict without touching the run.
    cfg = config_from(R"({
        "objective": {"name": "quadratic", "dimension": 1},
        "dynamics": {"step": 0.01, "t_max": 5.0},
        "initial": {"x0": [1.0]},
        "checks": {"energy": 0.0}
    })");
    res = run_single(cfg);
    CHECK_FALSE(res.checks_pass);
    REQUIRE(res.enforced.size() == 1);
    CHECK(res.enforced[0].name == "energy");
    CHECK_FALSE(res.enforced[0].pass);
    CHECK(res.enforced[0].value > 0.0);
}

TEST_CASE("objectives build from config with named parameters", "[io][config]") {
    RunConfig cfg = config_from(R"({"objective": {"name": "l1_plus_quadratic",
                                    "dimension": 2, "params": {"weight": 2.0}}})");
    const ObjectiveSpec spec = objective_from_config(cfg);
    Vector x(2);
    x << 1.0, -1.0;
    CHECK(spec.convex.value(x) == Catch::Approx(4.0));

    // Defaults fill omitted parameters.
    cfg = config_from(R"({"objective": {"name": "rosenbrock_plus_l2", "dimension": 2}})");
    CHECK_NOTHROW(objective_from_config(cfg));

    cfg = config_from(R"({"objective": {"name": "quadratic", "dimension": 2,
                          "params": {"mu": 1.0}}})");
    CHECK_THROWS_AS(objective_from_config(cfg), ConfigError);
    cfg = config_from(R"({"objective": {"name": "mystery", "dimension": 2}})");
    CHECK_THROWS_AS(objective_from_config(cfg), ConfigError);
}

TEST_CASE("formatted doubles round-trip exactly", "[io]") {
    for (double v : {3.141592653589793, 1.0 / 3.0, -2.2250738585072014e-308, 1e300,
                     -0.0, 123456789.123456789}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("trajectory CSV round-trips through the reader", "[io][csv]") {
    const ObjectiveSpec spec = catalog_make("quadratic", 2);
    DynamicsParams params;
    params.step = 0.01;
    params.t_max = 0.5;
    Vector x0(2);
    x0 << 1.0, -0.5;
    const Trajectory traj = integrate(spec, params, x0);

    std::stringstream ss;
    write_trajectory_csv(ss, traj);
    const CsvTable table = read_csv(ss);

    REQUIRE(table.columns.size() == 2 * 2 + 9);
    CHECK(table.columns[0] == "t");
    CHECK(table.column("x_0") == 1);
    CHECK(table.column("v_1") == 4);
    CHECK(table.column("obj") == 5);
    CHECK(table.column("step_norm_v") == 12);
    REQUIRE(table.rows.size() == traj.samples.size());

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        CHECK(table.rows[r][0] == traj.samples[r].t);
        CHECK(table.rows[r][1] == traj.samples[r].x[0]);
        CHECK(table.rows[r][3] == traj.samples[r].v[0]);
    }
    // The t = 0 row carries no step diagnostics.
    CHECK(std::isnan(table.rows[0][static_cast<std::size_t>(table.column("descent"))]));
    CHECK_FALSE(std::isnan(table.rows[0][static_cast<std::size_t>(table.column("obj"))]));
    CHECK_FALSE(
        std::isnan(table.rows[1][static_cast<std::size_t>(table.column("descent"))]));

    std::stringstream empty;
    CHECK_THROWS_AS(read_csv(empty), std::runtime_error);
}

TEST_CASE("run reports serialize with null for undefined numbers", "[io][report]") {
    RunConfig cfg = config_from(R"({
        "objective": {"name": "l1_plus_quadratic", "dimension": 1},
        "dynamics": {"step": 0.01, "t_max": 50.0},
        "initial": {"x0": [0.5]}
    })");
    const RunResult res = run_single(cfg);
    const json rep = report_json(cfg, res.trajectory, res.limit, res.rate, res.checks,
                                 res.wall_ms);
    CHECK(rep.at("termination") == "STEP_TOL");
    CHECK(rep.at("rate").at("regime") == "FINITE");
    CHECK(rep.at("rate").at("b").is_null());            // no exponential fit happened
    CHECK(rep.at("rate").at("sigma_samples").is_array());
    CHECK(rep.at("rate").at("sigma_samples").size() >= 2);
    CHECK(rep.at("rate").at("sigma_samples").back()[1].get<double>() == 0.0);
    CHECK(rep.at("checks").at("cocoercivity_min").is_null());  // prox mode has none
    CHECK(rep.at("scheme_residual_max").get<double>() <= 1e-12);
    CHECK(rep.at("limit").at("x")[0].get<double>() == 0.0);
    CHECK(rep.at("steps").at("accepted").get<long>() > 0);
}

TEST_CASE("sweep cells expand in deterministic row-major order", "[io][sweep]") {
    RunConfig cfg = config_from(R"({
        "objective": {"name": "quadratic", "dimension": 1},
        "seed": 7,
        "sweep": {"lambda": [0.5, 1.0], "step": [0.01, 0.02], "starts": 2}
    })");
    const std::vector<SweepCell> cells = sweep_cells(cfg);
    REQUIRE(cells.size() == 8);
    CHECK(cells[0].lambda == 0.5);
    CHECK(cells[0].step == 0.01);
    CHECK(cells[0].start == 0);
    CHECK(cells[1].start == 1);
    CHECK(cells[2].step == 0.02);
    CHECK(cells[4].lambda == 1.0);
    CHECK(cells[3].index == 3);
    CHECK(cells[3].seed == 7 + 3 * 1000003ULL);
}

TEST_CASE("sweeps aggregate identically for any worker count", "[io][sweep]") {
    const RunConfig cfg = config_from(R"({
        "objective": {"name": "quadratic", "dimension": 2},
        "dynamics": {"step": 0.01, "t_max": 20.0},
        "seed": 31,
        "sweep": {"lambda": [0.5, 1.0, 2.0], "step": [0.01, 0.02], "starts": 2}
    })");
    const std::vector<SweepRow> rows1 = run_sweep(cfg, 1);
    const std::vector<SweepRow> rows4 = run_sweep(cfg, 4);
    std::stringstream a, b;
    write_sweep_csv(a, rows1);
    write_sweep_csv(b, rows4);
    CHECK(a.str() == b.str());
    REQUIRE(rows1.size() == 12);
    for (const auto& r : rows1) CHECK(r.termination == Termination::TMax);
}

TEST_CASE("gnuplot scripts reference the trajectory file", "[io]") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "klflow_io_test_plot.gp").string();
    write_gnuplot_script(path, "trajectory.csv");
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str().find("trajectory.csv") != std::string::npos);
    std::remove(path.c_str());
}
