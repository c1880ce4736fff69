#include <klflow/klflow.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

namespace {

// Exit codes: 0 success, 1 an enforced check failed or regimes mismatch,
// 2 bad configuration or usage, 3 a diverged integration or an unexpected
// internal error.
constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitInternal = 3;

bool log_enabled() {
    const char* v = std::getenv("KLFLOW_LOG");
    return v != nullptr && *v != '\0';
}

void log_line(const std::string& msg) {
    if (log_enabled()) std::cerr << "[klflow] " << msg << "\n";
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int workers = 1;
};

klflow::RunConfig load(const CommonOpts& opts) {
    klflow::RunConfig cfg = klflow::load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    return cfg;
}

std::filesystem::path ensure_out_dir(const std::string& dir) {
    const std::filesystem::path p = dir.empty() ? "." : dir;
    std::filesystem::create_directories(p);
    return p;
}

int cmd_run(const CommonOpts& opts, bool plot) {
    const klflow::RunConfig cfg = load(opts);
    log_line("run: objective=" + cfg.objective_name +
             " lambda=" + klflow::format_double(cfg.dynamics.lambda) +
             " step=" + klflow::format_double(cfg.dynamics.step));
    const klflow::RunResult res = klflow::run_single(cfg);

    const auto out = ensure_out_dir(opts.out_dir);
    const auto csv_path = out / "trajectory.csv";
    klflow::write_trajectory_csv(csv_path.string(), res.trajectory);
    const klflow::json rep = klflow::report_json(cfg, res.trajectory, res.limit, res.rate,
                                                 res.checks, res.wall_ms, &res.enforced);
    std::ofstream jf(out / "report.json");
    jf << rep.dump(2) << "\n";
    if (plot) klflow::write_gnuplot_script((out / "plot.gp").string(), "trajectory.csv");

    std::cout << "objective=" << cfg.objective_name
              << " termination=" << klflow::to_string(res.trajectory.termination)
              << " t_final=" << klflow::format_double(res.trajectory.samples.back().t)
              << " obj=" << klflow::format_double(res.limit.objective_limit)
              << " regime=" << klflow::to_string(res.rate.regime)
              << " checks=" << (res.checks_pass ? "ok" : "FAILED") << "\n";
    for (const auto& c : res.enforced)
        if (!c.pass)
            std::cout << "  check " << c.name << ": value=" << klflow::format_double(c.value)
                      << " tolerance=" << klflow::format_double(c.tolerance) << " FAILED\n";
    if (res.trajectory.termination == klflow::Termination::Diverged) return kExitDiverged;
    return res.checks_pass ? kExitOk : kExitFailed;
}

int cmd_sweep(const CommonOpts& opts) {
    const klflow::RunConfig cfg = load(opts);
    const auto cells = klflow::sweep_cells(cfg);
    log_line("sweep: " + std::to_string(cells.size()) + " cells, " +
             std::to_string(opts.workers) + " workers");
    const std::vector<klflow::SweepRow> rows = klflow::run_sweep(cfg, opts.workers);
    const auto out = ensure_out_dir(opts.out_dir);
    klflow::write_sweep_csv((out / "aggregate.csv").string(), rows);
    std::size_t diverged = 0, failed = 0;
    for (const auto& r : rows) {
        if (r.termination == klflow::Termination::Diverged) ++diverged;
        if (!r.checks_pass) ++failed;
    }
    std::cout << "cells=" << rows.size() << " diverged=" << diverged
              << " check_failures=" << failed << " -> " << (out / "aggregate.csv").string()
              << "\n";
    if (diverged > 0) return kExitDiverged;
    return failed == 0 ? kExitOk : kExitFailed;
}

int cmd_check(const CommonOpts& opts, int grid_points, std::optional<double> theta) {
    const klflow::RunConfig cfg = load(opts);
    const klflow::ObjectiveSpec spec = klflow::objective_from_config(cfg);

    const klflow::OracleReport rep = klflow::validate_oracles(spec);
    std::cout << "oracles: " << (rep.pass ? "ok" : "FAILED")
              << " grad_err=" << klflow::format_double(rep.grad_max_err)
              << " grad_order=" << klflow::format_double(rep.grad_order) << "\n";
    for (const auto& f : rep.failures) std::cout << "  " << f << "\n";
    bool ok = rep.pass;

    if (spec.kl_profile) {
        klflow::KLProfile prof = *spec.kl_profile;
        if (theta) prof.theta = *theta;
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<klflow::Vector> grid;
        const double radius = std::min(prof.radius, 4.0);
        for (int i = 0; i < grid_points; ++i) {
            klflow::Vector dir(cfg.dimension);
            for (int k = 0; k < cfg.dimension; ++k) dir[k] = gauss(rng);
            const double nrm = dir.norm();
            if (nrm == 0.0) continue;
            grid.push_back(prof.critical_point +
                           (radius * std::pow(unif(rng), 1.0 / cfg.dimension) / nrm) * dir);
        }
        const klflow::KLCheckReport kl = klflow::kl_inequality_check(spec, prof, grid);
        std::cout << "kl: theta=" << klflow::format_double(prof.theta)
                  << " checked=" << kl.points_checked << " violations=" << kl.violations
                  << " max_violation=" << klflow::format_double(kl.max_violation)
                  << " empirical_constant=" << klflow::format_double(kl.empirical_constant)
                  << "\n";
        ok = ok && kl.violations == 0;
    } else {
        std::cout << "kl: no profile declared for this objective\n";
    }
    return ok ? kExitOk : kExitFailed;
}

double json_or_nan(const klflow::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return klflow::kNaN;
    return j.at(key).get<double>();
}

std::string brief(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct RateRow {
    std::string problem;
    double theta = klflow::kNaN;         // declared Lojasiewicz exponent, if any
    std::string predicted = "-";
    double predicted_exponent = klflow::kNaN;
    std::string observed = "-";
    double observed_exponent = klflow::kNaN;
    double rel_error = klflow::kNaN;
    std::string note = "ok";
};

// Compares each run report's measured regime against the regime the declared
// Lojasiewicz exponent predicts. Reports for problems without a declared
// exponent are flagged, not errors; so are UNDETERMINED fits.
int cmd_rates(const std::vector<std::string>& report_paths, const std::string& out_dir) {
    std::vector<RateRow> rows;
    bool mismatch = false;
    for (const std::string& path : report_paths) {
        std::ifstream in(path);
        if (!in) throw klflow::ConfigError("rates: cannot open report '" + path + "'");
        klflow::json rep;
        try {
            in >> rep;
        } catch (const klflow::json::exception& e) {
            throw klflow::ConfigError("rates: invalid report '" + path + "': " + e.what());
        }
        if (!rep.contains("objective") || !rep.contains("rate"))
            throw klflow::ConfigError("rates: '" + path +
                                      "' is not a run report (missing objective/rate)");

        RateRow row;
        row.problem = rep.at("objective").at("name").get<std::string>();
        row.observed = rep.at("rate").at("regime").get<std::string>();
        const double b = json_or_nan(rep.at("rate"), "b");
        const double q = json_or_nan(rep.at("rate"), "q");
        const double theta_implied = json_or_nan(rep.at("rate"), "theta_implied");
        if (row.observed == "EXPONENTIAL") row.observed_exponent = b;
        if (row.observed == "POLYNOMIAL") row.observed_exponent = q;

        klflow::RunConfig probe;
        probe.objective_name = row.problem;
        probe.dimension = rep.at("objective").at("dimension").get<int>();
        if (rep.at("objective").contains("params"))
            for (const auto& [k, v] : rep.at("objective").at("params").items())
                probe.objective_params[k] = v.get<double>();
        try {
            const klflow::ObjectiveSpec spec = klflow::objective_from_config(probe);
            if (spec.kl_profile) row.theta = spec.kl_profile->theta;
        } catch (const klflow::ConfigError&) {
            // Not a catalog problem; no declared exponent to compare against.
        }

        if (std::isnan(row.theta)) {
            row.note = "no-exponent";
        } else {
            const klflow::RegimePrediction pred = klflow::predicted_regime(row.theta);
            row.predicted = klflow::to_string(pred.regime);
            row.predicted_exponent = pred.poly_exponent;
            if (row.observed == "UNDETERMINED") {
                row.note = "UNDETERMINED";
            } else if (row.observed != row.predicted) {
                row.note = "MISMATCH";
                mismatch = true;
            } else if (pred.regime == klflow::RateRegime::Polynomial) {
                row.rel_error = std::abs(q - pred.poly_exponent) / pred.poly_exponent;
            } else if (pred.regime == klflow::RateRegime::Exponential) {
                row.rel_error = std::abs(theta_implied - row.theta) / row.theta;
            } else {
                row.rel_error = 0.0;
            }
        }
        rows.push_back(row);
    }

    std::cout << std::left << std::setw(22) << "problem" << std::setw(8) << "theta"
              << std::setw(14) << "predicted" << std::setw(9) << "pred_q" << std::setw(14)
              << "observed" << std::setw(11) << "exponent" << std::setw(10) << "rel_err"
              << "note\n";
    for (const auto& r : rows)
        std::cout << std::left << std::setw(22) << r.problem << std::setw(8) << brief(r.theta)
                  << std::setw(14) << r.predicted << std::setw(9)
                  << brief(r.predicted_exponent) << std::setw(14) << r.observed
                  << std::setw(11) << brief(r.observed_exponent) << std::setw(10)
                  << brief(r.rel_error) << r.note << "\n";

    const auto out = ensure_out_dir(out_dir);
    std::ofstream csv(out / "rates.csv");
    csv << "problem,theta,predicted_regime,predicted_exponent,observed_regime,"
           "observed_exponent,rel_error,note\n";
    auto cell = [&](double v) {
        csv << ',';
        if (!std::isnan(v)) csv << klflow::format_double(v);
    };
    for (const auto& r : rows) {
        csv << r.problem;
        cell(r.theta);
        csv << ',' << r.predicted;
        cell(r.predicted_exponent);
        csv << ',' << r.observed;
        cell(r.observed_exponent);
        cell(r.rel_error);
        csv << ',' << r.note << '\n';
    }
    return mismatch ? kExitFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator for a Newton-like flow on composite objectives, with "
                 "runtime descent/KL checks and convergence-rate classification"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool plot = false;
    int grid_points = 2048;
    std::optional<double> theta;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", opts.config_path, "JSON run configuration")->required();
        auto* o = sub->add_option("--out", opts.out_dir, "output directory");
        if (needs_out) o->required();
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--workers", opts.workers, "worker threads")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* run = app.add_subcommand("run", "integrate one trajectory and write artifacts");
    add_common(run, false);
    run->add_flag("--plot", plot, "also write a gnuplot script");

    CLI::App* sweep = app.add_subcommand("sweep", "run a (lambda, step, start) grid");
    add_common(sweep, true);

    CLI::App* check = app.add_subcommand(
        "check", "validate objective oracles and the declared Lojasiewicz inequality");
    add_common(check, false);
    check->add_option("--grid", grid_points, "sample points for the inequality check")
        ->check(CLI::PositiveNumber);
    check->add_option("--theta", theta, "check a different exponent than the declared one");

    std::vector<std::string> report_paths;
    std::string rates_out;
    CLI::App* rates = app.add_subcommand(
        "rates", "compare run reports against the declared exponent's predicted regime");
    rates->add_option("reports", report_paths, "report.json files from 'run'")
        ->required()
        ->expected(-1);
    rates->add_option("--out", rates_out, "output directory for rates.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(opts, plot);
        if (sweep->parsed()) return cmd_sweep(opts);
        if (check->parsed()) return cmd_check(opts, grid_points, theta);
        if (rates->parsed()) return cmd_rates(report_paths, rates_out);
        return kExitConfig;
    } catch (const klflow::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
