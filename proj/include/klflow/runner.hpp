#pragma once

#include <klflow/io.hpp>

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

namespace klflow {

inline Vector draw_start(int dimension, double radius, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector dir(dimension);
    for (int i = 0; i < dimension; ++i) dir[i] = gauss(rng);
    const double nrm = dir.norm();
    if (nrm == 0.0) return Vector::Constant(dimension, radius / std::sqrt(double(dimension)));
    // Uniform in the ball: direction times radius * U^(1/n).
    const double r = radius * std::pow(unif(rng), 1.0 / dimension);
    return (r / nrm) * dir;
}

struct RunResult {
    ObjectiveSpec spec;  // owns the callables referenced by trajectory.spec
    Trajectory trajectory;
    LimitSetEstimate limit;
    RateEstimate rate;
    CheckSummary checks;
    std::vector<EnforcedCheck> enforced;
    bool checks_pass = true;
    double wall_ms = 0.0;
};

inline RunResult run_single(const RunConfig& cfg, std::uint64_t start_seed_offset = 0) {
    RunResult res;
    res.spec = objective_from_config(cfg);
    validate_checks(cfg, res.spec);
    const Vector x0 = cfg.x0 ? *cfg.x0
                             : draw_start(cfg.dimension, cfg.start_radius,
                                          cfg.seed + start_seed_offset);
    const auto t0 = std::chrono::steady_clock::now();
    res.trajectory = integrate(res.spec, cfg.dynamics, x0, cfg.v0);
    const auto t1 = std::chrono::steady_clock::now();
    res.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    res.limit = estimate_limit(res.trajectory);
    try {
        res.rate = classify_rate(res.trajectory, res.limit.x_limit, cfg.window_fraction);
    } catch (const std::invalid_argument&) {
        // Too few window samples (early termination); leave UNDETERMINED.
        res.rate = RateEstimate{};
    }
    res.checks = summarize_checks(res.trajectory);
    if (cfg.kl_theta_override && res.spec.kl_profile) {
        KLProfile prof = *res.spec.kl_profile;
        prof.theta = *cfg.kl_theta_override;
        res.checks.kl = kl_inequality_check(res.spec, prof, res.trajectory);
    }
    res.enforced = enforce_checks(cfg, res.trajectory, res.checks);
    for (const auto& c : res.enforced) res.checks_pass = res.checks_pass && c.pass;
    return res;
}

struct SweepCell {
    std::size_t index = 0;
    double lambda = 0.0;
    double step = 0.0;
    int start = 0;
    std::uint64_t seed = 0;
};

inline std::vector<SweepCell> sweep_cells(const RunConfig& cfg) {
    std::vector<double> lambdas =
        cfg.sweep_lambda.empty() ? std::vector<double>{cfg.dynamics.lambda} : cfg.sweep_lambda;
    std::vector<double> steps =
        cfg.sweep_step.empty() ? std::vector<double>{cfg.dynamics.step} : cfg.sweep_step;
    std::vector<SweepCell> cells;
    std::size_t idx = 0;
    for (double l : lambdas)
        for (double h : steps)
            for (int s = 0; s < cfg.start_count; ++s) {
                SweepCell c;
                c.index = idx++;
                c.lambda = l;
                c.step = h;
                c.start = s;
                c.seed = cfg.seed + 1000003ULL * c.index;
                cells.push_back(c);
            }
    return cells;
}

struct SweepRow {
    SweepCell cell;
    Termination termination = Termination::TMax;
    double t_final = kNaN;
    long accepted = 0, rejected = 0;
    double obj_limit = kNaN;
    double stationarity_final = kNaN;
    RateRegime regime = RateRegime::Undetermined;
    double rate_param = kNaN;  // b for exponential, q for polynomial
    double fit_r2 = kNaN;
    bool checks_pass = true;
    CheckSummary checks;
};

// Runs every (lambda, step, start) cell. Cells execute concurrently but the
// output order is the cell order, so aggregates are reproducible for any
// worker count.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, int workers = 1) {
    const std::vector<SweepCell> cells = sweep_cells(cfg);
    std::vector<SweepRow> rows(cells.size());
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= cells.size()) break;
            try {
                RunConfig cell_cfg = cfg;
                cell_cfg.dynamics.lambda = cells[i].lambda;
                cell_cfg.dynamics.step = cells[i].step;
                cell_cfg.seed = cells[i].seed;
                if (cells[i].start > 0) cell_cfg.x0.reset();
                SweepRow row;
                row.cell = cells[i];
                const RunResult res = run_single(cell_cfg);
                row.termination = res.trajectory.termination;
                row.t_final = res.trajectory.samples.back().t;
                row.accepted = res.trajectory.accepted_steps;
                row.rejected = res.trajectory.rejected_steps;
                row.obj_limit = res.limit.objective_limit;
                row.stationarity_final =
                    (res.trajectory.samples.back().v +
                     res.spec.smooth.gradient(res.trajectory.samples.back().x))
                        .norm();
                row.regime = res.rate.regime;
                row.rate_param = res.rate.regime == RateRegime::Exponential ? res.rate.b
                                 : res.rate.regime == RateRegime::Polynomial ? res.rate.q
                                                                             : kNaN;
                row.fit_r2 = res.rate.fit_r2;
                row.checks_pass = res.checks_pass;
                row.checks = res.checks;
                rows[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int nthreads = std::max(1, workers);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return rows;
}

// Aggregate CSV for a sweep. Deliberately timestamp-free so identical inputs
// give byte-identical files.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "cell,lambda,step,start,seed,termination,t_final,accepted,rejected,"
           "obj_limit,stationarity_final,regime,rate_param,fit_r2,"
           "monotonic_max_ascent,forcing_max,cocoercivity_min,cross_term_min,"
           "energy_max_abs\n";
    auto cell = [&](double v) {
        out << ',';
        if (!std::isnan(v)) out << format_double(v);
    };
    for (const auto& r : rows) {
        out << r.cell.index << ',' << format_double(r.cell.lambda) << ','
            << format_double(r.cell.step) << ',' << r.cell.start << ',' << r.cell.seed
            << ',' << to_string(r.termination);
        cell(r.t_final);
        out << ',' << r.accepted << ',' << r.rejected;
        cell(r.obj_limit);
        cell(r.stationarity_final);
        out << ',' << to_string(r.regime);
        cell(r.rate_param);
        cell(r.fit_r2);
        cell(r.checks.monotonic_max_ascent);
        cell(r.checks.forcing_max);
        cell(r.checks.cocoercivity_min);
        cell(r.checks.cross_term_min);
        cell(r.checks.energy_max_abs);
        out << '\n';
    }
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_sweep_csv(out, rows);
}

}  // namespace klflow
