// Minimal library walkthrough: build a catalog objective, integrate the flow,
// and print the limit, the measured decay regime, and the runtime checks.

#include <klflow/klflow.hpp>

#include <iostream>

int main() {
    using namespace klflow;

    ObjectiveSpec spec = catalog_make("double_well", 2, {0.1});

    DynamicsParams params;
    params.lambda = 1.0;
    params.step = 1e-2;
    params.t_max = 60.0;

    Vector x0(2);
    x0 << 1.4, -0.3;

    Trajectory traj = integrate(spec, params, x0);
    LimitSetEstimate limit = estimate_limit(traj);
    RateEstimate rate = classify_rate(traj, limit.x_limit);

    std::cout << "termination: " << to_string(traj.termination) << "\n"
              << "x_limit:     [" << limit.x_limit.transpose() << "]\n"
              << "objective:   " << limit.objective_limit << "\n"
              << "regime:      " << to_string(rate.regime) << "\n";

    CheckSummary checks = summarize_checks(traj);
    std::cout << "max ascent:        " << checks.monotonic_max_ascent << "\n"
              << "cocoercivity min:  " << checks.cocoercivity_min << "\n"
              << "stationarity tail: " << checks.stationarity_tail_max << "\n";
    if (checks.kl)
        std::cout << "kl violations:     " << checks.kl->violations << "\n";
    return 0;
}
