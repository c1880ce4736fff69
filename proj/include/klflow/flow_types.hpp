#pragma once

#include <klflow/objective.hpp>

#include <vector>

namespace klflow {

enum class StepPolicyKind { Fixed, Adaptive };

struct StepPolicy {
    StepPolicyKind kind = StepPolicyKind::Fixed;
    double rel_tol = 1e-8;
    double abs_tol = 1e-8;
    double h_min = 1e-12;
    double h_max = kInf;  // integrate() defaults this to t_max/100 when unset
};

struct DynamicsParams {
    double lambda = 1.0;
    double step = 1e-2;  // fixed step, or initial step when adaptive
    StepPolicy policy;
    double t_max = 10.0;
    double stop_grad_tol = 1e-10;  // stop when ||v + grad psi(x)|| <= this; 0 disables
    double stop_step_tol = 1e-12;  // stop when ||dx||/h <= this; 0 disables
    int sample_stride = 1;
};

struct FlowState {
    double t = 0.0;
    Vector x;
    Vector v;  // SMOOTH: grad phi(x); PROX: certified element of dphi(x)
};

enum class Termination { GradTol, StepTol, TMax, Diverged };

[[nodiscard]] constexpr const char* to_string(Termination t) {
    switch (t) {
        case Termination::GradTol: return "GRAD_TOL";
        case Termination::StepTol: return "STEP_TOL";
        case Termination::TMax: return "T_MAX";
        case Termination::Diverged: return "DIVERGED";
    }
    return "UNKNOWN";
}

// Per accepted step. Rates use forward differences of the step endpoints;
// fields that a mode cannot provide are NaN (serialized as empty).
struct StepDiagnostics {
    double t = 0.0;                  // time at the new state
    double obj = 0.0;                // PHI at the new state
    double energy_residual = 0.0;    // discrete energy identity residual
    double descent = 0.0;            // PHI_next - PHI_prev
    double cross_term = 0.0;         // <dx, dv>/h
    double cocoercivity_slack = 0.0; // <dx,dv> - rho||dv||^2 (SMOOTH only)
    double forcing_slack = 0.0;      // positive values violate the forcing bound
    double stationarity = 0.0;       // ||v + grad psi(x)|| at the new state
    double step_norm_x = 0.0;        // ||dx||/h
    double step_norm_v = 0.0;        // ||dv||/h
};

struct Trajectory {
    const ObjectiveSpec* spec = nullptr;
    DynamicsParams params;
    std::vector<FlowState> samples;              // strided; always includes t=0 and the end
    std::vector<long> sample_diag_index;         // diagnostics row per sample; -1 for t=0
    std::vector<StepDiagnostics> diagnostics;    // one row per accepted step
    Termination termination = Termination::TMax;
    long accepted_steps = 0;
    long rejected_steps = 0;
    // PROX bookkeeping (NaN in SMOOTH mode)
    double max_scheme_residual = kNaN;   // worst || lambda dx + (1+h)v+ - v + h grad psi ||
    double max_cert_violation = kNaN;    // worst subgradient-certification slack of v+
    double v0_cert_residual = kNaN;      // resolvent certification residual of v0
};

}  // namespace klflow
