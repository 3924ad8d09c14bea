#pragma once

#include "subflow/control.hpp"
#include "subflow/gradient.hpp"
#include "subflow/system.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace subflow {

enum class FlowScheme { explicit_euler, exponential_euler };

FlowScheme parse_scheme(const std::string& name);
std::string to_string(FlowScheme scheme);

struct FlowConfig {
    double dt0 = 0.1;
    FlowScheme scheme = FlowScheme::exponential_euler;
    double eps_stop = 1e-6;
    double t_max = 1e4;
    double backtrack_factor = 0.5;
    std::size_t max_rejects = 60;
    /// Hard cap on attempted steps; reaching it ends the run unconverged.
    std::size_t max_steps = 2'000'000;

    void validate() const;
};

struct FlowRecord {
    double t = 0.0;
    double energy = 0.0;
    double grad_norm = 0.0;
    double step_size = 0.0;
    bool accepted = true;
    double cum_length = 0.0;
    double h1 = 0.0;
};

/// Every attempted step in order; record 0 is the initial control.
/// Rejected attempts carry the trial energy and leave the other columns unchanged.
struct FlowTrace {
    std::vector<FlowRecord> steps;
    Control final_control;
    bool converged = false;
    double final_endpoint_cost = 0.0;

    std::size_t accepted_count() const;
    const FlowRecord& last_accepted() const;
};

/// One step of  dU/dt = -(U + beta h_U)  from u with the discrete-adjoint gradient.
Control flow_step(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u,
                  double dt, FlowScheme scheme);

/// Same step from a precomputed gradient representation.
Control flow_step(const Control& u, const GradientRep& grad, double beta, double dt, FlowScheme scheme);

/// Integrates the flow with energy-decrease backtracking until |G[U]| <= eps_stop or t >= t_max.
/// Throws StallError when a step is rejected more than max_rejects times.
FlowTrace run_flow(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                   const Control& u0, const FlowConfig& cfg);

/// |u + beta h_u|_{L^2}.
double stationarity_residual(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                             const Control& u, AdjointMode mode = AdjointMode::discrete);

/// Discrete Sobolev seminorm |delta^m u|, delta u[j] = N (u[j+1] - u[j]), L^2-weighted; m in {1, 2}.
double sobolev_seminorm(const Control& u, int order);

struct LojasiewiczFit {
    double gamma = 0.0;
    std::size_t points = 0;
    double grad_low = 0.0;
    double grad_high = 0.0;
};

/// Least-squares slope of log(F - f_inf) against log|G| over the last decade of
/// gradient decay. The window is [10 g_end, 100 g_end] with g_end the final
/// gradient norm, so the bias from taking f_inf as the final energy stays small.
LojasiewiczFit lojasiewicz_estimate(const FlowTrace& trace, double f_inf);

/// Header `t,energy,grad_norm,dt,accepted,cum_length,h1`.
void write_trace_csv(std::ostream& out, const FlowTrace& trace);

/// Header `s,u1..uk`, s is the left end of each subinterval.
void write_control_csv(std::ostream& out, const Control& u);

} // namespace subflow
