#pragma once

#include "subflow/control.hpp"
#include "subflow/flow.hpp"
#include "subflow/gradient.hpp"
#include "subflow/system.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace subflow {

/// Increasing ladder of penalty weights.
struct BetaSchedule {
    std::vector<double> betas;
    bool warm_start = true;
    FlowConfig flow;
    /// Replaces `flow` for the row with the given index.
    std::map<std::size_t, FlowConfig> overrides;

    void validate() const;
    const FlowConfig& config_for(std::size_t row) const;

    /// betas = first, 10 first, 100 first, ... (count entries).
    static BetaSchedule geometric(double first, std::size_t count, double ratio = 10.0);
};

enum class RowStatus { converged, not_converged, failed, skipped };

std::string to_string(RowStatus status);

struct SweepRow {
    double beta = 0.0;
    Control minimizer;
    double half_norm = 0.0;
    double endpoint_gap = 0.0;
    double total = 0.0;
    double residual = 0.0;
    std::size_t flow_steps = 0;
    RowStatus status = RowStatus::skipped;
    std::string message;

    bool usable() const { return status == RowStatus::converged || status == RowStatus::not_converged; }
};

struct SweepResult {
    std::vector<SweepRow> rows;
    /// Half-norm of the minimizer at the largest beta that produced one.
    double limit_energy_estimate = 0.0;

    std::size_t total_flow_steps() const;
};

/// Runs the flow once per beta. Warm starts chain the rows, so a failed row
/// stops the ladder and later rows are marked skipped. Cold starts are
/// independent and run on up to `jobs` threads.
SweepResult beta_sweep(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                       const BetaSchedule& schedule, const Control& u0, std::size_t jobs = 1);

struct GammaTrends {
    bool totals_nondecreasing = false;
    bool gaps_decreasing = false;
    bool minimizers_settling = false;
    std::vector<double> gap_ratios;         ///< gap[m+1] / gap[m], rescaled to one decade of beta
    std::vector<double> minimizer_steps;    ///< |u_{m+1} - u_m|
};

/// Report only. Throws PreconditionError for fewer than two usable rows.
GammaTrends check_gamma_trends(const SweepResult& result);

std::vector<bool> radius_check(const SweepResult& result, double rho);

} // namespace subflow
