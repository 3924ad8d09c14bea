#include "subflow/gamma.hpp"

#include "subflow/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace subflow {

void BetaSchedule::validate() const {
    if (betas.empty()) {
        throw PreconditionError("beta schedule is empty");
    }
    for (std::size_t m = 0; m < betas.size(); ++m) {
        if (!(betas[m] > 0.0) || !std::isfinite(betas[m])) {
            throw PreconditionError("beta schedule entries must be positive and finite");
        }
        if (m > 0 && !(betas[m] > betas[m - 1])) {
            throw PreconditionError("beta schedule must be strictly increasing");
        }
    }
    flow.validate();
    for (const auto& [row, cfg] : overrides) {
        if (row >= betas.size()) {
            throw PreconditionError("flow override for row " + std::to_string(row) + " is out of range");
        }
        cfg.validate();
    }
}

const FlowConfig& BetaSchedule::config_for(std::size_t row) const {
    const auto it = overrides.find(row);
    return it == overrides.end() ? flow : it->second;
}

BetaSchedule BetaSchedule::geometric(double first, std::size_t count, double ratio) {
    BetaSchedule s;
    double beta = first;
    for (std::size_t m = 0; m < count; ++m) {
        s.betas.push_back(beta);
        beta *= ratio;
    }
    return s;
}

std::string to_string(RowStatus status) {
    switch (status) {
    case RowStatus::converged:
        return "converged";
    case RowStatus::not_converged:
        return "not_converged";
    case RowStatus::failed:
        return "failed";
    case RowStatus::skipped:
        break;
    }
    return "skipped";
}

std::size_t SweepResult::total_flow_steps() const {
    std::size_t n = 0;
    for (const auto& r : rows) {
        n += r.flow_steps;
    }
    return n;
}

namespace {

SweepRow solve_row(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& base, double beta,
                   const Control& start, const FlowConfig& cfg) {
    SweepRow row;
    row.beta = beta;
    CostParams params = base;
    params.beta = beta;
    try {
        const FlowTrace trace = run_flow(sys, cost_fn, params, start, cfg);
        const double norm = l2_norm(trace.final_control);
        row.minimizer = trace.final_control;
        row.half_norm = 0.5 * norm * norm;
        row.endpoint_gap = trace.final_endpoint_cost;
        row.total = row.half_norm + beta * row.endpoint_gap;
        row.residual = trace.last_accepted().grad_norm;
        row.flow_steps = trace.steps.size() - 1;
        row.status = trace.converged ? RowStatus::converged : RowStatus::not_converged;
        if (params.radius && norm > *params.radius) {
            row.message = "minimizer leaves the ball of radius " + std::to_string(*params.radius);
        }
    } catch (const Error& e) {
        row.status = RowStatus::failed;
        row.message = e.what();
    }
    return row;
}

} // namespace

SweepResult beta_sweep(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                       const BetaSchedule& schedule, const Control& u0, std::size_t jobs) {
    schedule.validate();
    SweepResult result;
    const std::size_t count = schedule.betas.size();
    result.rows.resize(count);
    for (std::size_t m = 0; m < count; ++m) {
        result.rows[m].beta = schedule.betas[m];
    }

    if (schedule.warm_start) {
        Control start = u0;
        for (std::size_t m = 0; m < count; ++m) {
            result.rows[m] = solve_row(sys, cost_fn, params, schedule.betas[m], start, schedule.config_for(m));
            if (!result.rows[m].usable()) {
                for (std::size_t rest = m + 1; rest < count; ++rest) {
                    result.rows[rest].message = "previous row failed";
                }
                break;
            }
            start = result.rows[m].minimizer;
        }
    } else {
        const std::size_t workers = std::clamp<std::size_t>(jobs, 1, count);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t m = next++; m < count; m = next++) {
                result.rows[m] = solve_row(sys, cost_fn, params, schedule.betas[m], u0, schedule.config_for(m));
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < workers; ++t) {
            pool.emplace_back(work);
        }
        work();
        for (auto& t : pool) {
            t.join();
        }
    }

    for (auto it = result.rows.rbegin(); it != result.rows.rend(); ++it) {
        if (it->usable()) {
            result.limit_energy_estimate = it->half_norm;
            break;
        }
    }
    return result;
}

GammaTrends check_gamma_trends(const SweepResult& result) {
    std::vector<const SweepRow*> rows;
    for (const auto& r : result.rows) {
        if (r.usable()) {
            rows.push_back(&r);
        }
    }
    if (rows.size() < 2) {
        throw PreconditionError("trend check needs at least two solved rows");
    }
    GammaTrends t;
    t.totals_nondecreasing = true;
    t.gaps_decreasing = true;
    t.minimizers_settling = true;
    for (std::size_t m = 1; m < rows.size(); ++m) {
        const SweepRow& lo = *rows[m - 1];
        const SweepRow& hi = *rows[m];
        const double slack = 1e-12 * (1.0 + std::abs(lo.total));
        t.totals_nondecreasing = t.totals_nondecreasing && hi.total >= lo.total - slack;

        // A ratio of 0.5 per factor 10 in beta, interpolated geometrically for other spacings.
        const double decades = std::log10(hi.beta / lo.beta);
        const double ratio = lo.endpoint_gap > 0.0 ? hi.endpoint_gap / lo.endpoint_gap : (hi.endpoint_gap > 0.0 ? 1.0 : 0.0);
        t.gap_ratios.push_back(decades > 0.0 ? std::pow(ratio, 1.0 / decades) : ratio);
        t.gaps_decreasing = t.gaps_decreasing && hi.endpoint_gap < lo.endpoint_gap && t.gap_ratios.back() <= 0.5;

        t.minimizer_steps.push_back(l2_norm(hi.minimizer - lo.minimizer));
        if (t.minimizer_steps.size() > 1) {
            const double prev = t.minimizer_steps[t.minimizer_steps.size() - 2];
            t.minimizers_settling = t.minimizers_settling && t.minimizer_steps.back() < prev;
        }
    }
    return t;
}

std::vector<bool> radius_check(const SweepResult& result, double rho) {
    if (!(rho > 0.0)) {
        throw PreconditionError("radius must be positive");
    }
    std::vector<bool> out;
    out.reserve(result.rows.size());
    for (const auto& r : result.rows) {
        out.push_back(r.usable() && l2_norm(r.minimizer) <= rho);
    }
    return out;
}

} // namespace subflow
