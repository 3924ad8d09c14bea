#include "subflow/flow.hpp"

#include "subflow/csv.hpp"
#include "subflow/errors.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>

namespace subflow {

FlowScheme parse_scheme(const std::string& name) {
    if (name == "explicit-euler" || name == "explicit_euler") {
        return FlowScheme::explicit_euler;
    }
    if (name == "exponential-euler" || name == "exponential_euler") {
        return FlowScheme::exponential_euler;
    }
    throw PreconditionError("unknown flow scheme '" + name + "'");
}

std::string to_string(FlowScheme scheme) {
    return scheme == FlowScheme::explicit_euler ? "explicit-euler" : "exponential-euler";
}

void FlowConfig::validate() const {
    if (!(dt0 > 0.0) || !std::isfinite(dt0)) {
        throw PreconditionError("dt0 must be positive");
    }
    if (!(eps_stop > 0.0)) {
        throw PreconditionError("eps_stop must be positive");
    }
    if (!(t_max > 0.0)) {
        throw PreconditionError("t_max must be positive");
    }
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
        throw PreconditionError("backtrack_factor must lie in (0, 1)");
    }
}

std::size_t FlowTrace::accepted_count() const {
    std::size_t n = 0;
    for (const auto& r : steps) {
        n += r.accepted ? 1 : 0;
    }
    return n;
}

const FlowRecord& FlowTrace::last_accepted() const {
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        if (it->accepted) {
            return *it;
        }
    }
    throw PreconditionError("trace has no accepted steps");
}

namespace {

// Energy test for a trial step. Differences of F below its roundoff level say
// nothing, so there the sign comes from the trapezoid rule
// F(u') - F(u) ~ <(g + g')/2, u' - u>, which is exact for quadratics and free
// of cancellation. A step unstable in a stiff mode is then still caught while
// its growth is invisible in F itself.
bool decreases(const CostAndGradient& now, const CostAndGradient& next, const Control& delta) {
    const double diff = next.energy - now.energy;
    const double floor = 1e-13 * (1.0 + std::abs(now.energy));
    if (std::abs(diff) > floor) {
        return diff <= 0.0;
    }
    return 0.5 * l2_inner(now.gradient.g_full + next.gradient.g_full, delta) <= 0.0;
}

} // namespace

Control flow_step(const Control& u, const GradientRep& grad, double beta, double dt, FlowScheme scheme) {
    if (!(dt > 0.0)) {
        throw PreconditionError("flow step needs dt > 0");
    }
    if (scheme == FlowScheme::explicit_euler) {
        return u - dt * grad.g_full;
    }
    // Exact for the linear -U part with h frozen over the step.
    const double decay = std::exp(-dt);
    return decay * u - ((1.0 - decay) * beta) * grad.h;
}

Control flow_step(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u,
                  double dt, FlowScheme scheme) {
    return flow_step(u, gradient_discrete(sys, cost_fn, params, u), params.beta, dt, scheme);
}

FlowTrace run_flow(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                   const Control& u0, const FlowConfig& cfg) {
    cfg.validate();
    FlowTrace trace;
    Control u = u0;
    auto eval = evaluate_discrete(sys, cost_fn, params, u);
    double grad_norm = l2_norm(eval.gradient.g_full);
    double t = 0.0;
    double cum_length = 0.0;
    trace.steps.push_back({0.0, eval.energy, grad_norm, 0.0, true, 0.0, sobolev_seminorm(u, 1)});

    double dt = cfg.dt0;
    std::size_t streak = 0;
    bool converged = grad_norm <= cfg.eps_stop;
    while (!converged && t < cfg.t_max && trace.steps.size() < cfg.max_steps) {
        std::size_t rejects = 0;
        while (true) {
            const Control trial = flow_step(u, eval.gradient, params.beta, dt, cfg.scheme);
            std::optional<CostAndGradient> next;
            try {
                next = evaluate_discrete(sys, cost_fn, params, trial);
            } catch (const NonFiniteState&) {
                next.reset();
            }
            if (next && decreases(eval, *next, trial - u)) {
                t += dt;
                cum_length += l2_norm(trial - u);
                u = trial;
                eval = std::move(*next);
                grad_norm = l2_norm(eval.gradient.g_full);
                trace.steps.push_back({t, eval.energy, grad_norm, dt, true, cum_length, sobolev_seminorm(u, 1)});
                break;
            }
            trace.steps.push_back({t, next ? next->energy : std::numeric_limits<double>::infinity(), grad_norm, dt,
                                   false, cum_length, trace.steps.back().h1});
            streak = 0;
            dt *= cfg.backtrack_factor;
            if (++rejects > cfg.max_rejects) {
                throw StallError("flow step rejected " + std::to_string(rejects) + " times at t = " +
                                 std::to_string(t) + " (gradient/cost inconsistency?)");
            }
        }
        if (++streak >= 5) {
            dt = std::min(2.0 * dt, cfg.dt0);
            streak = 0;
        }
        converged = grad_norm <= cfg.eps_stop;
    }
    trace.final_control = std::move(u);
    trace.converged = converged;
    trace.final_endpoint_cost = eval.endpoint_cost;
    return trace;
}

double stationarity_residual(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                             const Control& u, AdjointMode mode) {
    const GradientRep g = mode == AdjointMode::discrete ? gradient_discrete(sys, cost_fn, params, u)
                                                        : gradient_continuous(sys, cost_fn, params, u);
    return l2_norm(g.g_full);
}

double sobolev_seminorm(const Control& u, int order) {
    if (order != 1 && order != 2) {
        throw PreconditionError("Sobolev order must be 1 or 2");
    }
    const std::size_t grid = u.grid_size();
    if (grid < static_cast<std::size_t>(order) + 1) {
        throw GridTooCoarse("grid of " + std::to_string(grid) + " cells too coarse for order " +
                            std::to_string(order));
    }
    const double n = static_cast<double>(grid);
    Matrix diff = u.values();
    for (int m = 0; m < order; ++m) {
        const Eigen::Index rows = diff.rows() - 1;
        diff = (n * (diff.bottomRows(rows) - diff.topRows(rows))).eval();
    }
    return std::sqrt(diff.squaredNorm() / n);
}

LojasiewiczFit lojasiewicz_estimate(const FlowTrace& trace, double f_inf) {
    if (!trace.converged) {
        throw PreconditionError("Lojasiewicz fit needs a converged trace");
    }
    const double g_end = trace.last_accepted().grad_norm;
    const double low = 10.0 * g_end;
    const double high = 100.0 * g_end;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& r : trace.steps) {
        const double gap = r.energy - f_inf;
        if (!r.accepted || !(gap > 0.0) || !(r.grad_norm > 0.0)) {
            continue;
        }
        if (r.grad_norm >= low && r.grad_norm <= high) {
            xs.push_back(std::log(r.grad_norm));
            ys.push_back(std::log(gap));
        }
    }
    if (xs.size() < 10) {
        throw InsufficientDecay("only " + std::to_string(xs.size()) + " usable points in the last decade of decay");
    }
    const double count = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= count;
    my /= count;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (!(sxx > 0.0)) {
        throw InsufficientDecay("gradient norms do not vary across the fit window");
    }
    return {sxy / sxx, xs.size(), low, high};
}

void write_trace_csv(std::ostream& out, const FlowTrace& trace) {
    out << "t,energy,grad_norm,dt,accepted,cum_length,h1\n";
    for (const auto& r : trace.steps) {
        out << format_double(r.t) << ',' << format_double(r.energy) << ',' << format_double(r.grad_norm) << ','
            << format_double(r.step_size) << ',' << (r.accepted ? 1 : 0) << ',' << format_double(r.cum_length) << ','
            << format_double(r.h1) << '\n';
    }
}

void write_control_csv(std::ostream& out, const Control& u) {
    out << "s";
    for (std::size_t i = 0; i < u.control_dim(); ++i) {
        out << ",u" << (i + 1);
    }
    out << '\n';
    const double n = static_cast<double>(u.grid_size());
    for (std::size_t j = 0; j < u.grid_size(); ++j) {
        out << format_double(static_cast<double>(j) / n);
        for (std::size_t i = 0; i < u.control_dim(); ++i) {
            out << ',' << format_double(u.values()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
        }
        out << '\n';
    }
}

} // namespace subflow
