#include "subflow/commands.hpp"

#include "subflow/csv.hpp"
#include "subflow/errors.hpp"
#include "subflow/flow.hpp"
#include "subflow/gamma.hpp"
#include "subflow/oracle.hpp"
#include "subflow/second_order.hpp"
#include "subflow/trajectory.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <mutex>
#include <random>

namespace subflow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void init_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("subflow");
        spdlog::set_default_logger(logger);
        const char* env = std::getenv("SUBFLOW_LOG");
        spdlog::set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::warn);
    });
}

class Output {
public:
    explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::function<void(std::ostream&)>& body) const {
        const fs::path path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write '" + path.string() + "'");
        }
        body(out);
        if (!out) {
            throw std::runtime_error("write to '" + path.string() + "' failed");
        }
        spdlog::info("wrote {}", path.string());
    }

    void write_json(const std::string& name, const json& doc) const {
        write(name, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
    }

private:
    fs::path dir_;
};

std::vector<Control> random_controls(const RunConfig& cfg, std::size_t count, std::uint64_t salt) {
    std::mt19937_64 rng(cfg.seed ^ salt);
    std::normal_distribution<double> normal;
    std::vector<Control> out;
    for (std::size_t s = 0; s < count; ++s) {
        Control u(cfg.grid_n, cfg.system->control_dim());
        for (Eigen::Index j = 0; j < u.values().rows(); ++j) {
            for (Eigen::Index i = 0; i < u.values().cols(); ++i) {
                u.values()(j, i) = normal(rng);
            }
        }
        out.push_back(std::move(u));
    }
    return out;
}

json trace_summary(const RunConfig& cfg, const FlowTrace& trace, double beta) {
    const auto& last = trace.last_accepted();
    const double norm = l2_norm(trace.final_control);
    return {{"beta", beta},
            {"scheme", to_string(cfg.flow.scheme)},
            {"converged", trace.converged},
            {"final_energy", last.energy},
            {"half_norm", 0.5 * norm * norm},
            {"endpoint_gap", trace.final_endpoint_cost},
            {"residual", last.grad_norm},
            {"t_final", last.t},
            {"flow_length", last.cum_length},
            {"records", trace.steps.size()},
            {"accepted_steps", trace.accepted_count()}};
}

int cmd_simulate(const RunConfig& cfg, const Output& out) {
    const Trajectory traj = integrate_state(*cfg.system, cfg.x0, cfg.initial_control());
    out.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
    return exit_ok;
}

int cmd_flow(const RunConfig& cfg, const Output& out) {
    const double beta = cfg.effective_beta();
    const FlowTrace trace = run_flow(*cfg.system, *cfg.cost, cfg.cost_params(beta), cfg.initial_control(), cfg.flow);
    out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
    out.write("control.csv", [&](std::ostream& os) { write_control_csv(os, trace.final_control); });
    out.write_json("summary.json", trace_summary(cfg, trace, beta));
    if (!trace.converged) {
        spdlog::warn("flow stopped at t = {} without reaching eps_stop", trace.last_accepted().t);
    }
    if (cfg.radius && l2_norm(trace.final_control) > *cfg.radius) {
        spdlog::warn("final control leaves the ball of radius {}", *cfg.radius);
    }
    return exit_ok;
}

int cmd_sweep(const RunConfig& cfg, const Output& out, std::size_t jobs) {
    if (cfg.beta_schedule.empty()) {
        throw ValidationError("beta_schedule", "sweep needs a beta schedule");
    }
    BetaSchedule schedule;
    schedule.betas = cfg.beta_schedule;
    schedule.warm_start = cfg.warm_start;
    schedule.flow = cfg.flow;
    const SweepResult result =
        beta_sweep(*cfg.system, *cfg.cost, cfg.cost_params(cfg.beta_schedule.front()), schedule, cfg.initial_control(), jobs);

    out.write("sweep.csv", [&](std::ostream& os) {
        os << "beta,half_norm,endpoint_gap,total,residual,steps\n";
        for (const auto& r : result.rows) {
            if (!r.usable()) {
                continue;
            }
            os << format_double(r.beta) << ',' << format_double(r.half_norm) << ',' << format_double(r.endpoint_gap)
               << ',' << format_double(r.total) << ',' << format_double(r.residual) << ',' << r.flow_steps << '\n';
        }
    });

    json report;
    report["limit_energy_estimate"] = result.limit_energy_estimate;
    report["rows"] = json::array();
    bool all_usable = true;
    for (const auto& r : result.rows) {
        report["rows"].push_back({{"beta", r.beta}, {"status", to_string(r.status)}, {"message", r.message}});
        all_usable = all_usable && r.usable();
    }
    int code = all_usable ? exit_ok : exit_domain;
    try {
        const GammaTrends trends = check_gamma_trends(result);
        report["totals_nondecreasing"] = trends.totals_nondecreasing;
        report["gaps_decreasing"] = trends.gaps_decreasing;
        report["minimizers_settling"] = trends.minimizers_settling;
        report["gap_ratios_per_decade"] = trends.gap_ratios;
        report["minimizer_steps"] = trends.minimizer_steps;
    } catch (const PreconditionError& e) {
        report["error"] = e.what();
        code = exit_domain;
    }
    if (cfg.radius) {
        report["within_radius"] = radius_check(result, *cfg.radius);
    }
    out.write_json("trends.json", report);
    return code;
}

int cmd_hessian(const RunConfig& cfg, const Output& out) {
    const double beta = cfg.effective_beta();
    const CostParams params = cfg.cost_params(beta);
    Control base = cfg.initial_control();
    if (cfg.hessian.at_final) {
        base = run_flow(*cfg.system, *cfg.cost, params, base, cfg.flow).final_control;
    }
    const HessianOperator op(*cfg.system, *cfg.cost, params, base, cfg.hessian.mode);
    EigenSettings settings = cfg.hessian.eigen;
    settings.seed = cfg.seed;
    const SpectrumResult spec = spectrum_probe(op, std::min(cfg.hessian.count, op.dimension()), settings);
    const auto probes = random_controls(cfg, 2, 0x4e55);
    json doc = {{"beta", beta},
                {"mode", cfg.hessian.mode == HessianMode::discrete ? "discrete" : "structural"},
                {"at", cfg.hessian.at_final ? "final" : "initial"},
                {"eigenvalues", spec.eigenvalues},
                {"shifted", spec.shifted},
                {"near_zero", count_near_zero(spec.eigenvalues)},
                {"iterations", spec.iterations},
                {"max_residual", spec.max_residual},
                {"symmetric_residual", symmetry_residual(op, probes[0], probes[1])}};
    out.write_json("eigen.json", doc);
    return exit_ok;
}

struct Check {
    std::string name;
    double value;
    double tolerance;
};

int cmd_verify(const RunConfig& cfg, const Output& out) {
    const ControlSystem& sys = *cfg.system;
    const EndpointCost& cost_fn = *cfg.cost;
    const CostParams params = cfg.cost_params();
    const auto samples = random_controls(cfg, cfg.verify.samples, 0x7e51);
    std::vector<Check> checks;

    double grad_err = 0.0;
    double identity = 0.0;
    double adjoint_gap = 0.0;
    double symmetry = 0.0;
    double hess_err = 0.0;
    const auto directions = random_controls(cfg, 2 * samples.size(), 0xd1e5);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Control& u = samples[s];
        const GradientRep gd = gradient_discrete(sys, cost_fn, params, u);
        const Control fd = fd_gradient(sys, cost_fn, params, u, cfg.verify.fd_eps);
        grad_err = std::max(grad_err, max_rel_diff(gd.g_full.values(), fd.values()));

        const Trajectory traj = integrate_state(sys, cfg.x0, u);
        identity = std::max(identity, integrate_fundamental(sys, traj, u).max_identity_defect());

        const GradientRep gc = gradient_continuous(sys, cost_fn, params, u);
        adjoint_gap = std::max(adjoint_gap, l2_norm(gc.g_full - gd.g_full) / std::max(l2_norm(gd.g_full), 1e-300));

        const HessianOperator op(sys, cost_fn, params, u);
        const Control& v = directions[2 * s];
        symmetry = std::max(symmetry, symmetry_residual(op, v, directions[2 * s + 1]));
        const double e = cfg.verify.fd_eps;
        const Control fd_h = (1.0 / (2.0 * e)) * (gradient_discrete(sys, cost_fn, params, u + e * v).g_full -
                                                  gradient_discrete(sys, cost_fn, params, u - e * v).g_full);
        hess_err = std::max(hess_err, l2_norm(op.apply(v) - fd_h) / std::max(l2_norm(fd_h), 1e-300));
    }
    checks.push_back({"gradient_vs_finite_differences", grad_err, 1e-6});
    checks.push_back({"fundamental_matrix_identity", identity, 1e-8});
    checks.push_back({"continuous_vs_discrete_adjoint", adjoint_gap, 1e-4});
    checks.push_back({"hessian_symmetry", symmetry, 1e-8});
    checks.push_back({"hessian_vs_gradient_differences", hess_err, 1e-5});

    const std::string builtin = cfg.system_spec.value("builtin", std::string());
    if (builtin == "linear") {
        Matrix b = sys.fields(cfg.x0);
        const LinearSolution exact = linear_closed_form(b, cfg.x0, cfg.target, params.beta);
        FlowConfig flow = cfg.flow;
        flow.eps_stop = std::min(flow.eps_stop, 1e-8);
        const FlowTrace trace = run_flow(sys, cost_fn, params, Control::zeros(cfg.grid_n, sys.control_dim()), flow);
        checks.push_back({"closed_form_control", l2_norm(trace.final_control - exact.on_grid(cfg.grid_n)), 1e-6});
        checks.push_back({"closed_form_energy", std::abs(trace.last_accepted().energy - exact.energy), 1e-8});
    }
    if (builtin == "heisenberg" && cfg.x0.isZero(0.0) && cfg.target.head(2).isZero(0.0) && cfg.target(2) != 0.0) {
        const double reference = heisenberg_reference(cfg.target(2));
        const ArcSearchResult arc = heisenberg_arc_search(cfg.target(2));
        checks.push_back({"heisenberg_reference_vs_arc_search", std::abs(arc.energy - reference) / reference, 1e-6});
    }

    json doc;
    doc["checks"] = json::array();
    bool all = true;
    for (const auto& c : checks) {
        const bool pass = c.value <= c.tolerance;
        all = all && pass;
        doc["checks"].push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", pass}});
        if (!pass) {
            spdlog::warn("check {} failed: {} > {}", c.name, c.value, c.tolerance);
        }
    }
    doc["all_passed"] = all;
    out.write_json("verify.json", doc);
    return all ? exit_ok : exit_domain;
}

} // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"simulate", "flow", "sweep", "hessian", "verify"};
    return names;
}

int run_command(const std::string& cmd, const RunConfig& cfg, const CommandOptions& opts) {
    init_logging();
    try {
        const Output out(opts.out_dir.empty() ? cfg.output_dir : opts.out_dir);
        if (cmd == "simulate") {
            return cmd_simulate(cfg, out);
        }
        if (cmd == "flow") {
            return cmd_flow(cfg, out);
        }
        if (cmd == "sweep") {
            return cmd_sweep(cfg, out, opts.jobs);
        }
        if (cmd == "hessian") {
            return cmd_hessian(cfg, out);
        }
        if (cmd == "verify") {
            return cmd_verify(cfg, out);
        }
        spdlog::error("unknown subcommand '{}'", cmd);
        return exit_config;
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return exit_config;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", cmd, e.what());
        return exit_domain;
    }
}

int run_command_file(const std::string& cmd, const std::string& config_path, const CommandOptions& opts) {
    init_logging();
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), cmd) == names.end()) {
        spdlog::error("unknown subcommand '{}'", cmd);
        return exit_config;
    }
    RunConfig cfg;
    try {
        cfg = load_config_file(config_path);
    } catch (const ParseError& e) {
        spdlog::error("{}: {}", config_path, e.what());
        return exit_config;
    } catch (const ValidationError& e) {
        spdlog::error("{}: {}", config_path, e.what());
        return exit_config;
    }
    return run_command(cmd, cfg, opts);
}

} // namespace subflow
