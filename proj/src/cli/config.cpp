#include "subflow/config.hpp"

#include "subflow/errors.hpp"
#include "subflow/oracle.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace subflow {

namespace {

using nlohmann::json;

double number(const json& node, const std::string& field) {
    if (!node.is_number()) {
        throw ValidationError(field, "expected a number");
    }
    const double v = node.get<double>();
    if (!std::isfinite(v)) {
        throw ValidationError(field, "must be finite");
    }
    return v;
}

double positive(const json& node, const std::string& field) {
    const double v = number(node, field);
    if (!(v > 0.0)) {
        throw ValidationError(field, "must be positive");
    }
    return v;
}

std::size_t count(const json& node, const std::string& field, std::size_t min) {
    if (!node.is_number_integer() || node.get<long long>() < static_cast<long long>(min)) {
        throw ValidationError(field, "expected an integer >= " + std::to_string(min));
    }
    return node.get<std::size_t>();
}

Vector vector_of(const json& node, const std::string& field, std::size_t dim) {
    if (!node.is_array() || node.size() != dim) {
        throw ValidationError(field, "expected an array of " + std::to_string(dim) + " numbers");
    }
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < dim; ++a) {
        v(static_cast<Eigen::Index>(a)) = number(node[a], field);
    }
    return v;
}

void only_keys(const json& node, const std::string& prefix, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : node.items()) {
        if (allowed.count(key) == 0) {
            throw ValidationError(prefix + key, "unknown key");
        }
    }
}

FlowConfig parse_flow(const json& node) {
    if (!node.is_object()) {
        throw ValidationError("flow", "expected an object");
    }
    only_keys(node, "flow.", {"dt0", "scheme", "eps_stop", "t_max", "backtrack_factor", "max_rejects", "max_steps"});
    FlowConfig cfg;
    if (node.contains("dt0")) {
        cfg.dt0 = positive(node["dt0"], "flow.dt0");
    }
    if (node.contains("scheme")) {
        if (!node["scheme"].is_string()) {
            throw ValidationError("flow.scheme", "expected a string");
        }
        try {
            cfg.scheme = parse_scheme(node["scheme"].get<std::string>());
        } catch (const PreconditionError& e) {
            throw ValidationError("flow.scheme", e.what());
        }
    }
    if (node.contains("eps_stop")) {
        cfg.eps_stop = positive(node["eps_stop"], "flow.eps_stop");
    }
    if (node.contains("t_max")) {
        cfg.t_max = positive(node["t_max"], "flow.t_max");
    }
    if (node.contains("backtrack_factor")) {
        cfg.backtrack_factor = number(node["backtrack_factor"], "flow.backtrack_factor");
        if (!(cfg.backtrack_factor > 0.0 && cfg.backtrack_factor < 1.0)) {
            throw ValidationError("flow.backtrack_factor", "must lie in (0, 1)");
        }
    }
    if (node.contains("max_rejects")) {
        cfg.max_rejects = count(node["max_rejects"], "flow.max_rejects", 1);
    }
    if (node.contains("max_steps")) {
        cfg.max_steps = count(node["max_steps"], "flow.max_steps", 1);
    }
    return cfg;
}

InitialControlSpec parse_initial(const json& node, std::size_t control_dim) {
    InitialControlSpec spec;
    if (node.is_string()) {
        return parse_initial(json{{"type", node}}, control_dim);
    }
    if (!node.is_object() || !node.contains("type") || !node["type"].is_string()) {
        throw ValidationError("initial_control", "expected {\"type\": ...}");
    }
    only_keys(node, "initial_control.", {"type", "value", "radius", "scale"});
    const auto type = node["type"].get<std::string>();
    if (type == "zero") {
        spec.kind = InitialKind::zero;
    } else if (type == "constant") {
        spec.kind = InitialKind::constant;
        if (!node.contains("value")) {
            throw ValidationError("initial_control.value", "constant control needs a value");
        }
        const Vector v = vector_of(node["value"], "initial_control.value", control_dim);
        spec.value.assign(v.data(), v.data() + v.size());
    } else if (type == "circle") {
        spec.kind = InitialKind::circle;
        if (control_dim != 2) {
            throw ValidationError("initial_control.type", "circle control needs two control components");
        }
        if (node.contains("radius")) {
            spec.radius = positive(node["radius"], "initial_control.radius");
        }
    } else if (type == "random") {
        spec.kind = InitialKind::random;
        if (node.contains("scale")) {
            spec.scale = positive(node["scale"], "initial_control.scale");
        }
    } else {
        throw ValidationError("initial_control.type", "unknown kind '" + type + "'");
    }
    return spec;
}

HessianSpec parse_hessian(const json& node) {
    if (!node.is_object()) {
        throw ValidationError("hessian", "expected an object");
    }
    only_keys(node, "hessian.", {"count", "mode", "at", "max_iterations", "tolerance"});
    HessianSpec spec;
    if (node.contains("count")) {
        spec.count = count(node["count"], "hessian.count", 1);
    }
    if (node.contains("mode")) {
        const auto mode = node["mode"].is_string() ? node["mode"].get<std::string>() : std::string();
        if (mode == "discrete") {
            spec.mode = HessianMode::discrete;
        } else if (mode == "structural") {
            spec.mode = HessianMode::structural;
        } else {
            throw ValidationError("hessian.mode", "expected \"discrete\" or \"structural\"");
        }
    }
    if (node.contains("at")) {
        const auto at = node["at"].is_string() ? node["at"].get<std::string>() : std::string();
        if (at != "initial" && at != "final") {
            throw ValidationError("hessian.at", "expected \"initial\" or \"final\"");
        }
        spec.at_final = at == "final";
    }
    if (node.contains("max_iterations")) {
        spec.eigen.max_iterations = count(node["max_iterations"], "hessian.max_iterations", 1);
    }
    if (node.contains("tolerance")) {
        spec.eigen.tolerance = positive(node["tolerance"], "hessian.tolerance");
    }
    return spec;
}

VerifySpec parse_verify(const json& node) {
    if (!node.is_object()) {
        throw ValidationError("verify", "expected an object");
    }
    only_keys(node, "verify.", {"samples", "fd_eps"});
    VerifySpec spec;
    if (node.contains("samples")) {
        spec.samples = count(node["samples"], "verify.samples", 1);
    }
    if (node.contains("fd_eps")) {
        spec.fd_eps = positive(node["fd_eps"], "verify.fd_eps");
    }
    return spec;
}

} // namespace

double RunConfig::effective_beta() const {
    if (beta) {
        return *beta;
    }
    if (beta_schedule.empty()) {
        throw ValidationError("beta", "no beta given");
    }
    return beta_schedule.back();
}

CostParams RunConfig::cost_params() const {
    return cost_params(effective_beta());
}

CostParams RunConfig::cost_params(double beta_override) const {
    CostParams p;
    p.beta = beta_override;
    p.x0 = x0;
    p.radius = radius;
    return p;
}

Control RunConfig::initial_control() const {
    const std::size_t k = system->control_dim();
    switch (initial.kind) {
    case InitialKind::zero:
        return Control::zeros(grid_n, k);
    case InitialKind::constant:
        return Control::constant(grid_n, Eigen::Map<const Vector>(initial.value.data(),
                                                                  static_cast<Eigen::Index>(initial.value.size())));
    case InitialKind::circle:
        return arc_control(grid_n, 2.0 * std::numbers::pi * initial.radius, 2.0 * std::numbers::pi);
    case InitialKind::random: {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal;
        Control u(grid_n, k);
        for (Eigen::Index j = 0; j < u.values().rows(); ++j) {
            for (Eigen::Index i = 0; i < u.values().cols(); ++i) {
                u.values()(j, i) = initial.scale * normal(rng);
            }
        }
        return u;
    }
    }
    return Control::zeros(grid_n, k);
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("config must be a JSON object");
    }
    only_keys(doc, "", {"system", "x0", "cost", "grid_n", "beta", "beta_schedule", "warm_start", "radius", "flow",
                        "initial_control", "hessian", "verify", "output_dir", "seed"});

    RunConfig cfg;
    if (!doc.contains("system")) {
        throw ValidationError("system", "missing");
    }
    cfg.system_spec = doc["system"];
    try {
        cfg.system = std::make_shared<const ControlSystem>(load_system(cfg.system_spec));
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError("system", e.what());
    }
    const std::size_t n = cfg.system->state_dim();

    if (!doc.contains("x0")) {
        throw ValidationError("x0", "missing");
    }
    cfg.x0 = vector_of(doc["x0"], "x0", n);

    if (!doc.contains("cost") || !doc["cost"].is_object()) {
        throw ValidationError("cost", "expected {\"type\": \"quadratic\", \"target\": [...]}");
    }
    const auto& cost = doc["cost"];
    only_keys(cost, "cost.", {"type", "target"});
    if (!cost.contains("type") || cost["type"] != "quadratic") {
        throw ValidationError("cost.type", "only \"quadratic\" is supported");
    }
    if (!cost.contains("target")) {
        throw ValidationError("cost.target", "missing");
    }
    cfg.target = vector_of(cost["target"], "cost.target", n);
    cfg.cost = std::make_shared<const EndpointCost>(make_quadratic_cost(cfg.target));

    if (doc.contains("grid_n")) {
        cfg.grid_n = count(doc["grid_n"], "grid_n", 2);
    }
    if (doc.contains("beta")) {
        cfg.beta = positive(doc["beta"], "beta");
    }
    if (doc.contains("beta_schedule")) {
        const auto& sched = doc["beta_schedule"];
        if (!sched.is_array() || sched.empty()) {
            throw ValidationError("beta_schedule", "expected a nonempty array");
        }
        for (const auto& b : sched) {
            const double v = positive(b, "beta_schedule");
            if (!cfg.beta_schedule.empty() && !(v > cfg.beta_schedule.back())) {
                throw ValidationError("beta_schedule", "must be strictly increasing");
            }
            cfg.beta_schedule.push_back(v);
        }
    }
    if (!cfg.beta && cfg.beta_schedule.empty()) {
        throw ValidationError("beta", "give beta or beta_schedule");
    }
    if (doc.contains("warm_start")) {
        if (!doc["warm_start"].is_boolean()) {
            throw ValidationError("warm_start", "expected true or false");
        }
        cfg.warm_start = doc["warm_start"].get<bool>();
    }
    if (doc.contains("radius")) {
        cfg.radius = positive(doc["radius"], "radius");
    }
    if (doc.contains("flow")) {
        cfg.flow = parse_flow(doc["flow"]);
    }
    if (doc.contains("initial_control")) {
        cfg.initial = parse_initial(doc["initial_control"], cfg.system->control_dim());
    }
    if (doc.contains("hessian")) {
        cfg.hessian = parse_hessian(doc["hessian"]);
    }
    if (doc.contains("verify")) {
        cfg.verify = parse_verify(doc["verify"]);
    }
    if (doc.contains("output_dir")) {
        if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty()) {
            throw ValidationError("output_dir", "expected a nonempty string");
        }
        cfg.output_dir = doc["output_dir"].get<std::string>();
    }
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) {
            throw ValidationError("seed", "expected a nonnegative integer");
        }
        cfg.seed = doc["seed"].get<std::uint64_t>();
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("config", "cannot read '" + path + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

} // namespace subflow
