#pragma once

#include "subflow/control.hpp"
#include "subflow/flow.hpp"
#include "subflow/gradient.hpp"
#include "subflow/second_order.hpp"
#include "subflow/system.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace subflow {

enum class InitialKind { zero, constant, circle, random };

/// How the starting control is built on the grid.
///   zero              u = 0
///   constant  value   u = value
///   circle    radius  u(s) = 2 pi r (cos 2 pi s, sin 2 pi s), needs k = 2
///   random    scale   i.i.d. normal entries times scale, drawn from `seed`
struct InitialControlSpec {
    InitialKind kind = InitialKind::zero;
    std::vector<double> value;
    double radius = 0.1;
    double scale = 1.0;
};

struct HessianSpec {
    std::size_t count = 6;
    HessianMode mode = HessianMode::discrete;
    bool at_final = false;  ///< probe at the flow limit instead of the initial control
    EigenSettings eigen;
};

struct VerifySpec {
    std::size_t samples = 5;
    double fd_eps = 1e-5;
};

/// Fully validated experiment description.
struct RunConfig {
    nlohmann::json system_spec;
    std::shared_ptr<const ControlSystem> system;
    Vector x0;
    Vector target;
    std::shared_ptr<const EndpointCost> cost;
    std::size_t grid_n = 100;
    std::optional<double> beta;
    std::vector<double> beta_schedule;
    bool warm_start = true;
    std::optional<double> radius;
    FlowConfig flow;
    InitialControlSpec initial;
    HessianSpec hessian;
    VerifySpec verify;
    std::string output_dir = ".";
    std::uint64_t seed = 0;

    /// beta if given, otherwise the largest scheduled beta.
    double effective_beta() const;
    CostParams cost_params() const;
    CostParams cost_params(double beta_override) const;
    Control initial_control() const;
};

/// Parses and validates a JSON config. Throws ParseError for malformed JSON
/// and ValidationError naming the offending field otherwise.
RunConfig parse_config(const std::string& text);

RunConfig load_config_file(const std::string& path);

} // namespace subflow
