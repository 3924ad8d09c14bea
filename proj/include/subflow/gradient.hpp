#pragma once

#include "subflow/control.hpp"
#include "subflow/system.hpp"
#include "subflow/trajectory.hpp"

#include <optional>
#include <vector>

namespace subflow {

/// Penalty weight, initial state and optional control-ball radius.
struct CostParams {
    double beta = 1.0;
    Vector x0;
    std::optional<double> radius;

    /// Throws PreconditionError on negative beta or nonpositive radius.
    void validate() const;
};

enum class AdjointMode { continuous, discrete };

/// h represents the differential of u -> a(x_u(1)); g_full = u + beta h.
struct GradientRep {
    Control h;
    Control g_full;
    AdjointMode mode = AdjointMode::discrete;
};

/// Row j (one Control-shaped array per state component) represents the
/// j-th component of the differential of the end-point map.
struct EndpointRows {
    std::vector<Control> rows;
};

Vector endpoint(const ControlSystem& sys, const CostParams& params, const Control& u);

/// |u|^2/2 + beta a(x_u(1)).
double cost(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u);

/// Costate route: h = F^T(x_u) lambda_u^T averaged over each subinterval by Simpson's rule.
GradientRep gradient_continuous(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                                const Control& u);

/// Exact reverse-mode gradient of the discrete (RK4) cost, scaled by N to the L^2 convention.
GradientRep gradient_discrete(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                              const Control& u);

/// Energy and discrete gradient from one forward and one reverse sweep.
struct CostAndGradient {
    double energy = 0.0;
    double endpoint_cost = 0.0;
    Trajectory trajectory;
    GradientRep gradient;
};

CostAndGradient evaluate_discrete(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                                  const Control& u);

EndpointRows endpoint_rows(const ControlSystem& sys, const CostParams& params, const Control& u);

} // namespace subflow
