#pragma once

#include "subflow/control.hpp"
#include "subflow/gradient.hpp"
#include "subflow/system.hpp"

#include <cstddef>

namespace subflow {

/// Central differences of the cost in every grid value, times N so the
/// result is an L^2 gradient comparable with GradientRep::g_full.
Control fd_gradient(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u,
                    double eps = 1e-5);

struct LinearSolution {
    Vector control;  ///< constant value of the optimal control
    double energy = 0.0;

    Control on_grid(std::size_t grid_size) const { return Control::constant(grid_size, control); }
};

/// Minimizer of 1/2|u|^2 + beta/2 |x0 + B u - x1|^2 over constant controls,
/// which is the global minimizer for a constant-field system.
LinearSolution linear_closed_form(const Matrix& B, const Vector& x0, const Vector& x1, double beta);

/// Minimal energy 1/2 |u|^2 to reach (0, 0, z1) from the origin in the Heisenberg group.
double heisenberg_reference(double z1);

struct ArcSearchResult {
    double energy = 0.0;
    double omega = 0.0;
    double speed = 0.0;
    std::size_t closing_arcs = 0;
};

/// Scans the circular arcs u(s) = L (cos w s, sin w s) with L fixed by the
/// height they must reach, keeps the ones whose planar endpoint returns to
/// the origin and reports the cheapest. Independent check of heisenberg_reference.
ArcSearchResult heisenberg_arc_search(double z1, double omega_max = 40.0, std::size_t samples = 200000);

/// The arc control u(s) = L (cos w s, sin w s) sampled at cell midpoints.
Control arc_control(std::size_t grid_size, double speed, double omega);

} // namespace subflow
