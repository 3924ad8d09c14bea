#pragma once

// Shared RK4 machinery for the state, tangent and costate integrators.

#include "subflow/control.hpp"
#include "subflow/system.hpp"
#include "subflow/trajectory.hpp"

#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace subflow::detail {

inline constexpr std::array<double, 4> kRk4Weights{1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};

void require_finite(const Matrix& m, const char* what);

/// Stage states X_s and slopes K_s of one RK4 step.
struct Stages {
    std::array<Vector, 4> states;
    std::array<Vector, 4> slopes;
};

Vector rk4_step(const ControlSystem& sys, const Vector& x, const Vector& u, double h, Stages* stages = nullptr);

/// One RK4 step of the state together with the first-variation tangent.
struct TangentStages {
    Stages base;
    std::array<Vector, 4> tangents;  ///< stage tangents dX_s
};

void rk4_tangent_step(const ControlSystem& sys, Vector& x, Vector& y, const Vector& u, const Vector& v, double h,
                      TangentStages* stages = nullptr);

/// State (and optionally the tangent along v) at s = (j + theta)/N, recomputed by a
/// single RK4 substep of length theta/N from node j. Caches the current bin.
class NodeSampler {
public:
    NodeSampler(const ControlSystem& sys, const Trajectory& traj, const Control& u,
                const Matrix* tangent = nullptr, const Control* direction = nullptr);

    const Vector& state(std::size_t j, double theta);
    const Vector& tangent(std::size_t j, double theta);

private:
    struct Sample {
        Vector x;
        Vector y;
    };
    const Sample& sample(std::size_t j, double theta);

    const ControlSystem& sys_;
    const Trajectory& traj_;
    const Control& u_;
    const Matrix* tangent_;
    const Control* direction_;
    std::size_t bin_ = static_cast<std::size_t>(-1);
    std::array<std::optional<Sample>, 5> cache_;  // theta in quarters
    Sample scratch_;
};

/// Right-hand side d(state)/d(sigma) for sigma = -s, evaluated in bin j at offset theta.
using BackwardRhs = std::function<Matrix(std::size_t j, double theta, const Matrix& state)>;

struct BackwardPath {
    std::vector<Matrix> nodes;  ///< N+1 entries
    std::vector<Matrix> mids;   ///< N entries, only filled when substeps == 2
};

/// Backward RK4 from s = 1 with `substeps` (1 or 2) equal steps per bin.
BackwardPath integrate_backward(std::size_t grid_size, const Matrix& terminal, int substeps, const BackwardRhs& rhs);

} // namespace subflow::detail
