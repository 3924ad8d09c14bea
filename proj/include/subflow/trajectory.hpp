#pragma once

#include "subflow/control.hpp"
#include "subflow/system.hpp"

#include <iosfwd>
#include <vector>

namespace subflow {

/// States x_u(j/N) at the grid nodes; row j is node j.
struct Trajectory {
    Matrix nodes;

    std::size_t grid_size() const noexcept { return static_cast<std::size_t>(nodes.rows()) - 1; }
    Vector at(std::size_t j) const { return nodes.row(static_cast<Eigen::Index>(j)).transpose(); }
    Vector final_state() const { return at(grid_size()); }
};

/// Fundamental matrix M_u and its inverse path at the nodes.
struct FundamentalMatrices {
    std::vector<Matrix> forward;  ///< M[0] = Id
    std::vector<Matrix> inverse;  ///< N[0] = Id, N[j] ~ M[j]^{-1}

    /// max_j |M[j] N[j] - Id|_F
    double max_identity_defect() const;
};

/// Costate covectors lambda_u(j/N); row j is node j, row N the terminal value.
struct AdjointPath {
    Matrix lambda;

    Covector at(std::size_t j) const { return lambda.row(static_cast<Eigen::Index>(j)); }
};

/// Classic RK4 with u frozen on each subinterval.
Trajectory integrate_state(const ControlSystem& sys, const Vector& x0, const Control& u);

/// M' = A_u M and N' = -N A_u with A_u evaluated at the state integrator's stage states.
FundamentalMatrices integrate_fundamental(const ControlSystem& sys, const Trajectory& traj, const Control& u);

/// Backward RK4 for lambda' = -lambda A_u from lambda(1) = terminal.
AdjointPath integrate_adjoint(const ControlSystem& sys, const Trajectory& traj, const Control& u,
                              const Covector& terminal);

/// y' = F(x_u) v + A_u y, y(0) = 0. Returns (N+1) x n node values.
Matrix first_variation(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Control& v);

/// (|x0| + sqrt(k) C |u|) exp(sqrt(k) C |u|) with C the stored growth constant.
double c0_bound(const ControlSystem& sys, const Vector& x0, const Control& u);

/// Header `s,x1..xn`, one row per node, 17 significant digits.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

} // namespace subflow
