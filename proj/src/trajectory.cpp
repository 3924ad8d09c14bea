#include "subflow/trajectory.hpp"

#include "integrators.hpp"
#include "subflow/csv.hpp"
#include "subflow/errors.hpp"

#include <cmath>
#include <ostream>

namespace subflow {

namespace {

void check_dims(const ControlSystem& sys, const Control& u) {
    if (u.control_dim() != sys.control_dim()) {
        throw PreconditionError("control has " + std::to_string(u.control_dim()) + " components, system expects " +
                                std::to_string(sys.control_dim()));
    }
    if (u.grid_size() == 0) {
        throw PreconditionError("control grid is empty");
    }
}

void check_trajectory(const Trajectory& traj, const Control& u) {
    if (traj.grid_size() != u.grid_size()) {
        throw PreconditionError("trajectory and control grids differ");
    }
}

} // namespace

double FundamentalMatrices::max_identity_defect() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < forward.size(); ++j) {
        const Matrix prod = forward[j] * inverse[j];
        worst = std::max(worst, (prod - Matrix::Identity(prod.rows(), prod.cols())).norm());
    }
    return worst;
}

Trajectory integrate_state(const ControlSystem& sys, const Vector& x0, const Control& u) {
    check_dims(sys, u);
    if (static_cast<std::size_t>(x0.size()) != sys.state_dim()) {
        throw PreconditionError("initial state has wrong dimension");
    }
    const std::size_t grid = u.grid_size();
    const double h = u.step();
    Trajectory traj;
    traj.nodes.resize(static_cast<Eigen::Index>(grid + 1), x0.size());
    traj.nodes.row(0) = x0.transpose();
    Vector x = x0;
    for (std::size_t j = 0; j < grid; ++j) {
        x = detail::rk4_step(sys, x, u.at(j), h);
        detail::require_finite(x, "state");
        traj.nodes.row(static_cast<Eigen::Index>(j + 1)) = x.transpose();
    }
    return traj;
}

FundamentalMatrices integrate_fundamental(const ControlSystem& sys, const Trajectory& traj, const Control& u) {
    check_dims(sys, u);
    check_trajectory(traj, u);
    const std::size_t grid = u.grid_size();
    const auto n = static_cast<Eigen::Index>(sys.state_dim());
    const double h = u.step();
    FundamentalMatrices out;
    out.forward.reserve(grid + 1);
    out.inverse.reserve(grid + 1);
    Matrix m = Matrix::Identity(n, n);
    Matrix inv = Matrix::Identity(n, n);
    out.forward.push_back(m);
    out.inverse.push_back(inv);
    constexpr std::array<double, 4> offset{0.0, 0.5, 0.5, 1.0};
    for (std::size_t j = 0; j < grid; ++j) {
        detail::Stages stages;
        detail::rk4_step(sys, traj.at(j), u.at(j), h, &stages);
        std::array<Matrix, 4> km;
        std::array<Matrix, 4> kn;
        for (std::size_t s = 0; s < 4; ++s) {
            const Matrix a = sys.drift_jacobian(stages.states[s], u.at(j));
            const Matrix ms = s == 0 ? m : Matrix(m + offset[s] * h * km[s - 1]);
            const Matrix ns = s == 0 ? inv : Matrix(inv + offset[s] * h * kn[s - 1]);
            km[s] = a * ms;
            kn[s] = -ns * a;
        }
        m += (h / 6.0) * (km[0] + 2.0 * km[1] + 2.0 * km[2] + km[3]);
        inv += (h / 6.0) * (kn[0] + 2.0 * kn[1] + 2.0 * kn[2] + kn[3]);
        detail::require_finite(m, "fundamental matrix");
        detail::require_finite(inv, "inverse fundamental matrix");
        out.forward.push_back(m);
        out.inverse.push_back(inv);
    }
    return out;
}

AdjointPath integrate_adjoint(const ControlSystem& sys, const Trajectory& traj, const Control& u,
                              const Covector& terminal) {
    check_dims(sys, u);
    check_trajectory(traj, u);
    if (static_cast<std::size_t>(terminal.size()) != sys.state_dim() || !terminal.allFinite()) {
        throw PreconditionError("terminal covector must be finite with state dimension");
    }
    detail::NodeSampler sampler(sys, traj, u);
    auto rhs = [&](std::size_t j, double theta, const Matrix& lambda) -> Matrix {
        return lambda * sys.drift_jacobian(sampler.state(j, theta), u.at(j));
    };
    const auto path = detail::integrate_backward(u.grid_size(), terminal, 1, rhs);
    AdjointPath out;
    out.lambda.resize(static_cast<Eigen::Index>(path.nodes.size()), terminal.size());
    for (std::size_t j = 0; j < path.nodes.size(); ++j) {
        out.lambda.row(static_cast<Eigen::Index>(j)) = path.nodes[j];
    }
    return out;
}

Matrix first_variation(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Control& v) {
    check_dims(sys, u);
    check_dims(sys, v);
    check_trajectory(traj, u);
    if (v.grid_size() != u.grid_size()) {
        throw PreconditionError("variation and control grids differ");
    }
    const std::size_t grid = u.grid_size();
    const double h = u.step();
    Matrix y_nodes = Matrix::Zero(static_cast<Eigen::Index>(grid + 1), static_cast<Eigen::Index>(sys.state_dim()));
    Vector x = traj.at(0);
    Vector y = Vector::Zero(static_cast<Eigen::Index>(sys.state_dim()));
    for (std::size_t j = 0; j < grid; ++j) {
        detail::rk4_tangent_step(sys, x, y, u.at(j), v.at(j), h);
        detail::require_finite(y, "first variation");
        y_nodes.row(static_cast<Eigen::Index>(j + 1)) = y.transpose();
    }
    return y_nodes;
}

double c0_bound(const ControlSystem& sys, const Vector& x0, const Control& u) {
    const auto& hint = sys.lipschitz_hint();
    if (!hint) {
        throw MissingHint("system '" + sys.name() + "' has no growth constant");
    }
    const double growth = std::sqrt(static_cast<double>(sys.control_dim())) * hint->growth * l2_norm(u);
    return (x0.norm() + growth) * std::exp(growth);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const auto n = traj.nodes.cols();
    out << "s";
    for (Eigen::Index a = 0; a < n; ++a) {
        out << ",x" << (a + 1);
    }
    out << '\n';
    const double grid = static_cast<double>(traj.grid_size());
    for (Eigen::Index j = 0; j < traj.nodes.rows(); ++j) {
        out << format_double(static_cast<double>(j) / grid);
        for (Eigen::Index a = 0; a < n; ++a) {
            out << ',' << format_double(traj.nodes(j, a));
        }
        out << '\n';
    }
}

} // namespace subflow
