#include "subflow/gradient.hpp"

#include "integrators.hpp"
#include "subflow/errors.hpp"

#include <cmath>

namespace subflow {

void CostParams::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw PreconditionError("beta must be finite and nonnegative");
    }
    if (radius && !(*radius > 0.0)) {
        throw PreconditionError("radius must be positive");
    }
    if (!x0.allFinite()) {
        throw PreconditionError("initial state must be finite");
    }
}

namespace {

// Pullback of a terminal covector through the discrete RK4 map: returns the
// derivative of (terminal . x_N) with respect to every control value u[j].
Matrix reverse_sweep(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Covector& terminal) {
    const std::size_t grid = u.grid_size();
    const std::size_t k = sys.control_dim();
    const double h = u.step();
    Matrix bar_u = Matrix::Zero(static_cast<Eigen::Index>(grid), static_cast<Eigen::Index>(k));
    Covector lambda = terminal;
    constexpr std::array<double, 4> offset{0.0, 0.5, 0.5, 1.0};
    for (std::size_t j = grid; j-- > 0;) {
        const Vector uj = u.at(j);
        detail::Stages stages;
        detail::rk4_step(sys, traj.at(j), uj, h, &stages);
        std::array<Covector, 4> bar_k;
        for (std::size_t s = 0; s < 4; ++s) {
            bar_k[s] = h * detail::kRk4Weights[s] * lambda;
        }
        Covector bar_x = lambda;
        for (std::size_t s = 4; s-- > 0;) {
            const Vector& xs = stages.states[s];
            const Covector bar_xs = bar_k[s] * sys.drift_jacobian(xs, uj);
            bar_u.row(static_cast<Eigen::Index>(j)) += bar_k[s] * sys.fields(xs);
            if (s > 0) {
                bar_k[s - 1] += offset[s] * h * bar_xs;
            }
            bar_x += bar_xs;
        }
        lambda = bar_x;
        detail::require_finite(lambda, "discrete adjoint");
    }
    return bar_u;
}

} // namespace

Vector endpoint(const ControlSystem& sys, const CostParams& params, const Control& u) {
    return integrate_state(sys, params.x0, u).final_state();
}

double cost(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u) {
    params.validate();
    const Vector x1 = endpoint(sys, params, u);
    const double norm = l2_norm(u);
    return 0.5 * norm * norm + params.beta * cost_fn.value(x1);
}

GradientRep gradient_continuous(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                                const Control& u) {
    params.validate();
    const Trajectory traj = integrate_state(sys, params.x0, u);
    const Covector terminal = cost_fn.gradient(traj.final_state());
    detail::NodeSampler sampler(sys, traj, u);
    auto rhs = [&](std::size_t j, double theta, const Matrix& lambda) -> Matrix {
        return lambda * sys.drift_jacobian(sampler.state(j, theta), u.at(j));
    };
    const auto path = detail::integrate_backward(u.grid_size(), terminal, 2, rhs);

    GradientRep rep;
    rep.mode = AdjointMode::continuous;
    rep.h = Control(u.grid_size(), u.control_dim());
    for (std::size_t j = 0; j < u.grid_size(); ++j) {
        const Vector left = sys.fields(traj.at(j)).transpose() * path.nodes[j].transpose();
        const Vector mid = sys.fields(sampler.state(j, 0.5)).transpose() * path.mids[j].transpose();
        const Vector right = sys.fields(traj.at(j + 1)).transpose() * path.nodes[j + 1].transpose();
        rep.h.values().row(static_cast<Eigen::Index>(j)) = ((left + 4.0 * mid + right) / 6.0).transpose();
    }
    rep.g_full = u + params.beta * rep.h;
    return rep;
}

CostAndGradient evaluate_discrete(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                                  const Control& u) {
    params.validate();
    CostAndGradient out;
    out.trajectory = integrate_state(sys, params.x0, u);
    const Vector x1 = out.trajectory.final_state();
    out.endpoint_cost = cost_fn.value(x1);
    const double norm = l2_norm(u);
    out.energy = 0.5 * norm * norm + params.beta * out.endpoint_cost;
    const Matrix bar_u = reverse_sweep(sys, out.trajectory, u, cost_fn.gradient(x1));
    out.gradient.mode = AdjointMode::discrete;
    out.gradient.h = Control(bar_u * static_cast<double>(u.grid_size()));
    out.gradient.g_full = u + params.beta * out.gradient.h;
    return out;
}

GradientRep gradient_discrete(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                              const Control& u) {
    return evaluate_discrete(sys, cost_fn, params, u).gradient;
}

EndpointRows endpoint_rows(const ControlSystem& sys, const CostParams& params, const Control& u) {
    params.validate();
    const Trajectory traj = integrate_state(sys, params.x0, u);
    const auto n = static_cast<Eigen::Index>(sys.state_dim());
    detail::NodeSampler sampler(sys, traj, u);
    // Row l of the sweep is e_l^T M(1) M^{-1}(s).
    auto rhs = [&](std::size_t j, double theta, const Matrix& rows) -> Matrix {
        return rows * sys.drift_jacobian(sampler.state(j, theta), u.at(j));
    };
    const auto path = detail::integrate_backward(u.grid_size(), Matrix::Identity(n, n), 2, rhs);

    EndpointRows out;
    out.rows.assign(static_cast<std::size_t>(n), Control(u.grid_size(), u.control_dim()));
    for (std::size_t j = 0; j < u.grid_size(); ++j) {
        const Matrix left = path.nodes[j] * sys.fields(traj.at(j));
        const Matrix mid = path.mids[j] * sys.fields(sampler.state(j, 0.5));
        const Matrix right = path.nodes[j + 1] * sys.fields(traj.at(j + 1));
        const Matrix avg = (left + 4.0 * mid + right) / 6.0;
        for (Eigen::Index l = 0; l < n; ++l) {
            out.rows[static_cast<std::size_t>(l)].values().row(static_cast<Eigen::Index>(j)) = avg.row(l);
        }
    }
    return out;
}

} // namespace subflow
