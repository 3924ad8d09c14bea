#include "integrators.hpp"

#include "subflow/errors.hpp"

#include <cmath>
#include <string>

namespace subflow::detail {

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw NonFiniteState(std::string("non-finite value while integrating ") + what);
    }
}

Vector rk4_step(const ControlSystem& sys, const Vector& x, const Vector& u, double h, Stages* stages) {
    const Vector k1 = sys.velocity(x, u);
    const Vector x2 = x + 0.5 * h * k1;
    const Vector k2 = sys.velocity(x2, u);
    const Vector x3 = x + 0.5 * h * k2;
    const Vector k3 = sys.velocity(x3, u);
    const Vector x4 = x + h * k3;
    const Vector k4 = sys.velocity(x4, u);
    if (stages != nullptr) {
        stages->states = {x, x2, x3, x4};
        stages->slopes = {k1, k2, k3, k4};
    }
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void rk4_tangent_step(const ControlSystem& sys, Vector& x, Vector& y, const Vector& u, const Vector& v, double h,
                      TangentStages* stages) {
    std::array<Vector, 4> xs;
    std::array<Vector, 4> ys;
    std::array<Vector, 4> kx;
    std::array<Vector, 4> ky;
    constexpr std::array<double, 4> offset{0.0, 0.5, 0.5, 1.0};
    for (std::size_t s = 0; s < 4; ++s) {
        if (s == 0) {
            xs[s] = x;
            ys[s] = y;
        } else {
            xs[s] = x + offset[s] * h * kx[s - 1];
            ys[s] = y + offset[s] * h * ky[s - 1];
        }
        const Matrix f = sys.fields(xs[s]);
        kx[s] = f * u;
        ky[s] = f * v + sys.drift_jacobian(xs[s], u) * ys[s];
    }
    if (stages != nullptr) {
        stages->base.states = xs;
        stages->base.slopes = kx;
        stages->tangents = ys;
    }
    x += (h / 6.0) * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
    y += (h / 6.0) * (ky[0] + 2.0 * ky[1] + 2.0 * ky[2] + ky[3]);
}

NodeSampler::NodeSampler(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Matrix* tangent,
                         const Control* direction)
    : sys_(sys), traj_(traj), u_(u), tangent_(tangent), direction_(direction) {}

const NodeSampler::Sample& NodeSampler::sample(std::size_t j, double theta) {
    if (j != bin_) {
        bin_ = j;
        for (auto& c : cache_) {
            c.reset();
        }
    }
    const auto quarter = static_cast<long>(std::lround(theta * 4.0));
    const bool cacheable = quarter >= 0 && quarter <= 4 && std::abs(theta * 4.0 - static_cast<double>(quarter)) < 1e-12;
    if (cacheable && cache_[static_cast<std::size_t>(quarter)]) {
        return *cache_[static_cast<std::size_t>(quarter)];
    }
    Sample s;
    const double h = u_.step();
    if (theta == 0.0) {
        s.x = traj_.at(j);
        if (tangent_ != nullptr) {
            s.y = tangent_->row(static_cast<Eigen::Index>(j)).transpose();
        }
    } else if (theta == 1.0) {
        s.x = traj_.at(j + 1);
        if (tangent_ != nullptr) {
            s.y = tangent_->row(static_cast<Eigen::Index>(j + 1)).transpose();
        }
    } else if (tangent_ != nullptr) {
        s.x = traj_.at(j);
        s.y = tangent_->row(static_cast<Eigen::Index>(j)).transpose();
        rk4_tangent_step(sys_, s.x, s.y, u_.at(j), direction_->at(j), theta * h);
    } else {
        s.x = rk4_step(sys_, traj_.at(j), u_.at(j), theta * h);
    }
    if (!cacheable) {
        scratch_ = std::move(s);
        return scratch_;
    }
    cache_[static_cast<std::size_t>(quarter)] = std::move(s);
    return *cache_[static_cast<std::size_t>(quarter)];
}

const Vector& NodeSampler::state(std::size_t j, double theta) {
    return sample(j, theta).x;
}

const Vector& NodeSampler::tangent(std::size_t j, double theta) {
    if (tangent_ == nullptr) {
        throw PreconditionError("sampler built without a tangent path");
    }
    return sample(j, theta).y;
}

BackwardPath integrate_backward(std::size_t grid_size, const Matrix& terminal, int substeps, const BackwardRhs& rhs) {
    if (substeps != 1 && substeps != 2) {
        throw PreconditionError("backward sweep supports 1 or 2 substeps per bin");
    }
    const double h = 1.0 / static_cast<double>(grid_size);
    BackwardPath path;
    path.nodes.resize(grid_size + 1);
    if (substeps == 2) {
        path.mids.resize(grid_size);
    }
    Matrix state = terminal;
    path.nodes[grid_size] = state;
    const double dtheta = 1.0 / substeps;
    const double tau = h * dtheta;
    for (std::size_t jj = grid_size; jj-- > 0;) {
        double theta = 1.0;
        for (int sub = 0; sub < substeps; ++sub) {
            const double mid = theta - 0.5 * dtheta;
            const double end = theta - dtheta;
            const Matrix k1 = rhs(jj, theta, state);
            const Matrix k2 = rhs(jj, mid, state + 0.5 * tau * k1);
            const Matrix k3 = rhs(jj, mid, state + 0.5 * tau * k2);
            const Matrix k4 = rhs(jj, end, state + tau * k3);
            state += (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            require_finite(state, "backward costate");
            theta = end;
            if (substeps == 2 && sub == 0) {
                path.mids[jj] = state;
            }
        }
        path.nodes[jj] = state;
    }
    return path;
}

} // namespace subflow::detail
