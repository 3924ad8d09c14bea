#include "subflow/second_order.hpp"

#include "integrators.hpp"
#include "subflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace subflow {

namespace {

constexpr std::array<double, 4> kOffset{0.0, 0.5, 0.5, 1.0};

void check_shapes(const Control& u, const Control& v) {
    if (u.grid_size() != v.grid_size() || u.control_dim() != v.control_dim()) {
        throw PreconditionError("direction and control shapes differ");
    }
}

Vector simpson(const Vector& left, const Vector& mid, const Vector& right) {
    return (left + 4.0 * mid + right) / 6.0;
}

} // namespace

Vector second_variation(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Control& v,
                        const Control& w) {
    check_shapes(u, v);
    check_shapes(u, w);
    if (traj.grid_size() != u.grid_size()) {
        throw PreconditionError("trajectory and control grids differ");
    }
    const auto n = static_cast<Eigen::Index>(sys.state_dim());
    const std::size_t k = sys.control_dim();
    const double h = u.step();
    // Columns: x, y_v, y_w, z.
    Matrix state = Matrix::Zero(n, 4);
    state.col(0) = traj.at(0);
    for (std::size_t j = 0; j < u.grid_size(); ++j) {
        const Vector uj = u.at(j);
        const Vector vj = v.at(j);
        const Vector wj = w.at(j);
        std::array<Matrix, 4> slope;
        for (std::size_t s = 0; s < 4; ++s) {
            const Matrix st = s == 0 ? state : Matrix(state + kOffset[s] * h * slope[s - 1]);
            const Vector x = st.col(0);
            const Vector yv = st.col(1);
            const Vector yw = st.col(2);
            const Matrix f = sys.fields(x);
            Matrix d(n, 4);
            Matrix a = Matrix::Zero(n, n);
            Vector source = Vector::Zero(n);
            for (std::size_t i = 0; i < k; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const Matrix jac = sys.jacobian(x, i);
                a.noalias() += uj(ii) * jac;
                source.noalias() += vj(ii) * (jac * yw) + wj(ii) * (jac * yv);
                if (uj(ii) != 0.0) {
                    source.noalias() += uj(ii) * sys.hessian(x, i).apply(yv, yw);
                }
            }
            d.col(0) = f * uj;
            d.col(1) = f * vj + a * yv;
            d.col(2) = f * wj + a * yw;
            d.col(3) = source + a * st.col(3);
            slope[s] = std::move(d);
        }
        state += (h / 6.0) * (slope[0] + 2.0 * slope[1] + 2.0 * slope[2] + slope[3]);
        detail::require_finite(state, "second variation");
    }
    return state.col(3);
}

HessianOperator::HessianOperator(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                                 Control u, HessianMode mode)
    : sys_(sys), cost_fn_(cost_fn), params_(params), u_(std::move(u)), mode_(mode) {
    auto eval = evaluate_discrete(sys_, cost_fn_, params_, u_);
    traj_ = std::move(eval.trajectory);
    gradient_ = std::move(eval.gradient);
    terminal_hessian_ = cost_fn_.hessian(traj_.final_state());
    if (mode_ != HessianMode::discrete) {
        return;
    }

    const std::size_t grid = u_.grid_size();
    const std::size_t k = sys_.control_dim();
    const double h = u_.step();
    stages_.resize(grid);
    for (std::size_t j = 0; j < grid; ++j) {
        detail::Stages st;
        detail::rk4_step(sys_, traj_.at(j), u_.at(j), h, &st);
        for (std::size_t s = 0; s < 4; ++s) {
            auto& sd = stages_[j][s];
            sd.state = st.states[s];
            sd.fields = sys_.fields(sd.state);
            sd.drift = Matrix::Zero(sd.state.size(), sd.state.size());
            for (std::size_t i = 0; i < k; ++i) {
                sd.jacobians.push_back(sys_.jacobian(sd.state, i));
                sd.hessians.push_back(sys_.hessian(sd.state, i));
                sd.drift.noalias() += u_.values()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) *
                                      sd.jacobians.back();
            }
        }
    }
    // Reverse sweep storing the completed adjoint of every stage slope.
    Covector lambda = cost_fn_.gradient(traj_.final_state());
    for (std::size_t j = grid; j-- > 0;) {
        std::array<Covector, 4> bar_k;
        for (std::size_t s = 0; s < 4; ++s) {
            bar_k[s] = h * detail::kRk4Weights[s] * lambda;
        }
        Covector bar_x = lambda;
        for (std::size_t s = 4; s-- > 0;) {
            auto& sd = stages_[j][s];
            sd.adjoint = bar_k[s];
            const Covector bar_xs = bar_k[s] * sd.drift;
            if (s > 0) {
                bar_k[s - 1] += kOffset[s] * h * bar_xs;
            }
            bar_x += bar_xs;
        }
        lambda = bar_x;
    }
}

Control HessianOperator::apply(const Control& v) const {
    check_shapes(u_, v);
    return mode_ == HessianMode::discrete ? apply_discrete(v) : apply_structural(v);
}

Control HessianOperator::apply_discrete(const Control& v) const {
    const std::size_t grid = u_.grid_size();
    const std::size_t k = sys_.control_dim();
    const auto n = static_cast<Eigen::Index>(sys_.state_dim());
    const double h = u_.step();

    // Forward tangent of the stages.
    std::vector<std::array<Vector, 4>> stage_tangent(grid);
    Vector dx = Vector::Zero(n);
    for (std::size_t j = 0; j < grid; ++j) {
        const Vector vj = v.at(j);
        std::array<Vector, 4> dk;
        for (std::size_t s = 0; s < 4; ++s) {
            const auto& sd = stages_[j][s];
            stage_tangent[j][s] = s == 0 ? dx : Vector(dx + kOffset[s] * h * dk[s - 1]);
            dk[s] = sd.drift * stage_tangent[j][s] + sd.fields * vj;
        }
        dx += (h / 6.0) * (dk[0] + 2.0 * dk[1] + 2.0 * dk[2] + dk[3]);
    }

    // Reverse sweep of the tangent adjoint.
    Matrix dbar_u = Matrix::Zero(static_cast<Eigen::Index>(grid), static_cast<Eigen::Index>(k));
    Covector dlambda = (terminal_hessian_ * dx).transpose();
    for (std::size_t j = grid; j-- > 0;) {
        const Vector vj = v.at(j);
        const Vector uj = u_.at(j);
        std::array<Covector, 4> dbar_k;
        for (std::size_t s = 0; s < 4; ++s) {
            dbar_k[s] = h * detail::kRk4Weights[s] * dlambda;
        }
        Covector dbar_x = dlambda;
        for (std::size_t s = 4; s-- > 0;) {
            const auto& sd = stages_[j][s];
            const Vector& dX = stage_tangent[j][s];
            Covector dbar_xs = dbar_k[s] * sd.drift;
            for (std::size_t i = 0; i < k; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                if (vj(ii) != 0.0) {
                    dbar_xs.noalias() += vj(ii) * (sd.adjoint * sd.jacobians[i]);
                }
                if (uj(ii) != 0.0) {
                    dbar_xs.noalias() += uj(ii) * sd.hessians[i].contract(sd.adjoint, dX);
                }
                dbar_u(static_cast<Eigen::Index>(j), ii) +=
                    dbar_k[s].dot(sd.fields.col(ii)) + sd.adjoint.dot(sd.jacobians[i] * dX);
            }
            if (s > 0) {
                dbar_k[s - 1] += kOffset[s] * h * dbar_xs;
            }
            dbar_x += dbar_xs;
        }
        dlambda = dbar_x;
    }
    Control out = v;
    out.values() += params_.beta * static_cast<double>(grid) * dbar_u;
    return out;
}

Control HessianOperator::apply_structural(const Control& v) const {
    const std::size_t grid = u_.grid_size();
    const std::size_t k = sys_.control_dim();
    const auto n = static_cast<Eigen::Index>(sys_.state_dim());

    const Matrix yv = first_variation(sys_, traj_, u_, v);
    detail::NodeSampler sampler(sys_, traj_, u_, &yv, &v);

    // Row 0: costate lambda (terminal grad a). Row 1: psi, the second-order
    // costate collecting the rank-n term and the curvature sources.
    Matrix terminal(2, n);
    terminal.row(0) = cost_fn_.gradient(traj_.final_state());
    terminal.row(1) = (terminal_hessian_ * yv.row(static_cast<Eigen::Index>(grid)).transpose()).transpose();

    auto rhs = [&](std::size_t j, double theta, const Matrix& state) -> Matrix {
        const Vector& x = sampler.state(j, theta);
        const Vector& y = sampler.tangent(j, theta);
        const Vector uj = u_.at(j);
        const Vector vj = v.at(j);
        const Matrix a = sys_.drift_jacobian(x, uj);
        const Covector lambda = state.row(0);
        Matrix d = state * a;
        for (std::size_t i = 0; i < k; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (vj(ii) != 0.0) {
                d.row(1).noalias() += vj(ii) * (lambda * sys_.jacobian(x, i));
            }
            if (uj(ii) != 0.0) {
                d.row(1).noalias() += uj(ii) * sys_.hessian(x, i).contract(lambda, y);
            }
        }
        return d;
    };
    const auto path = detail::integrate_backward(grid, terminal, 2, rhs);

    auto kernel = [&](std::size_t j, double theta, const Matrix& state) -> Vector {
        const Vector& x = sampler.state(j, theta);
        const Vector& y = sampler.tangent(j, theta);
        Vector r = sys_.fields(x).transpose() * state.row(1).transpose();
        for (std::size_t i = 0; i < k; ++i) {
            r(static_cast<Eigen::Index>(i)) += state.row(0).dot(sys_.jacobian(x, i) * y);
        }
        return r;
    };

    Control out = v;
    for (std::size_t j = 0; j < grid; ++j) {
        const Vector avg =
            simpson(kernel(j, 0.0, path.nodes[j]), kernel(j, 0.5, path.mids[j]), kernel(j, 1.0, path.nodes[j + 1]));
        out.values().row(static_cast<Eigen::Index>(j)) += params_.beta * avg.transpose();
    }
    return out;
}

Control hessian_apply(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                      const Control& u, const Control& v, HessianMode mode) {
    return HessianOperator(sys, cost_fn, params, u, mode).apply(v);
}

double symmetry_residual(const HessianOperator& op, const Control& v, const Control& w) {
    const double hvw = l2_inner(op.apply(v), w);
    const double vhw = l2_inner(v, op.apply(w));
    const double scale = std::max({std::abs(hvw), std::abs(vhw), 1e-300});
    return std::abs(hvw - vhw) / scale;
}

namespace {

// Two passes of modified Gram-Schmidt. Columns that collapse are replaced by
// fresh random directions so the block keeps full rank.
void orthonormalize(Matrix& q, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    const Eigen::Index cols = q.cols();
    double scale = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
        scale = std::max(scale, q.col(c).norm());
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (int attempt = 0; attempt < 4; ++attempt) {
            const double before = q.col(c).norm();
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index p = 0; p < c; ++p) {
                    q.col(c) -= q.col(p).dot(q.col(c)) * q.col(p);
                }
            }
            const double after = q.col(c).norm();
            if (after > 1e-10 * std::max(before, 1e-300) && after > 1e-14 * scale && after > 0.0) {
                q.col(c) /= after;
                break;
            }
            for (Eigen::Index r = 0; r < q.rows(); ++r) {
                q(r, c) = normal(rng);
            }
            scale = std::max(scale, q.col(c).norm());
        }
    }
}

} // namespace

SpectrumResult spectrum_probe(const HessianOperator& op, std::size_t count, const EigenSettings& settings) {
    const std::size_t dim = op.dimension();
    if (count == 0 || count > dim) {
        throw PreconditionError("eigenvalue count must lie in [1, N k]");
    }
    const std::size_t grid = op.base_point().grid_size();
    const std::size_t k = op.base_point().control_dim();
    const std::size_t block = std::min(dim, 2 * count + settings.guard_vectors);

    auto apply_shifted = [&](const Vector& x) -> Vector {
        Control v(Matrix(Eigen::Map<const Matrix>(x.data(), static_cast<Eigen::Index>(grid),
                                                  static_cast<Eigen::Index>(k))));
        const Control hv = op.apply(v);
        Vector out(static_cast<Eigen::Index>(dim));
        Eigen::Map<Matrix>(out.data(), static_cast<Eigen::Index>(grid), static_cast<Eigen::Index>(k)) =
            hv.values() - v.values();
        return out;
    };

    std::mt19937_64 rng(settings.seed);
    std::normal_distribution<double> normal;
    Matrix q(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(block));
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        for (Eigen::Index r = 0; r < q.rows(); ++r) {
            q(r, c) = normal(rng);
        }
    }
    orthonormalize(q, rng);

    SpectrumResult result;
    Matrix z(q.rows(), q.cols());
    for (std::size_t it = 1; it <= settings.max_iterations; ++it) {
        for (Eigen::Index c = 0; c < q.cols(); ++c) {
            z.col(c) = apply_shifted(q.col(c));
        }
        Matrix t = q.transpose() * z;
        t = 0.5 * (t + t.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(t.rows()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return std::abs(eig.eigenvalues()(a)) > std::abs(eig.eigenvalues()(b));
        });
        Matrix s(t.rows(), t.cols());
        Vector theta(t.rows());
        for (std::size_t c = 0; c < order.size(); ++c) {
            s.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(order[c]);
            theta(static_cast<Eigen::Index>(c)) = eig.eigenvalues()(order[c]);
        }
        const Matrix ritz = q * s;
        const Matrix image = z * s;
        const double scale = std::max(1.0, std::abs(theta(0)));
        double worst = 0.0;
        for (std::size_t c = 0; c < count; ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            worst = std::max(worst, (image.col(ci) - theta(ci) * ritz.col(ci)).norm());
        }
        result.iterations = it;
        result.max_residual = worst;
        if (worst <= settings.tolerance * scale) {
            for (std::size_t c = 0; c < count; ++c) {
                const double value = theta(static_cast<Eigen::Index>(c));
                result.shifted.push_back(value);
                result.eigenvalues.push_back(1.0 + value);
            }
            return result;
        }
        q = image;
        orthonormalize(q, rng);
    }
    throw NoConvergence("orthogonal iteration did not converge in " + std::to_string(settings.max_iterations) +
                        " iterations (residual " + std::to_string(result.max_residual) + ")");
}

std::size_t count_near_zero(const std::vector<double>& values, double tol) {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [tol](double x) { return std::abs(x) <= tol; }));
}

} // namespace subflow
