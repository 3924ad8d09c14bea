#include "subflow/oracle.hpp"

#include "subflow/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace subflow {

Control fd_gradient(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, const Control& u,
                    double eps) {
    if (!(eps > 0.0)) {
        throw PreconditionError("finite-difference step must be positive");
    }
    params.validate();
    // The central difference of 1/2 |u|^2 is exactly 2 eps u[j] / N, so only the
    // end-point term is differenced numerically. Same quotient, less cancellation.
    const double n = static_cast<double>(u.grid_size());
    Control out = u;
    Control probe = u;
    for (Eigen::Index j = 0; j < u.values().rows(); ++j) {
        for (Eigen::Index i = 0; i < u.values().cols(); ++i) {
            const double saved = probe.values()(j, i);
            probe.values()(j, i) = saved + eps;
            const double up = cost_fn.value(endpoint(sys, params, probe));
            probe.values()(j, i) = saved - eps;
            const double down = cost_fn.value(endpoint(sys, params, probe));
            probe.values()(j, i) = saved;
            out.values()(j, i) += params.beta * (up - down) / (2.0 * eps) * n;
        }
    }
    return out;
}

LinearSolution linear_closed_form(const Matrix& B, const Vector& x0, const Vector& x1, double beta) {
    if (!B.allFinite() || B.rows() != x0.size() || x0.size() != x1.size()) {
        throw PreconditionError("B must be finite and match the state dimension");
    }
    const auto k = B.cols();
    const Matrix system = Matrix::Identity(k, k) + beta * B.transpose() * B;
    const Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) {
        throw SingularSolve("I + beta B^T B is not positive definite");
    }
    LinearSolution sol;
    sol.control = -beta * llt.solve(B.transpose() * (x0 - x1));
    if (!sol.control.allFinite()) {
        throw SingularSolve("closed-form solve produced non-finite values");
    }
    const Vector miss = x0 + B * sol.control - x1;
    sol.energy = 0.5 * sol.control.squaredNorm() + 0.5 * beta * miss.squaredNorm();
    return sol;
}

double heisenberg_reference(double z1) {
    if (z1 == 0.0 || !std::isfinite(z1)) {
        throw PreconditionError("reference energy needs a finite nonzero height");
    }
    return 2.0 * std::numbers::pi * std::abs(z1);
}

namespace {

// Closed-form endpoint of the arc u = L (cos w s, sin w s) from the origin:
// the plane curve is a circle of radius L/w, and the enclosed signed area
// gives the height L^2 (1 - sin w / w) / (2 w).
struct Arc {
    double speed;
    double planar_sign;  // sign-carrying planar miss distance
};

Arc arc_reaching(double height, double omega) {
    const double shape = 1.0 - std::sin(omega) / omega;
    const double speed = std::sqrt(2.0 * omega * height / shape);
    return {speed, 2.0 * speed / omega * std::sin(0.5 * omega)};
}

} // namespace

ArcSearchResult heisenberg_arc_search(double z1, double omega_max, std::size_t samples) {
    if (z1 == 0.0 || !std::isfinite(z1) || !(omega_max > 0.0) || samples < 2) {
        throw PreconditionError("arc search needs a nonzero height, a positive range and at least two samples");
    }
    // A negative height is the mirror image (swap the two controls), same cost.
    const double height = std::abs(z1);
    ArcSearchResult best;
    best.energy = std::numeric_limits<double>::infinity();
    const double step = omega_max / static_cast<double>(samples);
    double w_prev = step;
    double f_prev = arc_reaching(height, w_prev).planar_sign;
    for (std::size_t s = 2; s <= samples; ++s) {
        const double w = step * static_cast<double>(s);
        const double f = arc_reaching(height, w).planar_sign;
        if (f_prev == 0.0 || (f_prev < 0.0) != (f < 0.0)) {
            double lo = w_prev;
            double hi = w;
            double f_lo = f_prev;
            for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double f_mid = arc_reaching(height, mid).planar_sign;
                if ((f_mid < 0.0) == (f_lo < 0.0) && f_lo != 0.0) {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            const double root = f_prev == 0.0 ? w_prev : 0.5 * (lo + hi);
            const double speed = arc_reaching(height, root).speed;
            ++best.closing_arcs;
            if (0.5 * speed * speed < best.energy) {
                best.energy = 0.5 * speed * speed;
                best.omega = root;
                best.speed = speed;
            }
        }
        w_prev = w;
        f_prev = f;
    }
    if (best.closing_arcs == 0) {
        throw PreconditionError("no closing arc in the scanned frequency range");
    }
    return best;
}

Control arc_control(std::size_t grid_size, double speed, double omega) {
    Control u(grid_size, 2);
    for (std::size_t j = 0; j < grid_size; ++j) {
        const double s = (static_cast<double>(j) + 0.5) / static_cast<double>(grid_size);
        u.values()(static_cast<Eigen::Index>(j), 0) = speed * std::cos(omega * s);
        u.values()(static_cast<Eigen::Index>(j), 1) = speed * std::sin(omega * s);
    }
    return u;
}

} // namespace subflow
