#pragma once

#include "subflow/control.hpp"
#include "subflow/gradient.hpp"
#include "subflow/system.hpp"
#include "subflow/trajectory.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace subflow {

/// z(1) for the second variation of the end-point map in directions (v, w).
/// Integrated by RK4 jointly with x_u, y_u^v and y_u^w.
Vector second_variation(const ControlSystem& sys, const Trajectory& traj, const Control& u, const Control& v,
                        const Control& w);

enum class HessianMode {
    discrete,    ///< exact second derivative of the discrete cost
    structural,  ///< v + beta (D P^T Hess(a) D P + N^nu) v via continuous costates
};

/// Matrix-free Hessian of the penalized energy at a fixed control, w.r.t. the L^2 inner product.
///
/// Caches the trajectory, stage data and costates at construction; apply() is
/// then const and safe to call from several threads.
class HessianOperator {
public:
    HessianOperator(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params, Control u,
                    HessianMode mode = HessianMode::discrete);

    Control apply(const Control& v) const;

    const Control& base_point() const noexcept { return u_; }
    double beta() const noexcept { return params_.beta; }
    HessianMode mode() const noexcept { return mode_; }
    std::size_t dimension() const noexcept { return u_.grid_size() * u_.control_dim(); }

    /// Gradient at the base point (discrete adjoint).
    const GradientRep& gradient() const noexcept { return gradient_; }

private:
    struct StageData {
        Vector state;
        Matrix fields;
        std::vector<Matrix> jacobians;
        std::vector<Tensor3> hessians;
        Matrix drift;      // sum_i u^i dF^i/dx
        Covector adjoint;  // reverse-mode adjoint of the stage slope
    };

    Control apply_discrete(const Control& v) const;
    Control apply_structural(const Control& v) const;

    const ControlSystem& sys_;
    const EndpointCost& cost_fn_;
    CostParams params_;
    Control u_;
    HessianMode mode_;
    Trajectory traj_;
    GradientRep gradient_;
    Matrix terminal_hessian_;
    std::vector<std::array<StageData, 4>> stages_;
};

Control hessian_apply(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& params,
                      const Control& u, const Control& v, HessianMode mode = HessianMode::discrete);

/// |<Hv,w> - <v,Hw>| / max(|<Hv,w>|, |<v,Hw>|, tiny).
double symmetry_residual(const HessianOperator& op, const Control& v, const Control& w);

struct EigenSettings {
    std::size_t max_iterations = 500;
    double tolerance = 1e-8;
    std::size_t guard_vectors = 8;  ///< block size is 2 m + guard_vectors, capped at N k
    std::uint64_t seed = 0x5eed;
};

struct SpectrumResult {
    /// Eigenvalues of H farthest from 1, ordered by |lambda - 1| decreasing.
    std::vector<double> eigenvalues;
    /// The same spectrum shifted: eigenvalues of H - Id sorted by magnitude.
    std::vector<double> shifted;
    std::size_t iterations = 0;
    double max_residual = 0.0;
};

/// Block orthogonal iteration with Rayleigh-Ritz on H - Id. Throws NoConvergence
/// when the Ritz residuals do not drop below tolerance * max(1, |theta_max|).
SpectrumResult spectrum_probe(const HessianOperator& op, std::size_t count, const EigenSettings& settings = {});

/// Entries with |value| <= tol. Applied to SpectrumResult::eigenvalues this counts
/// probed near-kernel directions of the Hessian.
std::size_t count_near_zero(const std::vector<double>& values, double tol = 1e-6);

} // namespace subflow
