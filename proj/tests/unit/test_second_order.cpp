#include "doctest.h"
#include "support.hpp"

#include "subflow/errors.hpp"
#include "subflow/flow.hpp"
#include "subflow/second_order.hpp"
#include "subflow/trajectory.hpp"

#include <algorithm>
#include <cmath>

using namespace subflow;
using subflow::testing::random_control;
using subflow::testing::vec;

namespace {

struct Heis {
    ControlSystem sys = make_heisenberg();
    EndpointCost cost = make_quadratic_cost(vec({0, 0, 0.1}));
    CostParams params{10.0, vec({0, 0, 0}), std::nullopt};
};

Control fd_hessian(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& p, const Control& u,
                   const Control& v, double eps) {
    return (1.0 / (2.0 * eps)) *
           (gradient_discrete(sys, cost_fn, p, u + eps * v).g_full - gradient_discrete(sys, cost_fn, p, u - eps * v).g_full);
}

} // namespace

TEST_CASE("second variation vanishes for constant fields") {
    Matrix b(2, 2);
    b << 1, 2, 3, 4;
    const auto lin = make_linear(b);
    const Control u = random_control(8, 2, 1);
    const auto traj = integrate_state(lin, vec({0, 0}), u);
    CHECK(second_variation(lin, traj, u, random_control(8, 2, 2), random_control(8, 2, 3)).isZero(0.0));
}

TEST_CASE("second variation is symmetric and bilinear") {
    const std::vector<ControlSystem> systems{make_heisenberg(), subflow::testing::nonlinear_plane()};
    for (const auto& sys : systems) {
        const auto n = static_cast<Eigen::Index>(sys.state_dim());
        const Control u = random_control(32, 2, 4, 0.5);
        const auto traj = integrate_state(sys, Vector::Constant(n, 0.1), u);
        const Control v1 = random_control(32, 2, 5);
        const Control v2 = random_control(32, 2, 6);
        const Control w = random_control(32, 2, 7);
        const Vector zvw = second_variation(sys, traj, u, v1, w);
        const Vector zwv = second_variation(sys, traj, u, w, v1);
        CHECK((zvw - zwv).norm() <= 1e-9 * std::max(1.0, zvw.norm()));
        const double alpha = -1.7;
        const Vector lhs = second_variation(sys, traj, u, alpha * v1 + v2, w);
        const Vector rhs = alpha * zvw + second_variation(sys, traj, u, v2, w);
        CHECK((lhs - rhs).norm() <= 1e-9 * std::max(1.0, rhs.norm()));
    }
}

TEST_CASE("second variation matches differences of the first variation") {
    const auto sys = subflow::testing::nonlinear_plane();
    const Vector x0 = vec({0.1, 0.2});
    const Control u = subflow::testing::smooth_control(32, 0.5);
    const Control v = random_control(32, 2, 8);
    const Control w = random_control(32, 2, 9);
    const auto traj = integrate_state(sys, x0, u);
    const Vector z = second_variation(sys, traj, u, v, w);
    const Vector y = first_variation(sys, traj, u, v).row(32).transpose();
    std::vector<double> errs;
    for (double eps : {1e-3, 5e-4, 2.5e-4}) {
        const Control moved = u + eps * w;
        const Vector ye = first_variation(sys, integrate_state(sys, x0, moved), moved, v).row(32).transpose();
        errs.push_back(((ye - y) / eps - z).norm());
    }
    CHECK(errs[0] / errs[1] >= 1.8);
    CHECK(errs[1] / errs[2] >= 1.8);
}

TEST_CASE("scalar benchmark hessian is identity plus the mean") {
    const auto lin = make_linear(Matrix::Ones(1, 1));
    const auto cost_fn = make_quadratic_cost(vec({0}));
    const CostParams p{1.0, vec({1}), std::nullopt};
    const Control u = Control::constant(16, vec({-0.5}));
    const Control ones = Control::constant(16, vec({1.0}));
    CHECK((hessian_apply(lin, cost_fn, p, u, ones).values().array() - 2.0).abs().maxCoeff() <= 1e-13);
    const Control v = random_control(16, 1, 10);
    const double mean = v.values().mean();
    for (auto mode : {HessianMode::discrete, HessianMode::structural}) {
        const Control hv = hessian_apply(lin, cost_fn, p, u, v, mode);
        CHECK((hv.values().array() - v.values().array() - mean).abs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("zero penalty gives the identity") {
    Heis h;
    CostParams p = h.params;
    p.beta = 0.0;
    const Control u = random_control(16, 2, 11);
    const Control v = random_control(16, 2, 12);
    for (auto mode : {HessianMode::discrete, HessianMode::structural}) {
        CHECK((hessian_apply(h.sys, h.cost, p, u, v, mode) - v).values().cwiseAbs().maxCoeff() == 0.0);
    }
    const HessianOperator op(h.sys, h.cost, p, u);
    const auto spec = spectrum_probe(op, 4);
    for (double e : spec.eigenvalues) {
        CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("hessian agrees with differences of the gradient") {
    Heis h;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Control u = random_control(32, 2, 20 + seed);
        const Control v = random_control(32, 2, 30 + seed);
        const Control fd = fd_hessian(h.sys, h.cost, h.params, u, v, 1e-5);
        for (auto mode : {HessianMode::discrete, HessianMode::structural}) {
            const Control hv = hessian_apply(h.sys, h.cost, h.params, u, v, mode);
            CHECK(l2_norm(hv - fd) / l2_norm(fd) <= 1e-5);
        }
    }
    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p2{2.0, vec({0.1, 0}), std::nullopt};
    const Control u2 = random_control(32, 2, 40, 0.5);
    const Control v2 = random_control(32, 2, 41);
    const Control fd2 = fd_hessian(poly, cost2, p2, u2, v2, 1e-5);
    CHECK(l2_norm(hessian_apply(poly, cost2, p2, u2, v2) - fd2) / l2_norm(fd2) <= 1e-5);
}

TEST_CASE("hessian symmetry on random pairs") {
    Heis h;
    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p2{2.0, vec({0.1, 0}), std::nullopt};
    const HessianOperator heis_op(h.sys, h.cost, h.params, random_control(32, 2, 50));
    const HessianOperator poly_op(poly, cost2, p2, random_control(32, 2, 51, 0.5));
    const HessianOperator heis_struct(h.sys, h.cost, h.params, random_control(32, 2, 50), HessianMode::structural);
    for (std::uint64_t pair = 0; pair < 20; ++pair) {
        const Control v = random_control(32, 2, 500 + pair);
        const Control w = random_control(32, 2, 600 + pair);
        CHECK(symmetry_residual(heis_op, v, w) <= 1e-8);
        CHECK(symmetry_residual(poly_op, v, w) <= 1e-8);
        CHECK(symmetry_residual(heis_struct, v, w) <= 1e-8);
    }
}

TEST_CASE("second-order Taylor remainder") {
    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p{2.0, vec({0.1, 0}), std::nullopt};
    const Control u = random_control(32, 2, 70, 0.5);
    const Control v = random_control(32, 2, 71, 0.5);
    const double f0 = cost(poly, cost2, p, u);
    const double slope = l2_inner(gradient_discrete(poly, cost2, p, u).g_full, v);
    const double curv = l2_inner(hessian_apply(poly, cost2, p, u, v), v);
    std::vector<double> rem;
    for (double eps : {4e-2, 2e-2, 1e-2}) {
        rem.push_back(std::abs(cost(poly, cost2, p, u + eps * v) - f0 - eps * slope - 0.5 * eps * eps * curv));
    }
    CHECK(rem[0] / rem[1] >= 6.0);
    CHECK(rem[1] / rem[2] >= 6.0);
}

TEST_CASE("structural and discrete hessians converge to each other") {
    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p{1.0, vec({0, 0}), std::nullopt};
    const Control ub = random_control(8, 2, 80, 0.7);
    const Control vb = random_control(8, 2, 81);
    std::vector<double> gaps;
    for (std::size_t factor : {4u, 8u, 16u}) {
        const Control u = ub.refined(factor);
        const Control v = vb.refined(factor);
        const Control d = hessian_apply(poly, cost2, p, u, v, HessianMode::discrete);
        const Control s = hessian_apply(poly, cost2, p, u, v, HessianMode::structural);
        gaps.push_back(l2_norm(d - s) / l2_norm(d));
    }
    CHECK(gaps[0] / gaps[1] >= 3.5);
    CHECK(gaps[1] / gaps[2] >= 3.5);
}

TEST_CASE("spectrum of the scalar benchmark") {
    const auto lin = make_linear(Matrix::Ones(1, 1));
    const auto cost_fn = make_quadratic_cost(vec({0}));
    const CostParams p{1.0, vec({1}), std::nullopt};
    const HessianOperator op(lin, cost_fn, p, Control::zeros(64, 1));
    const auto spec = spectrum_probe(op, 5);
    REQUIRE(spec.eigenvalues.size() == 5);
    CHECK(std::abs(spec.eigenvalues[0] - 2.0) <= 1e-6);
    for (std::size_t m = 1; m < 5; ++m) {
        CHECK(std::abs(spec.eigenvalues[m] - 1.0) <= 1e-8);
    }
    CHECK(std::abs(spec.shifted[0] - 1.0) <= 1e-6);
    CHECK(count_near_zero(spec.shifted) == 4);
    CHECK(count_near_zero(spec.eigenvalues) == 0);
    CHECK_THROWS_AS(spectrum_probe(op, 65), PreconditionError);
}

TEST_CASE("spectrum of H - Id decays at a heisenberg stationary point") {
    Heis h;
    CostParams p = h.params;
    p.beta = 1000.0;
    FlowConfig cfg;
    cfg.eps_stop = 1e-6;
    const auto trace = run_flow(h.sys, h.cost, p, subflow::testing::circle_control(48, std::sqrt(0.1 / std::numbers::pi)), cfg);
    REQUIRE(trace.converged);
    const HessianOperator op(h.sys, h.cost, p, trace.final_control);
    const auto spec = spectrum_probe(op, 24);
    REQUIRE(spec.shifted.size() == 24);
    const double head = std::abs(spec.shifted.front());
    for (std::size_t m = 21; m < 24; ++m) {
        CHECK(std::abs(spec.shifted[m]) <= 0.1 * head);
    }
    for (std::size_t m = 1; m < 24; ++m) {
        CHECK(std::abs(spec.shifted[m]) <= std::abs(spec.shifted[m - 1]) + 1e-9);
    }
}

TEST_CASE("eigensolver reports a stalled iteration") {
    Heis h;
    const HessianOperator op(h.sys, h.cost, h.params, random_control(32, 2, 90));
    EigenSettings tight;
    tight.max_iterations = 1;
    tight.tolerance = 1e-15;
    CHECK_THROWS_AS(spectrum_probe(op, 6, tight), NoConvergence);
}
