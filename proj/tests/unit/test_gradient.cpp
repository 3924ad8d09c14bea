#include "doctest.h"
#include "support.hpp"

#include "subflow/errors.hpp"
#include "subflow/gradient.hpp"
#include "subflow/oracle.hpp"
#include "subflow/trajectory.hpp"

using namespace subflow;
using subflow::testing::random_control;
using subflow::testing::vec;

namespace {

struct Scalar {
    ControlSystem sys = make_linear(Matrix::Ones(1, 1));
    EndpointCost cost = make_quadratic_cost(vec({0}));
    CostParams params{1.0, vec({1}), std::nullopt};
};

struct Heis {
    ControlSystem sys = make_heisenberg();
    EndpointCost cost = make_quadratic_cost(vec({0, 0, 0.1}));
    CostParams params{10.0, vec({0, 0, 0}), std::nullopt};
};

} // namespace

TEST_CASE("cost params validation") {
    CostParams p{1.0, vec({0}), std::nullopt};
    CHECK_NOTHROW(p.validate());
    p.beta = -1.0;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
    p.beta = 1.0;
    p.radius = 0.0;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
}

TEST_CASE("endpoint and cost examples") {
    Scalar s;
    Heis h;
    CHECK(endpoint(h.sys, h.params, Control::zeros(8, 2)) == h.params.x0);
    CHECK(endpoint(s.sys, s.params, Control::constant(8, vec({-0.5})))(0) == doctest::Approx(0.5));
    CHECK((endpoint(h.sys, h.params, Control::constant(64, vec({1, 0}))) - vec({1, 0, 0})).norm() <= 1e-10);

    CHECK(cost(s.sys, s.cost, s.params, Control::constant(16, vec({-0.5}))) == doctest::Approx(0.25));
    CHECK(cost(s.sys, s.cost, s.params, Control::zeros(16, 1)) == doctest::Approx(0.5));
    const auto at_target = make_quadratic_cost(h.params.x0);
    CHECK(cost(h.sys, at_target, h.params, Control::zeros(16, 2)) == 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Control u = random_control(16, 2, seed);
        CHECK(cost(h.sys, h.cost, h.params, u) >= 0.5 * l2_norm(u) * l2_norm(u));
    }
}

TEST_CASE("closed-form stationary point of the scalar benchmark") {
    Scalar s;
    const Control u = Control::constant(32, vec({-0.5}));
    const auto gc = gradient_continuous(s.sys, s.cost, s.params, u);
    CHECK(gc.mode == AdjointMode::continuous);
    CHECK((gc.h.values().array() - 0.5).abs().maxCoeff() <= 1e-14);
    CHECK(l2_norm(gc.g_full) <= 1e-14);
    const auto gd = gradient_discrete(s.sys, s.cost, s.params, u);
    CHECK(gd.mode == AdjointMode::discrete);
    CHECK(gd.g_full.values().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gradient vanishes at a minimum of the end-point cost") {
    Heis h;
    const auto at_x0 = make_quadratic_cost(h.params.x0);
    for (double beta : {0.5, 10.0, 1000.0}) {
        CostParams p = h.params;
        p.beta = beta;
        CHECK(l2_norm(gradient_continuous(h.sys, at_x0, p, Control::zeros(16, 2)).g_full) == 0.0);
        CHECK(l2_norm(gradient_discrete(h.sys, at_x0, p, Control::zeros(16, 2)).g_full) == 0.0);
    }
}

TEST_CASE("g_full is u + beta h in both modes") {
    Heis h;
    const Control u = random_control(24, 2, 5);
    for (const auto& g : {gradient_continuous(h.sys, h.cost, h.params, u), gradient_discrete(h.sys, h.cost, h.params, u)}) {
        CHECK((g.g_full - (u + h.params.beta * g.h)).values().cwiseAbs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("continuous gradient represents the differential of the end-point cost") {
    Heis h;
    const Control u = random_control(48, 2, 8, 0.7);
    const auto traj = integrate_state(h.sys, h.params.x0, u);
    const Covector nabla = h.cost.gradient(traj.final_state());
    const auto g = gradient_continuous(h.sys, h.cost, h.params, u);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Control v = random_control(48, 2, 300 + seed);
        const double lhs = l2_inner(g.h, v);
        const double rhs = nabla * first_variation(h.sys, traj, u, v).row(48).transpose();
        CHECK(subflow::testing::rel_err(lhs, rhs) <= 1e-6);
    }
}

TEST_CASE("discrete gradient agrees with central differences") {
    Heis h;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Control u = random_control(32, 2, 40 + seed);
        const auto gd = gradient_discrete(h.sys, h.cost, h.params, u);
        const auto fd = fd_gradient(h.sys, h.cost, h.params, u, 1e-5);
        CHECK(max_rel_diff(gd.g_full.values(), fd.values()) <= 1e-6);
    }
    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p2{2.0, vec({0.1, 0}), std::nullopt};
    const Control u2 = random_control(24, 2, 77, 0.5);
    CHECK(max_rel_diff(gradient_discrete(poly, cost2, p2, u2).g_full.values(),
                       fd_gradient(poly, cost2, p2, u2, 1e-5).values()) <= 1e-6);
}

TEST_CASE("directional derivative converges to the L2 pairing at first order") {
    Heis h;
    const Control u = random_control(32, 2, 60, 0.5);
    const Control v = random_control(32, 2, 61, 0.5);
    const double base = cost(h.sys, h.cost, h.params, u);
    const double pairing = l2_inner(gradient_discrete(h.sys, h.cost, h.params, u).g_full, v);
    std::vector<double> errs;
    for (double eps : {1e-3, 1e-4}) {
        errs.push_back(std::abs((cost(h.sys, h.cost, h.params, u + eps * v) - base) / eps - pairing));
    }
    CHECK(errs[0] / errs[1] == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("the two adjoint routes converge to each other under refinement") {
    // On the Heisenberg group RK4 is exact for the state and both routes agree
    // to roundoff, so the order is measured on a genuinely nonlinear system.
    Heis h;
    const Control uh = random_control(32, 2, 90);
    CHECK(l2_norm(gradient_continuous(h.sys, h.cost, h.params, uh).g_full -
                  gradient_discrete(h.sys, h.cost, h.params, uh).g_full) <= 1e-10);

    const auto poly = subflow::testing::nonlinear_plane();
    const auto cost2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p2{1.0, vec({0, 0}), std::nullopt};
    const Control base = random_control(8, 2, 1, 0.7);
    std::vector<double> gaps;
    for (std::size_t factor : {4u, 8u, 16u}) {
        const Control u = base.refined(factor);
        gaps.push_back(l2_norm(gradient_continuous(poly, cost2, p2, u).g_full - gradient_discrete(poly, cost2, p2, u).g_full));
    }
    CHECK(gaps[0] / gaps[1] >= 3.5);
    CHECK(gaps[1] / gaps[2] >= 3.5);
}

TEST_CASE("endpoint rows") {
    Matrix b(2, 3);
    b << 1, 2, 3, -1, 0, 4;
    const auto lin = make_linear(b);
    const CostParams pl{1.0, vec({0, 0}), std::nullopt};
    const auto rl = endpoint_rows(lin, pl, random_control(10, 3, 3));
    REQUIRE(rl.rows.size() == 2);
    for (Eigen::Index l = 0; l < 2; ++l) {
        for (Eigen::Index j = 0; j < 10; ++j) {
            CHECK(rl.rows[static_cast<std::size_t>(l)].values().row(j).isApprox(b.row(l)));
        }
    }

    Heis h;
    const Vector x0 = vec({0.5, -1, 0});
    CostParams p0 = h.params;
    p0.x0 = x0;
    const auto r0 = endpoint_rows(h.sys, p0, Control::zeros(6, 2));
    const Matrix f0 = h.sys.fields(x0);
    for (Eigen::Index l = 0; l < 3; ++l) {
        for (Eigen::Index j = 0; j < 6; ++j) {
            CHECK(r0.rows[static_cast<std::size_t>(l)].values().row(j).isApprox(f0.row(l)));
        }
    }

    const std::vector<ControlSystem> systems{h.sys, subflow::testing::nonlinear_plane()};
    for (const auto& sys : systems) {
        const auto n = static_cast<Eigen::Index>(sys.state_dim());
        const CostParams p{3.0, Vector::Constant(n, 0.1), std::nullopt};
        const auto cost_fn = make_quadratic_cost(Vector::Constant(n, -0.2));
        const Control u = random_control(64, 2, 21, 0.5);
        const auto rows = endpoint_rows(sys, p, u);
        const auto traj = integrate_state(sys, p.x0, u);
        const Covector nabla = cost_fn.gradient(traj.final_state());
        Control combo(64, 2);
        for (Eigen::Index l = 0; l < n; ++l) {
            combo += nabla(l) * rows.rows[static_cast<std::size_t>(l)];
        }
        const auto gc = gradient_continuous(sys, cost_fn, p, u);
        CHECK((combo - gc.h).values().cwiseAbs().maxCoeff() <= 1e-7);

        const Control v = random_control(64, 2, 22);
        const Vector y1 = first_variation(sys, traj, u, v).row(64).transpose();
        for (Eigen::Index l = 0; l < n; ++l) {
            CHECK(std::abs(l2_inner(rows.rows[static_cast<std::size_t>(l)], v) - y1(l)) <= 1e-7);
        }
    }
}

namespace {

// Largest gap between the difference quotient of neighbouring h bins and
// lambda . sum_i u^i [F^i, F^j] at the shared node.
double bracket_defect(const ControlSystem& sys, const EndpointCost& cost_fn, const CostParams& p, const Control& u) {
    const std::size_t grid = u.grid_size();
    const auto traj = integrate_state(sys, p.x0, u);
    const auto adj = integrate_adjoint(sys, traj, u, cost_fn.gradient(traj.final_state()));
    const auto g = gradient_continuous(sys, cost_fn, p, u);
    double worst = 0.0;
    for (std::size_t j = 1; j < grid; ++j) {
        const Vector u_mid = 0.5 * (u.at(j - 1) + u.at(j));
        for (std::size_t jj = 0; jj < sys.control_dim(); ++jj) {
            const auto col = static_cast<Eigen::Index>(jj);
            const double fd = (g.h.values()(static_cast<Eigen::Index>(j), col) -
                               g.h.values()(static_cast<Eigen::Index>(j - 1), col)) *
                              static_cast<double>(grid);
            double bracket = 0.0;
            for (std::size_t i = 0; i < sys.control_dim(); ++i) {
                bracket += u_mid(static_cast<Eigen::Index>(i)) * (adj.at(j) * sys.lie_bracket(traj.at(j), i, jj)).value();
            }
            worst = std::max(worst, std::abs(fd - bracket));
        }
    }
    return worst;
}

} // namespace

TEST_CASE("derivative of h follows the Lie brackets") {
    // Heisenberg: the vertical costate is constant and h is reproduced exactly
    // per bin, so the identity holds up to roundoff at every resolution.
    const auto heis = make_heisenberg();
    const auto ch = make_quadratic_cost(vec({0.2, -0.1, 0.3}));
    const CostParams ph{1.0, vec({0, 0, 0}), std::nullopt};
    for (std::size_t grid : {32u, 64u, 128u}) {
        CHECK(bracket_defect(heis, ch, ph, subflow::testing::smooth_control(grid)) <= 1e-10);
    }

    const auto poly = subflow::testing::nonlinear_plane();
    const auto cp = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams pp{1.0, vec({0, 0}), std::nullopt};
    std::vector<double> errs;
    for (std::size_t grid : {32u, 64u, 128u}) {
        errs.push_back(bracket_defect(poly, cp, pp, subflow::testing::smooth_control(grid, 0.5)));
    }
    CHECK(errs[0] / errs[1] >= 1.8);
    CHECK(errs[1] / errs[2] >= 1.8);
}
