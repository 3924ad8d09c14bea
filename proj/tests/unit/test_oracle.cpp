#include "doctest.h"
#include "support.hpp"

#include "subflow/errors.hpp"
#include "subflow/flow.hpp"
#include "subflow/oracle.hpp"
#include "subflow/trajectory.hpp"

#include <cmath>
#include <numbers>

using namespace subflow;
using subflow::testing::random_control;
using subflow::testing::vec;

TEST_CASE("finite-difference gradient") {
    const auto sys = make_heisenberg();
    const auto cost_fn = make_quadratic_cost(vec({0, 0, 0.1}));
    CostParams p{0.0, vec({0, 0, 0}), std::nullopt};
    const Control u = random_control(12, 2, 1);
    CHECK((fd_gradient(sys, cost_fn, p, u) - u).values().cwiseAbs().maxCoeff() <= 1e-12);

    const auto lin = make_linear(Matrix::Ones(1, 1));
    const auto c1 = make_quadratic_cost(vec({0}));
    const CostParams p1{1.0, vec({1}), std::nullopt};
    CHECK(fd_gradient(lin, c1, p1, Control::constant(16, vec({-0.5}))).values().cwiseAbs().maxCoeff() <= 1e-9);

    // On Heisenberg the cost is quadratic in each single grid value, which makes
    // central differences exact; the O(eps^2) behaviour needs a nonlinear system.
    const auto poly = subflow::testing::nonlinear_plane();
    const auto c2 = make_quadratic_cost(vec({0.3, -0.2}));
    const CostParams p2{5.0, vec({0.1, 0}), std::nullopt};
    const Control u2 = random_control(12, 2, 2, 0.5);
    const Control a = fd_gradient(poly, c2, p2, u2, 4e-2);
    const Control b = fd_gradient(poly, c2, p2, u2, 2e-2);
    const Control c = fd_gradient(poly, c2, p2, u2, 1e-2);
    CHECK(l2_norm(a - b) / l2_norm(b - c) == doctest::Approx(4.0).epsilon(0.1));
    CHECK_THROWS_AS(fd_gradient(sys, cost_fn, p, u, 0.0), PreconditionError);
}

TEST_CASE("linear closed form") {
    const auto s = linear_closed_form(Matrix::Ones(1, 1), vec({1}), vec({0}), 1.0);
    CHECK(s.control(0) == doctest::Approx(-0.5));
    CHECK(s.energy == doctest::Approx(0.25));
    const auto lin = make_linear(Matrix::Ones(1, 1));
    const auto c1 = make_quadratic_cost(vec({0}));
    const CostParams p1{1.0, vec({1}), std::nullopt};
    CHECK(l2_norm(fd_gradient(lin, c1, p1, s.on_grid(16))) <= 1e-9);

    const auto same = linear_closed_form(Matrix::Ones(2, 3), vec({1, 2}), vec({1, 2}), 4.0);
    CHECK(same.control.isZero(0.0));
    CHECK(same.energy == 0.0);

    Matrix b(2, 3);
    b << 1, 0, 2, 0, 1, -1;
    const Vector x0 = vec({1, -1});
    const Vector x1 = vec({0.5, 2});
    const auto big = linear_closed_form(b, x0, x1, 1e6);
    const Vector steering = -b.completeOrthogonalDecomposition().pseudoInverse() * (x0 - x1);
    CHECK((big.control - steering).norm() <= 1e-5);

    const auto sys = make_linear(b);
    const auto cost_fn = make_quadratic_cost(x1);
    const CostParams p{3.0, x0, std::nullopt};
    const auto sol = linear_closed_form(b, x0, x1, 3.0);
    CHECK(stationarity_residual(sys, cost_fn, p, sol.on_grid(20)) <= 1e-10);
    CHECK(cost(sys, cost_fn, p, sol.on_grid(20)) == doctest::Approx(sol.energy).epsilon(1e-12));

    CHECK_THROWS_AS(linear_closed_form(Matrix::Constant(1, 1, std::nan("")), vec({1}), vec({0}), 1.0),
                    PreconditionError);
    CHECK_THROWS_AS(linear_closed_form(Matrix::Ones(1, 1), vec({1}), vec({0}), -1.0), SingularSolve);
}

TEST_CASE("heisenberg reference energy") {
    CHECK(heisenberg_reference(0.1) == doctest::Approx(0.6283185307179586));
    CHECK(heisenberg_reference(-0.1) == heisenberg_reference(0.1));
    CHECK(heisenberg_reference(1.0) == doctest::Approx(2.0 * std::numbers::pi));
    CHECK_THROWS_AS(heisenberg_reference(0.0), PreconditionError);
    for (double z : {0.1, -0.1, 1.0, 3.7}) {
        const auto arc = heisenberg_arc_search(z);
        CHECK(std::abs(arc.energy - heisenberg_reference(z)) <= 1e-6 * heisenberg_reference(z));
        CHECK(arc.omega == doctest::Approx(2.0 * std::numbers::pi));
        CHECK(arc.closing_arcs >= 6);
    }
}

TEST_CASE("the cheapest closing arc really reaches the target") {
    const auto arc = heisenberg_arc_search(0.1);
    const Control u = arc_control(4096, arc.speed, arc.omega);
    const auto sys = make_heisenberg();
    const Vector x1 = integrate_state(sys, vec({0, 0, 0}), u).final_state();
    CHECK((x1 - vec({0, 0, 0.1})).norm() <= 1e-6);
    CHECK(0.5 * l2_norm(u) * l2_norm(u) == doctest::Approx(arc.energy).epsilon(1e-6));
}
