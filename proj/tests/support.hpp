#pragma once

#include "subflow/control.hpp"
#include "subflow/oracle.hpp"
#include "subflow/system.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace subflow::testing {

// F1 = (1, x y), F2 = (y^2 / 2, 1 + x^2 / 2). Genuinely nonlinear, so RK4 is
// not exact on it and discretization orders become visible.
inline ControlSystem nonlinear_plane() {
    PolynomialTable t(2, std::vector<std::vector<Monomial>>(2));
    t[0][0] = {{1.0, {0, 0}}};
    t[0][1] = {{1.0, {1, 1}}};
    t[1][0] = {{0.5, {0, 2}}};
    t[1][1] = {{1.0, {0, 0}}, {0.5, {2, 0}}};
    return make_polynomial(2, 2, t, "nonlinear-plane");
}

inline Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index a = 0;
    for (double x : xs) {
        v(a++) = x;
    }
    return v;
}

inline Control random_control(std::size_t grid, std::size_t k, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Control u(grid, k);
    for (Eigen::Index j = 0; j < u.values().rows(); ++j) {
        for (Eigen::Index i = 0; i < u.values().cols(); ++i) {
            u.values()(j, i) = scale * normal(rng);
        }
    }
    return u;
}

// Cell-midpoint samples of a fixed smooth two-component signal.
inline Control smooth_control(std::size_t grid, double scale = 1.0) {
    Control u(grid, 2);
    for (std::size_t j = 0; j < grid; ++j) {
        const double s = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
        u.values()(static_cast<Eigen::Index>(j), 0) = scale * (std::cos(6.0 * s) + 0.5);
        u.values()(static_cast<Eigen::Index>(j), 1) = scale * std::sin(4.0 * s);
    }
    return u;
}

// One loop of a circle of radius r, enclosing area pi r^2.
inline Control circle_control(std::size_t grid, double radius) {
    return arc_control(grid, 2.0 * std::numbers::pi * radius, 2.0 * std::numbers::pi);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

} // namespace subflow::testing
