#pragma once

#include "subflow/control.hpp"

#include "json.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace subflow {

/// Second derivative of a vector field: slice a is the (symmetric) Hessian
/// of component a.
struct Tensor3 {
    std::vector<Matrix> slices;

    static Tensor3 zero(std::size_t n);

    std::size_t dim() const noexcept { return slices.size(); }

    /// Vector with components p^T H_a q.
    Vector apply(const Vector& p, const Vector& q) const;

    /// Row covector  q^T (sum_a lambda_a H_a).
    Covector contract(const Covector& lambda, const Vector& q) const;
};

/// Global constants for the growth assumptions on the fields:
/// |dF^i/dx|_2 <= lipschitz and |F^i(x)|_2 <= growth (|x|_2 + 1).
struct LipschitzHint {
    double lipschitz = 0.0;
    double growth = 0.0;
};

/// Driftless control-affine system  x' = sum_i u^i F^i(x)  on R^n.
///
/// Immutable after construction; evaluations are pure and thread-safe.
class ControlSystem {
public:
    using FieldsFn = std::function<Matrix(const Vector&)>;
    using JacobianFn = std::function<Matrix(const Vector&, std::size_t)>;
    using HessianFn = std::function<Tensor3(const Vector&, std::size_t)>;

    ControlSystem(std::string name, std::size_t state_dim, std::size_t control_dim, FieldsFn fields,
                  JacobianFn jacobian, HessianFn hessian, std::optional<LipschitzHint> hint = std::nullopt);

    const std::string& name() const noexcept { return name_; }
    std::size_t state_dim() const noexcept { return n_; }
    std::size_t control_dim() const noexcept { return k_; }
    const std::optional<LipschitzHint>& lipschitz_hint() const noexcept { return hint_; }

    /// n x k matrix whose columns are F^1(x) .. F^k(x).
    Matrix fields(const Vector& x) const { return fields_(x); }
    /// dF^i/dx at x, zero-based field index.
    Matrix jacobian(const Vector& x, std::size_t i) const { return jacobian_(x, i); }
    Tensor3 hessian(const Vector& x, std::size_t i) const { return hessian_(x, i); }

    /// F(x) u.
    Vector velocity(const Vector& x, const Vector& u) const { return fields_(x) * u; }
    /// A(x,u) = sum_i u^i dF^i/dx.
    Matrix drift_jacobian(const Vector& x, const Vector& u) const;
    /// [F^i, F^j](x) = dF^j/dx F^i - dF^i/dx F^j.
    Vector lie_bracket(const Vector& x, std::size_t i, std::size_t j) const;

private:
    std::string name_;
    std::size_t n_;
    std::size_t k_;
    FieldsFn fields_;
    JacobianFn jacobian_;
    HessianFn hessian_;
    std::optional<LipschitzHint> hint_;
};

/// Non-negative end-point cost a(x) with gradient (row covector) and Hessian.
class EndpointCost {
public:
    using ValueFn = std::function<double(const Vector&)>;
    using GradientFn = std::function<Covector(const Vector&)>;
    using HessianFn = std::function<Matrix(const Vector&)>;

    EndpointCost(ValueFn value, GradientFn gradient, HessianFn hessian,
                 std::optional<Vector> zero_set_hint = std::nullopt);

    double value(const Vector& x) const { return value_(x); }
    Covector gradient(const Vector& x) const { return gradient_(x); }
    Matrix hessian(const Vector& x) const { return hessian_(x); }
    const std::optional<Vector>& zero_set_hint() const noexcept { return target_; }

private:
    ValueFn value_;
    GradientFn gradient_;
    HessianFn hessian_;
    std::optional<Vector> target_;
};

/// Heisenberg group: F^1 = (1, 0, -y/2), F^2 = (0, 1, x/2).
ControlSystem make_heisenberg();

/// Grushin plane: F^1 = (1, 0), F^2 = (0, x).
ControlSystem make_grushin();

/// Constant fields F(x) = B.
ControlSystem make_linear(const Matrix& b);

/// a(x) = |x - x1|^2 / 2.
EndpointCost make_quadratic_cost(const Vector& x1);

/// One monomial  coef * prod_a x_a^powers[a].
struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;
};

/// Polynomial field table: fields[i][a] lists the monomials of component a of F^i.
using PolynomialTable = std::vector<std::vector<std::vector<Monomial>>>;

/// System whose fields are polynomials; derivatives are exact.
ControlSystem make_polynomial(std::size_t state_dim, std::size_t control_dim, PolynomialTable table,
                              std::string name = "polynomial");

/// Builds a system from a SystemSpec document:
///   {"builtin": "heisenberg" | "grushin"}
///   {"builtin": "linear", "B": [[...], ...]}
///   {"n": n, "k": k, "fields": [[[{"coef": c, "powers": [e1..en]}, ...] per component] per field]}
ControlSystem load_system(const nlohmann::json& spec);

} // namespace subflow
