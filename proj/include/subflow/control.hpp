#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace subflow {

using Vector = Eigen::VectorXd;
using Covector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

/// Piecewise-constant control on the uniform grid of [0,1].
///
/// Row j holds the value on [j/N, (j+1)/N). Inner products and norms use the
/// L^2([0,1]) weighting 1/N, which is exact for this class of functions.
class Control {
public:
    Control() = default;
    Control(std::size_t grid_size, std::size_t control_dim);
    explicit Control(Matrix values);

    static Control zeros(std::size_t grid_size, std::size_t control_dim);
    static Control constant(std::size_t grid_size, const Vector& value);

    std::size_t grid_size() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t control_dim() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    double step() const noexcept { return 1.0 / static_cast<double>(grid_size()); }

    const Matrix& values() const noexcept { return values_; }
    Matrix& values() noexcept { return values_; }

    /// Value on subinterval j as a column vector.
    Vector at(std::size_t j) const { return values_.row(static_cast<Eigen::Index>(j)).transpose(); }

    bool all_finite() const { return values_.allFinite(); }

    /// Sample-and-hold refinement: every value repeated `factor` times.
    Control refined(std::size_t factor) const;

    Control& operator+=(const Control& other);
    Control& operator-=(const Control& other);
    Control& operator*=(double s);

    friend Control operator+(Control a, const Control& b) { return a += b; }
    friend Control operator-(Control a, const Control& b) { return a -= b; }
    friend Control operator*(double s, Control a) { return a *= s; }
    friend Control operator*(Control a, double s) { return a *= s; }

private:
    Matrix values_;
};

double l2_inner(const Control& a, const Control& b);
double l2_norm(const Control& u);

/// Largest finite element of |a - b| relative to max(|a|,|b|,floor), entrywise.
double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1e-12);

} // namespace subflow
