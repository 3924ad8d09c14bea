#include "subflow/control.hpp"

#include "subflow/errors.hpp"

#include <algorithm>
#include <cmath>

namespace subflow {

Control::Control(std::size_t grid_size, std::size_t control_dim)
    : values_(Matrix::Zero(static_cast<Eigen::Index>(grid_size), static_cast<Eigen::Index>(control_dim))) {}

Control::Control(Matrix values) : values_(std::move(values)) {}

Control Control::zeros(std::size_t grid_size, std::size_t control_dim) {
    return Control(grid_size, control_dim);
}

Control Control::constant(std::size_t grid_size, const Vector& value) {
    Control u(grid_size, static_cast<std::size_t>(value.size()));
    u.values_.rowwise() = value.transpose();
    return u;
}

Control Control::refined(std::size_t factor) const {
    Control out(grid_size() * factor, control_dim());
    for (Eigen::Index j = 0; j < values_.rows(); ++j) {
        for (std::size_t r = 0; r < factor; ++r) {
            out.values_.row(j * static_cast<Eigen::Index>(factor) + static_cast<Eigen::Index>(r)) = values_.row(j);
        }
    }
    return out;
}

Control& Control::operator+=(const Control& other) {
    if (other.values_.rows() != values_.rows() || other.values_.cols() != values_.cols()) {
        throw PreconditionError("control shapes differ");
    }
    values_ += other.values_;
    return *this;
}

Control& Control::operator-=(const Control& other) {
    if (other.values_.rows() != values_.rows() || other.values_.cols() != values_.cols()) {
        throw PreconditionError("control shapes differ");
    }
    values_ -= other.values_;
    return *this;
}

Control& Control::operator*=(double s) {
    values_ *= s;
    return *this;
}

double l2_inner(const Control& a, const Control& b) {
    if (a.grid_size() != b.grid_size() || a.control_dim() != b.control_dim()) {
        throw PreconditionError("control shapes differ");
    }
    return a.values().cwiseProduct(b.values()).sum() * a.step();
}

double l2_norm(const Control& u) {
    if (u.grid_size() == 0) {
        return 0.0;
    }
    return std::sqrt(u.values().squaredNorm() * u.step());
}

double max_rel_diff(const Matrix& a, const Matrix& b, double floor) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double scale = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
        }
    }
    return worst;
}

} // namespace subflow
