#include "subflow/system.hpp"

#include "subflow/errors.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace subflow {

Tensor3 Tensor3::zero(std::size_t n) {
    Tensor3 t;
    t.slices.assign(n, Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    return t;
}

Vector Tensor3::apply(const Vector& p, const Vector& q) const {
    Vector out(static_cast<Eigen::Index>(slices.size()));
    for (std::size_t a = 0; a < slices.size(); ++a) {
        out(static_cast<Eigen::Index>(a)) = p.dot(slices[a] * q);
    }
    return out;
}

Covector Tensor3::contract(const Covector& lambda, const Vector& q) const {
    Covector out = Covector::Zero(q.size());
    for (std::size_t a = 0; a < slices.size(); ++a) {
        const double w = lambda(static_cast<Eigen::Index>(a));
        if (w != 0.0) {
            out.noalias() += w * (slices[a] * q).transpose();
        }
    }
    return out;
}

ControlSystem::ControlSystem(std::string name, std::size_t state_dim, std::size_t control_dim, FieldsFn fields,
                             JacobianFn jacobian, HessianFn hessian, std::optional<LipschitzHint> hint)
    : name_(std::move(name)),
      n_(state_dim),
      k_(control_dim),
      fields_(std::move(fields)),
      jacobian_(std::move(jacobian)),
      hessian_(std::move(hessian)),
      hint_(hint) {
    if (n_ == 0 || k_ == 0) {
        throw PreconditionError("state and control dimensions must be positive");
    }
}

Matrix ControlSystem::drift_jacobian(const Vector& x, const Vector& u) const {
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < k_; ++i) {
        const double ui = u(static_cast<Eigen::Index>(i));
        if (ui != 0.0) {
            a.noalias() += ui * jacobian_(x, i);
        }
    }
    return a;
}

Vector ControlSystem::lie_bracket(const Vector& x, std::size_t i, std::size_t j) const {
    const Matrix f = fields_(x);
    return jacobian_(x, j) * f.col(static_cast<Eigen::Index>(i)) -
           jacobian_(x, i) * f.col(static_cast<Eigen::Index>(j));
}

EndpointCost::EndpointCost(ValueFn value, GradientFn gradient, HessianFn hessian, std::optional<Vector> zero_set_hint)
    : value_(std::move(value)),
      gradient_(std::move(gradient)),
      hessian_(std::move(hessian)),
      target_(std::move(zero_set_hint)) {}

ControlSystem make_heisenberg() {
    auto fields = [](const Vector& x) {
        Matrix f(3, 2);
        f << 1.0, 0.0,
             0.0, 1.0,
             -0.5 * x(1), 0.5 * x(0);
        return f;
    };
    auto jacobian = [](const Vector&, std::size_t i) {
        Matrix j = Matrix::Zero(3, 3);
        if (i == 0) {
            j(2, 1) = -0.5;
        } else {
            j(2, 0) = 0.5;
        }
        return j;
    };
    auto hessian = [](const Vector&, std::size_t) { return Tensor3::zero(3); };
    return ControlSystem("heisenberg", 3, 2, fields, jacobian, hessian, LipschitzHint{0.5, 1.0});
}

ControlSystem make_grushin() {
    auto fields = [](const Vector& x) {
        Matrix f(2, 2);
        f << 1.0, 0.0,
             0.0, x(0);
        return f;
    };
    auto jacobian = [](const Vector&, std::size_t i) {
        Matrix j = Matrix::Zero(2, 2);
        if (i == 1) {
            j(1, 0) = 1.0;
        }
        return j;
    };
    auto hessian = [](const Vector&, std::size_t) { return Tensor3::zero(2); };
    return ControlSystem("grushin", 2, 2, fields, jacobian, hessian, LipschitzHint{1.0, 1.0});
}

ControlSystem make_linear(const Matrix& b) {
    if (!b.allFinite() || b.size() == 0) {
        throw PreconditionError("linear system needs a nonempty finite B");
    }
    const auto n = static_cast<std::size_t>(b.rows());
    double growth = 0.0;
    for (Eigen::Index i = 0; i < b.cols(); ++i) {
        growth = std::max(growth, b.col(i).norm());
    }
    auto fields = [b](const Vector&) { return b; };
    auto jacobian = [n](const Vector&, std::size_t) {
        return Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)).eval();
    };
    auto hessian = [n](const Vector&, std::size_t) { return Tensor3::zero(n); };
    return ControlSystem("linear", n, static_cast<std::size_t>(b.cols()), fields, jacobian, hessian,
                         LipschitzHint{0.0, growth});
}

EndpointCost make_quadratic_cost(const Vector& x1) {
    const auto n = x1.size();
    return EndpointCost([x1](const Vector& x) { return 0.5 * (x - x1).squaredNorm(); },
                        [x1](const Vector& x) { return Covector((x - x1).transpose()); },
                        [n](const Vector&) { return Matrix::Identity(n, n).eval(); }, x1);
}

namespace {

// Exact evaluation of polynomial tables and their first and second derivatives.
class PolynomialFields {
public:
    PolynomialFields(std::size_t n, std::size_t k, PolynomialTable table) : n_(n), k_(k), table_(std::move(table)) {}

    Matrix fields(const Vector& x) const {
        Matrix f(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(k_));
        for (std::size_t i = 0; i < k_; ++i) {
            for (std::size_t a = 0; a < n_; ++a) {
                double s = 0.0;
                for (const auto& m : table_[i][a]) {
                    s += m.coef * monomial(x, m.powers, -1, -1);
                }
                f(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = s;
            }
        }
        return f;
    }

    Matrix jacobian(const Vector& x, std::size_t i) const {
        Matrix j = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
        for (std::size_t a = 0; a < n_; ++a) {
            for (const auto& m : table_.at(i)[a]) {
                for (std::size_t b = 0; b < n_; ++b) {
                    if (m.powers[b] > 0) {
                        j(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                            m.coef * monomial(x, m.powers, static_cast<int>(b), -1);
                    }
                }
            }
        }
        return j;
    }

    Tensor3 hessian(const Vector& x, std::size_t i) const {
        Tensor3 t = Tensor3::zero(n_);
        for (std::size_t a = 0; a < n_; ++a) {
            for (const auto& m : table_.at(i)[a]) {
                for (std::size_t b = 0; b < n_; ++b) {
                    for (std::size_t c = b; c < n_; ++c) {
                        const double d = m.coef * monomial(x, m.powers, static_cast<int>(b), static_cast<int>(c));
                        if (d != 0.0) {
                            const auto bi = static_cast<Eigen::Index>(b);
                            const auto ci = static_cast<Eigen::Index>(c);
                            t.slices[a](bi, ci) += d;
                            if (b != c) {
                                t.slices[a](ci, bi) += d;
                            }
                        }
                    }
                }
            }
        }
        return t;
    }

private:
    // Monomial value, optionally differentiated once by x_d1 and once by x_d2.
    double monomial(const Vector& x, const std::vector<int>& powers, int d1, int d2) const {
        double v = 1.0;
        for (std::size_t b = 0; b < n_; ++b) {
            int p = powers[b];
            double factor = 1.0;
            for (int d : {d1, d2}) {
                if (d == static_cast<int>(b)) {
                    if (p == 0) {
                        return 0.0;
                    }
                    factor *= p;
                    --p;
                }
            }
            v *= factor * std::pow(x(static_cast<Eigen::Index>(b)), p);
        }
        return v;
    }

    std::size_t n_;
    std::size_t k_;
    PolynomialTable table_;
};

std::size_t positive_size(const nlohmann::json& spec, const char* key) {
    if (!spec.contains(key) || !spec[key].is_number_integer() || spec[key].get<long long>() <= 0) {
        throw MalformedPolynomial(std::string("'") + key + "' must be a positive integer");
    }
    return static_cast<std::size_t>(spec[key].get<long long>());
}

} // namespace

ControlSystem make_polynomial(std::size_t state_dim, std::size_t control_dim, PolynomialTable table,
                              std::string name) {
    if (table.size() != control_dim) {
        throw MalformedPolynomial("expected " + std::to_string(control_dim) + " fields, got " +
                                  std::to_string(table.size()));
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].size() != state_dim) {
            throw MalformedPolynomial("field " + std::to_string(i) + " has " + std::to_string(table[i].size()) +
                                      " components, expected " + std::to_string(state_dim));
        }
        for (const auto& component : table[i]) {
            for (const auto& m : component) {
                if (m.powers.size() != state_dim) {
                    throw MalformedPolynomial("monomial in field " + std::to_string(i) + " has " +
                                              std::to_string(m.powers.size()) + " powers, expected " +
                                              std::to_string(state_dim));
                }
                for (int p : m.powers) {
                    if (p < 0) {
                        throw MalformedPolynomial("negative power in field " + std::to_string(i));
                    }
                }
                if (!std::isfinite(m.coef)) {
                    throw MalformedPolynomial("non-finite coefficient in field " + std::to_string(i));
                }
            }
        }
    }
    auto impl = std::make_shared<const PolynomialFields>(state_dim, control_dim, std::move(table));
    return ControlSystem(
        std::move(name), state_dim, control_dim, [impl](const Vector& x) { return impl->fields(x); },
        [impl](const Vector& x, std::size_t i) { return impl->jacobian(x, i); },
        [impl](const Vector& x, std::size_t i) { return impl->hessian(x, i); });
}

ControlSystem load_system(const nlohmann::json& spec) {
    if (!spec.is_object()) {
        throw MalformedPolynomial("system spec must be an object");
    }
    if (spec.contains("builtin")) {
        const auto name = spec["builtin"].is_string() ? spec["builtin"].get<std::string>() : std::string{};
        if (name == "heisenberg") {
            return make_heisenberg();
        }
        if (name == "grushin") {
            return make_grushin();
        }
        if (name == "linear") {
            if (!spec.contains("B") || !spec["B"].is_array() || spec["B"].empty()) {
                throw MalformedPolynomial("linear system needs a nonempty 'B' matrix");
            }
            const auto& rows = spec["B"];
            const auto cols = rows[0].is_array() ? rows[0].size() : 0;
            if (cols == 0) {
                throw MalformedPolynomial("'B' rows must be nonempty arrays");
            }
            Matrix b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!rows[r].is_array() || rows[r].size() != cols) {
                    throw MalformedPolynomial("'B' is ragged");
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    b(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
                }
            }
            return make_linear(b);
        }
        throw UnknownSystem("unknown builtin system '" + name + "'");
    }

    const std::size_t n = positive_size(spec, "n");
    const std::size_t k = positive_size(spec, "k");
    if (!spec.contains("fields") || !spec["fields"].is_array()) {
        throw MalformedPolynomial("'fields' must be an array of k fields");
    }
    PolynomialTable table;
    for (const auto& field : spec["fields"]) {
        if (!field.is_array()) {
            throw MalformedPolynomial("each field must be an array of n components");
        }
        std::vector<std::vector<Monomial>> components;
        for (const auto& component : field) {
            if (!component.is_array()) {
                throw MalformedPolynomial("each component must be an array of monomial terms");
            }
            std::vector<Monomial> terms;
            for (const auto& term : component) {
                if (!term.is_object() || !term.contains("coef") || !term.contains("powers") ||
                    !term["coef"].is_number() || !term["powers"].is_array()) {
                    throw MalformedPolynomial("monomial term needs numeric 'coef' and array 'powers'");
                }
                Monomial m;
                m.coef = term["coef"].get<double>();
                for (const auto& p : term["powers"]) {
                    if (!p.is_number_integer()) {
                        throw MalformedPolynomial("powers must be integers");
                    }
                    m.powers.push_back(p.get<int>());
                }
                terms.push_back(std::move(m));
            }
            components.push_back(std::move(terms));
        }
        table.push_back(std::move(components));
    }
    return make_polynomial(n, k, std::move(table));
}

} // namespace subflow
