#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace roughflow {

/// Sparse multivariate monomial: coef * prod_j x[var_j]^exp_j.
struct Monomial {
    double coef = 0.0;
    std::vector<std::pair<int, int>> powers;  // (variable index, exponent > 0), sorted by index

    int degree() const {
        int d = 0;
        for (const auto& [v, e] : powers) d += e;
        return d;
    }
};

/// Sparse multivariate polynomial over R^nvars. Used to represent driving
/// vector fields so that Jacobians and products stay exact.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(int nvars) : nvars_(nvars) {}

    static Polynomial constant(int nvars, double c) {
        Polynomial p(nvars);
        if (c != 0.0) p.terms_.push_back({c, {}});
        return p;
    }

    static Polynomial variable(int nvars, int idx, double coef = 1.0) {
        Polynomial p(nvars);
        if (coef != 0.0) p.terms_.push_back({coef, {{idx, 1}}});
        return p;
    }

    int nvars() const { return nvars_; }
    const std::vector<Monomial>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    int degree() const {
        int d = 0;
        for (const auto& t : terms_) d = std::max(d, t.degree());
        return d;
    }

    void add_term(double coef, std::vector<std::pair<int, int>> powers) {
        if (coef == 0.0) return;
        std::sort(powers.begin(), powers.end());
        for (const auto& [v, e] : powers) {
            if (v < 0 || v >= nvars_) throw std::invalid_argument("monomial variable out of range");
            if (e <= 0) throw std::invalid_argument("monomial exponent must be positive");
        }
        terms_.push_back({coef, std::move(powers)});
        normalize();
    }

    double eval(const Eigen::VectorXd& x) const {
        double s = 0.0;
        for (const auto& t : terms_) {
            double m = t.coef;
            for (const auto& [v, e] : t.powers) {
                double p = x[v];
                for (int k = 1; k < e; ++k) p *= x[v];
                m *= p;
            }
            s += m;
        }
        return s;
    }

    /// Partial derivative with respect to variable idx.
    Polynomial derivative(int idx) const {
        Polynomial out(nvars_);
        for (const auto& t : terms_) {
            for (std::size_t j = 0; j < t.powers.size(); ++j) {
                if (t.powers[j].first != idx) continue;
                Monomial d;
                d.coef = t.coef * t.powers[j].second;
                d.powers = t.powers;
                if (--d.powers[j].second == 0) d.powers.erase(d.powers.begin() + static_cast<long>(j));
                out.terms_.push_back(std::move(d));
            }
        }
        out.normalize();
        return out;
    }

    Polynomial operator+(const Polynomial& o) const {
        check_same(o);
        Polynomial out(nvars_);
        out.terms_ = terms_;
        out.terms_.insert(out.terms_.end(), o.terms_.begin(), o.terms_.end());
        out.normalize();
        return out;
    }

    Polynomial operator*(const Polynomial& o) const {
        check_same(o);
        Polynomial out(nvars_);
        for (const auto& a : terms_) {
            for (const auto& b : o.terms_) {
                Monomial m;
                m.coef = a.coef * b.coef;
                std::map<int, int> exps;
                for (const auto& [v, e] : a.powers) exps[v] += e;
                for (const auto& [v, e] : b.powers) exps[v] += e;
                m.powers.assign(exps.begin(), exps.end());
                out.terms_.push_back(std::move(m));
            }
        }
        out.normalize();
        return out;
    }

    Polynomial scaled(double c) const {
        Polynomial out(nvars_);
        if (c == 0.0) return out;
        out.terms_ = terms_;
        for (auto& t : out.terms_) t.coef *= c;
        return out;
    }

private:
    void check_same(const Polynomial& o) const {
        if (nvars_ != o.nvars_) throw std::invalid_argument("polynomial arity mismatch");
    }

    // merge identical monomials, drop zero coefficients, keep a stable order
    void normalize() {
        std::map<std::vector<std::pair<int, int>>, double> acc;
        for (auto& t : terms_) {
            std::sort(t.powers.begin(), t.powers.end());
            acc[t.powers] += t.coef;
        }
        terms_.clear();
        for (auto& [pw, c] : acc) {
            if (c != 0.0) terms_.push_back({c, pw});
        }
    }

    int nvars_ = 0;
    std::vector<Monomial> terms_;
};

}  // namespace roughflow
