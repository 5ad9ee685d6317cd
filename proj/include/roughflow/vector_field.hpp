#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "roughflow/polynomial.hpp"

namespace roughflow {

enum class FamilyId { Step2Canonical, Step3Canonical, Custom };

/// A family of d polynomial driving fields V_1..V_d on R^n.
///
/// The fields are stored as sparse polynomials, so values, Jacobians and the
/// drift correction sum_i DV_i V_i (with its own Jacobian) are all exact.
/// Immutable after construction; safe to share across threads.
class VectorFieldFamily {
public:
    /// components[i][c] is component c of field V_i.
    VectorFieldFamily(int dim_state, int dim_control,
                      std::vector<std::vector<Polynomial>> components,
                      FamilyId id = FamilyId::Custom)
        : n_(dim_state), d_(dim_control), id_(id), components_(std::move(components)) {
        if (n_ <= 0 || d_ <= 0) throw std::invalid_argument("dimensions must be positive");
        if (static_cast<int>(components_.size()) != d_)
            throw std::invalid_argument("expected one component list per field");
        for (const auto& comps : components_)
            if (static_cast<int>(comps.size()) != n_)
                throw std::invalid_argument("each field needs dim_state components");
        build_derived();
    }

    int dim_state() const { return n_; }
    int dim_control() const { return d_; }
    FamilyId family_id() const { return id_; }

    /// V_i(x).
    Eigen::VectorXd eval(int i, const Eigen::VectorXd& x) const {
        check_field(i);
        Eigen::VectorXd v(n_);
        for (int c = 0; c < n_; ++c) v[c] = components_[i][c].eval(x);
        return v;
    }

    /// DV_i(x), the n x n Jacobian (row = component, column = variable).
    Eigen::MatrixXd jac(int i, const Eigen::VectorXd& x) const {
        check_field(i);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_, n_);
        for (const auto& [rc, poly] : jacobians_[i]) J(rc.first, rc.second) = poly.eval(x);
        return J;
    }

    /// DV_i(x)^T lambda without assembling the dense Jacobian.
    Eigen::VectorXd jac_transpose_apply(int i, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& lambda) const {
        check_field(i);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
        for (const auto& [rc, poly] : jacobians_[i]) out[rc.second] += poly.eval(x) * lambda[rc.first];
        return out;
    }

    Eigen::VectorXd jac_apply(int i, const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
        check_field(i);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
        for (const auto& [rc, poly] : jacobians_[i]) out[rc.first] += poly.eval(x) * v[rc.second];
        return out;
    }

    /// Drift correction field sum_i DV_i(x) V_i(x); the integrator scales it.
    Eigen::VectorXd correction(const Eigen::VectorXd& x) const {
        Eigen::VectorXd v(n_);
        for (int c = 0; c < n_; ++c) v[c] = correction_[c].eval(x);
        return v;
    }

    bool correction_is_zero() const { return correction_zero_; }

    /// Jacobian of the correction field.
    Eigen::MatrixXd correction_jac(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_, n_);
        for (const auto& [rc, poly] : correction_jac_) J(rc.first, rc.second) = poly.eval(x);
        return J;
    }

    Eigen::VectorXd correction_jac_transpose_apply(const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& lambda) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
        for (const auto& [rc, poly] : correction_jac_) out[rc.second] += poly.eval(x) * lambda[rc.first];
        return out;
    }

    Eigen::VectorXd correction_jac_apply(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
        for (const auto& [rc, poly] : correction_jac_) out[rc.first] += poly.eval(x) * v[rc.second];
        return out;
    }

    int max_component_degree() const {
        int deg = 0;
        for (const auto& comps : components_)
            for (const auto& p : comps) deg = std::max(deg, p.degree());
        return deg;
    }

private:
    void check_field(int i) const {
        if (i < 0 || i >= d_) throw std::out_of_range("field index out of range");
    }

    void build_derived() {
        using Entry = std::pair<std::pair<int, int>, Polynomial>;
        jacobians_.resize(components_.size());
        for (std::size_t i = 0; i < components_.size(); ++i) {
            for (int r = 0; r < n_; ++r) {
                const Polynomial& comp = components_[i][r];
                if (comp.is_zero()) continue;
                for (int c = 0; c < n_; ++c) {
                    Polynomial dp = comp.derivative(c);
                    if (!dp.is_zero()) jacobians_[i].push_back(Entry{{r, c}, std::move(dp)});
                }
            }
        }
        // correction_[r] = sum_i sum_c dV_i^r/dx_c * V_i^c
        correction_.assign(static_cast<std::size_t>(n_), Polynomial(n_));
        for (std::size_t i = 0; i < components_.size(); ++i) {
            for (const auto& [rc, dpoly] : jacobians_[i]) {
                const Polynomial& vc = components_[i][rc.second];
                if (vc.is_zero()) continue;
                correction_[rc.first] = correction_[rc.first] + dpoly * vc;
            }
        }
        correction_zero_ = true;
        for (int r = 0; r < n_; ++r) {
            if (!correction_[r].is_zero()) {
                correction_zero_ = false;
                for (int c = 0; c < n_; ++c) {
                    Polynomial dp = correction_[r].derivative(c);
                    if (!dp.is_zero()) correction_jac_.push_back(Entry{{r, c}, std::move(dp)});
                }
            }
        }
    }

    int n_;
    int d_;
    FamilyId id_;
    std::vector<std::vector<Polynomial>> components_;
    // sparse Jacobian entries per field: ((row, col), polynomial)
    std::vector<std::vector<std::pair<std::pair<int, int>, Polynomial>>> jacobians_;
    std::vector<Polynomial> correction_;
    std::vector<std::pair<std::pair<int, int>, Polynomial>> correction_jac_;
    bool correction_zero_ = false;
};

/// Index of the antisymmetric-part coordinate (j,i), j < i, in the state
/// layout of the step-2 family: the d base coordinates first, then the
/// upper-triangular pairs in row-major order (1,2),(1,3),...,(d-1,d).
inline int step2_area_index(int d, int j, int i) {
    if (!(0 <= j && j < i && i < d)) throw std::invalid_argument("need 0 <= j < i < d");
    // pairs with first index < j come first: j*(d-1) - j*(j+1)/2 + (i - j - 1)
    return d + j * (2 * d - j - 1) / 2 + (i - j - 1);
}

/// Step-2 nilpotent family on R^d x so(d): V_i moves the i-th base coordinate
/// and accumulates signed areas in the antisymmetric part,
///   V_i = e_i + 1/2 ( sum_{j<i} x_j d_(j,i) - sum_{i<j} x_j d_(i,j) ).
/// All double brackets vanish identically.
inline VectorFieldFamily make_step2_family(int d) {
    if (d < 1) throw std::invalid_argument("step-2 family needs d >= 1");
    const int n = d * (d + 1) / 2;
    std::vector<std::vector<Polynomial>> fields(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        std::vector<Polynomial> comps(static_cast<std::size_t>(n), Polynomial(n));
        comps[static_cast<std::size_t>(i)] = Polynomial::constant(n, 1.0);
        for (int j = 0; j < i; ++j)
            comps[static_cast<std::size_t>(step2_area_index(d, j, i))] =
                Polynomial::variable(n, j, 0.5);
        for (int j = i + 1; j < d; ++j)
            comps[static_cast<std::size_t>(step2_area_index(d, i, j))] =
                Polynomial::variable(n, j, -0.5);
        fields[static_cast<std::size_t>(i)] = std::move(comps);
    }
    return VectorFieldFamily(n, d, std::move(fields), FamilyId::Step2Canonical);
}

/// Step-3 nilpotent family on R^5 with d = 2:
///   V_1 = d_1 - x2/2 d_3 - (x1 x2/12 + x3/2) d_4 - x2^2/12 d_5
///   V_2 = d_2 + x1/2 d_3 + x1^2/12 d_4 + (x1 x2/12 - x3/2) d_5
/// so that [V_1,V_2] = d_3 + x1/2 d_4 + x2/2 d_5, [V_1,[V_1,V_2]] = d_4,
/// [V_2,[V_1,V_2]] = d_5.
inline VectorFieldFamily make_step3_family() {
    const int n = 5;
    std::vector<std::vector<Polynomial>> fields(2);

    std::vector<Polynomial> v1(n, Polynomial(n));
    v1[0] = Polynomial::constant(n, 1.0);
    v1[2] = Polynomial::variable(n, 1, -0.5);
    v1[3] = Polynomial(n);
    v1[3].add_term(-1.0 / 12.0, {{0, 1}, {1, 1}});
    v1[3].add_term(-0.5, {{2, 1}});
    v1[4] = Polynomial(n);
    v1[4].add_term(-1.0 / 12.0, {{1, 2}});
    fields[0] = std::move(v1);

    std::vector<Polynomial> v2(n, Polynomial(n));
    v2[1] = Polynomial::constant(n, 1.0);
    v2[2] = Polynomial::variable(n, 0, 0.5);
    v2[3] = Polynomial(n);
    v2[3].add_term(1.0 / 12.0, {{0, 2}});
    v2[4] = Polynomial(n);
    v2[4].add_term(1.0 / 12.0, {{0, 1}, {1, 1}});
    v2[4].add_term(-0.5, {{2, 1}});
    fields[1] = std::move(v2);

    return VectorFieldFamily(n, 2, std::move(fields), FamilyId::Step3Canonical);
}

/// Family of constant fields given by the columns of M (n x d). Useful as the
/// exactly solvable reference: the flow is a plain Euler sum and all step
/// Jacobians are the identity.
inline VectorFieldFamily make_constant_family(const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(M.rows());
    const int d = static_cast<int>(M.cols());
    std::vector<std::vector<Polynomial>> fields(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        std::vector<Polynomial> comps(static_cast<std::size_t>(n), Polynomial(n));
        for (int c = 0; c < n; ++c) comps[static_cast<std::size_t>(c)] = Polynomial::constant(n, M(c, i));
        fields[static_cast<std::size_t>(i)] = std::move(comps);
    }
    return VectorFieldFamily(n, d, std::move(fields), FamilyId::Custom);
}

struct BracketReport {
    Eigen::VectorXd point;
    int i = 0;
    int j = 0;
    Eigen::VectorXd bracket_value;      // [V_i, V_j](x) = DV_j(x) V_i(x) - DV_i(x) V_j(x)
    double double_bracket_max = 0.0;    // max_k || [[V_i,V_j], V_k](x) ||
};

/// [V_i, V_j](x) from the analytic Jacobians.
inline Eigen::VectorXd lie_bracket(const VectorFieldFamily& fam, int i, int j,
                                   const Eigen::VectorXd& x) {
    return fam.jac_apply(j, x, fam.eval(i, x)) - fam.jac_apply(i, x, fam.eval(j, x));
}

/// Evaluates [V_i,V_j](x) and the worst double bracket [[V_i,V_j],V_k](x)
/// over k. The double bracket needs the derivative of the bracket map, which
/// is taken by nested central differences (step fd_step) so that families
/// defined only through eval/jac remain checkable.
inline BracketReport bracket(const VectorFieldFamily& fam, int i, int j, const Eigen::VectorXd& x,
                             double fd_step = 1e-4) {
    BracketReport rep;
    rep.point = x;
    rep.i = i;
    rep.j = j;
    rep.bracket_value = lie_bracket(fam, i, j, x);

    const int n = fam.dim_state();
    // DW(x) by central differences of the bracket map W(y) = [V_i,V_j](y)
    Eigen::MatrixXd DW(n, n);
    for (int c = 0; c < n; ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += fd_step;
        xm[c] -= fd_step;
        DW.col(c) = (lie_bracket(fam, i, j, xp) - lie_bracket(fam, i, j, xm)) / (2.0 * fd_step);
    }
    rep.double_bracket_max = 0.0;
    for (int k = 0; k < fam.dim_control(); ++k) {
        const Eigen::VectorXd vk = fam.eval(k, x);
        // [[V_i,V_j],V_k] = DV_k W - DW V_k
        const Eigen::VectorXd db = fam.jac_apply(k, x, rep.bracket_value) - DW * vk;
        rep.double_bracket_max = std::max(rep.double_bracket_max, db.norm());
    }
    return rep;
}

}  // namespace roughflow
