#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "roughflow/common.hpp"
#include "roughflow/driver.hpp"
#include "roughflow/vector_field.hpp"

namespace roughflow {

/// Piecewise control increments h_{t_l,t_{l+1}} (rows = steps, cols = channels).
/// The optimization variable of the whole laboratory.
struct ControlIncrements {
    Grid grid;
    Eigen::MatrixXd data;  // L x d

    ControlIncrements(const Grid& g, int d) : grid(g), data(Eigen::MatrixXd::Zero(g.steps, d)) {}
    ControlIncrements(const Grid& g, Eigen::MatrixXd values) : grid(g), data(std::move(values)) {
        if (data.rows() != grid.steps) throw std::invalid_argument("control rows must equal grid steps");
    }

    int channels() const { return static_cast<int>(data.cols()); }
};

/// Norm of an increment matrix in the discrete control geometry: piecewise
/// constant rates h/dt measured in L^2, i.e. ||h||^2 = (1/dt) sum h^2.
inline double control_norm(const Grid& grid, const Eigen::MatrixXd& increments) {
    return std::sqrt(increments.squaredNorm() / grid.dt());
}

inline double control_norm(const ControlIncrements& h) { return control_norm(h.grid, h.data); }

/// Norm of the loss gradient in the same geometry. Given the Euclidean
/// partials g(l,i) = dLoss/dh(l,i), the Riesz representative is dt*g and its
/// control-space norm is sqrt(dt * sum g^2). Descent steps and the
/// Lojasiewicz diagnostics both use this inner product, so the discrete
/// energy identity dLoss/ds = -||grad||^2 holds to first order.
inline double gradient_norm(const Grid& grid, const Eigen::MatrixXd& partials) {
    return std::sqrt(grid.dt() * partials.squaredNorm());
}

/// Terminal cost with value and gradient; any C^2 cost fits.
struct Cost {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
};

/// g(z) = 1/2 |z - target|^2. Satisfies |grad g| = sqrt(2) sqrt(g).
inline Cost quadratic_cost(Eigen::VectorXd target) {
    Cost c;
    auto y = std::make_shared<Eigen::VectorXd>(std::move(target));
    c.value = [y](const Eigen::VectorXd& z) { return 0.5 * (z - *y).squaredNorm(); };
    c.grad = [y](const Eigen::VectorXd& z) { return Eigen::VectorXd(z - *y); };
    return c;
}

struct FlowResult {
    Eigen::MatrixXd trajectory;  // (L+1) x n
    Eigen::VectorXd endpoint;
    double loss = 0.0;
    Eigen::MatrixXd adjoint;  // L x d when filled, otherwise 0 x 0
};

namespace detail {

/// Scale of the second-order drift correction. Zero for deterministic test
/// drivers: the correction models the expected level-2 area of the random
/// driver, which a fixed path does not have.
inline double correction_scale(const RoughDriver& driver) {
    if (!driver.correction_active()) return 0.0;
    return 0.5 * std::pow(driver.grid.dt(), 2.0 * driver.hurst);
}

inline void check_shapes(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                         const RoughDriver& driver, const ControlIncrements& h) {
    if (x.size() != fam.dim_state()) throw std::invalid_argument("initial point dimension mismatch");
    if (driver.channels() != fam.dim_control() || h.channels() != fam.dim_control())
        throw std::invalid_argument("channel count mismatch");
    if (driver.grid.steps != h.grid.steps) throw std::invalid_argument("grid mismatch");
}

/// One step of the explicit recursion
///   X_{l+1} = X_l + sum_i V_i(X_l) (dw_i + dh_i) + kappa * sum_i DV_i(X_l) V_i(X_l).
inline Eigen::VectorXd step(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                            const Eigen::RowVectorXd& dw, const Eigen::RowVectorXd& dh,
                            double kappa) {
    Eigen::VectorXd next = x;
    for (int i = 0; i < fam.dim_control(); ++i) next += fam.eval(i, x) * (dw[i] + dh[i]);
    if (kappa != 0.0 && !fam.correction_is_zero()) next += kappa * fam.correction(x);
    return next;
}

inline Eigen::MatrixXd forward(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                               const RoughDriver& driver, const ControlIncrements& h) {
    check_shapes(fam, x, driver, h);
    const int L = driver.grid.steps;
    const double kappa = correction_scale(driver);
    Eigen::MatrixXd traj(L + 1, fam.dim_state());
    traj.row(0) = x.transpose();
    Eigen::VectorXd cur = x;
    for (int l = 0; l < L; ++l) {
        cur = step(fam, cur, driver.increments.row(l), h.data.row(l), kappa);
        if (!cur.allFinite()) throw NonFiniteStateError(static_cast<std::size_t>(l));
        traj.row(l + 1) = cur.transpose();
    }
    return traj;
}

/// Jacobian of one step with respect to the state.
inline Eigen::MatrixXd step_jacobian(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                                     const Eigen::RowVectorXd& dw, const Eigen::RowVectorXd& dh,
                                     double kappa) {
    const int n = fam.dim_state();
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < fam.dim_control(); ++i) A += fam.jac(i, x) * (dw[i] + dh[i]);
    if (kappa != 0.0 && !fam.correction_is_zero()) A += kappa * fam.correction_jac(x);
    return A;
}

/// A_l^T lambda without assembling A_l.
inline Eigen::VectorXd step_jacobian_transpose_apply(const VectorFieldFamily& fam,
                                                     const Eigen::VectorXd& x,
                                                     const Eigen::RowVectorXd& dw,
                                                     const Eigen::RowVectorXd& dh, double kappa,
                                                     const Eigen::VectorXd& lambda) {
    Eigen::VectorXd out = lambda;
    for (int i = 0; i < fam.dim_control(); ++i)
        out += fam.jac_transpose_apply(i, x, lambda) * (dw[i] + dh[i]);
    if (kappa != 0.0 && !fam.correction_is_zero())
        out += kappa * fam.correction_jac_transpose_apply(x, lambda);
    return out;
}

}  // namespace detail

/// Forward integration of the controlled recursion; loss from the cost at the
/// endpoint. Throws NonFiniteStateError with the first offending step index
/// if the state overflows.
inline FlowResult evolve(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                         const RoughDriver& driver, const ControlIncrements& h, const Cost& cost) {
    FlowResult res;
    res.trajectory = detail::forward(fam, x, driver, h);
    res.endpoint = res.trajectory.row(driver.grid.steps).transpose();
    res.loss = cost.value(res.endpoint);
    return res;
}

/// Forward pass plus exact reverse-mode differentiation of the discrete map,
/// including the drift correction term. adjoint(l,i) = dLoss/dh(l,i).
inline FlowResult adjoint_gradient(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                                   const RoughDriver& driver, const ControlIncrements& h,
                                   const Cost& cost) {
    FlowResult res = evolve(fam, x, driver, h, cost);
    const int L = driver.grid.steps;
    const int d = fam.dim_control();
    const double kappa = detail::correction_scale(driver);

    res.adjoint.resize(L, d);
    Eigen::VectorXd lambda = cost.grad(res.endpoint);
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::VectorXd xl = res.trajectory.row(l).transpose();
        for (int i = 0; i < d; ++i) res.adjoint(l, i) = fam.eval(i, xl).dot(lambda);
        if (l > 0)
            lambda = detail::step_jacobian_transpose_apply(fam, xl, driver.increments.row(l),
                                                           h.data.row(l), kappa, lambda);
    }
    return res;
}

/// Backward Jacobians J_{1<-t_l} of the discrete flow: J_{1<-t_L} = Id and
/// J_{1<-t_l} = J_{1<-t_{l+1}} A_l with A_l the step Jacobian. Entry l of the
/// returned list is J_{1<-t_l}.
inline std::vector<Eigen::MatrixXd> backward_jacobians(const VectorFieldFamily& fam,
                                                       const Eigen::VectorXd& x,
                                                       const RoughDriver& driver,
                                                       const ControlIncrements& h) {
    const Eigen::MatrixXd traj = detail::forward(fam, x, driver, h);
    const int L = driver.grid.steps;
    const int n = fam.dim_state();
    const double kappa = detail::correction_scale(driver);
    std::vector<Eigen::MatrixXd> jac(static_cast<std::size_t>(L) + 1);
    jac[static_cast<std::size_t>(L)] = Eigen::MatrixXd::Identity(n, n);
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::VectorXd xl = traj.row(l).transpose();
        const Eigen::MatrixXd A =
            detail::step_jacobian(fam, xl, driver.increments.row(l), h.data.row(l), kappa);
        jac[static_cast<std::size_t>(l)] = jac[static_cast<std::size_t>(l) + 1] * A;
    }
    return jac;
}

/// Gram matrix of the endpoint sensitivities in the control geometry and its
/// smallest eigenpair.
struct MalliavinReport {
    Eigen::MatrixXd matrix;      // n x n, symmetric PSD
    double smallest_eig = 0.0;   // clamped at zero
    Eigen::VectorXd eigvec;      // unit vector attaining it

    double c_w() const { return std::sqrt(std::max(smallest_eig, 0.0)); }
};

/// M = dt sum_l sum_i phi_i(t_l) phi_i(t_l)^T with
/// phi_i(t_l) = J_{1<-t_{l+1}} V_i(X_{t_l}): the Riemann-sum Gram matrix of
/// the maps h -> X_1 directional derivatives, i.e. the L^2 Malliavin matrix
/// of the endpoint evaluated along the discrete flow.
inline MalliavinReport malliavin(const VectorFieldFamily& fam, const Eigen::VectorXd& x,
                                 const RoughDriver& driver, const ControlIncrements& h) {
    const Eigen::MatrixXd traj = detail::forward(fam, x, driver, h);
    const std::vector<Eigen::MatrixXd> jac = backward_jacobians(fam, x, driver, h);
    const int L = driver.grid.steps;
    const int n = fam.dim_state();
    const double dt = driver.grid.dt();

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < L; ++l) {
        const Eigen::VectorXd xl = traj.row(l).transpose();
        const Eigen::MatrixXd& J = jac[static_cast<std::size_t>(l) + 1];
        for (int i = 0; i < fam.dim_control(); ++i) {
            const Eigen::VectorXd phi = J * fam.eval(i, xl);
            M.noalias() += dt * phi * phi.transpose();
        }
    }
    M = 0.5 * (M + M.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(M);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("Malliavin matrix eigensolve failed");
    MalliavinReport rep;
    rep.matrix = M;
    rep.smallest_eig = std::max(solver.eigenvalues()(0), 0.0);
    rep.eigvec = solver.eigenvectors().col(0);
    return rep;
}

struct LojCheck {
    bool at_minimum = false;
    double ratio = 0.0;  // ||grad|| / sqrt(loss)
    double bound = 0.0;  // sqrt(2) * c_w for the quadratic cost
};

/// Ratio ||grad||/sqrt(loss) in the control geometry against the certified
/// lower bound sqrt(2) c_w(h). loss == 0 is reported as at_minimum.
inline LojCheck loj_ratio(const MalliavinReport& report, const Grid& grid,
                          const Eigen::MatrixXd& adjoint, double loss) {
    LojCheck chk;
    chk.bound = std::sqrt(2.0) * report.c_w();
    if (loss <= 0.0) {
        chk.at_minimum = true;
        return chk;
    }
    chk.ratio = gradient_norm(grid, adjoint) / std::sqrt(loss);
    return chk;
}

}  // namespace roughflow
