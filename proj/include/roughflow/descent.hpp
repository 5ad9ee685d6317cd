#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "roughflow/common.hpp"
#include "roughflow/flow.hpp"

namespace roughflow {

/// Parameters of one gradient descent run. The loss over the pairs (x_m, y_m)
/// is the average of the per-pair quadratic endpoint losses with a shared
/// control.
struct DescentConfig {
    double step_size = 0.1;  // ds
    int iterations = 1000;   // K
    double stop_loss = 1e-12;
    int log_every = 1;
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
    // c_w is an O(L n^3) eigensolve, so it is sampled every
    // malliavin_every_logs-th telemetry point (0 disables it). Only computed
    // for single-pair runs.
    int malliavin_every_logs = 10;
    bool compute_malliavin = true;

    void validate() const {
        if (step_size <= 0.0) throw std::invalid_argument("step size must be positive");
        if (iterations < 1) throw std::invalid_argument("iteration count must be positive");
        if (log_every < 1) throw std::invalid_argument("log cadence must be positive");
        if (stop_loss < 0.0) throw std::invalid_argument("stop threshold must be nonnegative");
        if (pairs.empty()) throw std::invalid_argument("need at least one (x, y) pair");
    }
};

struct LogEntry {
    int iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double control_norm = 0.0;
    double c_w = std::numeric_limits<double>::quiet_NaN();  // NaN = not sampled
    double wall_ms = 0.0;

    bool has_c_w() const { return std::isfinite(c_w); }
};

/// Telemetry of one descent run; iterations strictly increasing, all entries
/// finite up to an optional abort marker.
struct RunRecord {
    std::vector<LogEntry> entries;
    bool aborted = false;
    int abort_iteration = -1;
    std::size_t abort_step = 0;

    double initial_loss() const {
        if (entries.empty()) throw std::logic_error("empty record");
        return entries.front().loss;
    }
    double final_loss() const {
        if (entries.empty()) throw std::logic_error("empty record");
        return entries.back().loss;
    }
};

/// Plain gradient descent on the control increments,
///   h^{k+1}(l,i) = h^k(l,i) - ds * dt * dLoss/dh(l,i),
/// started from h^0 = 0, which is steepest descent in the piecewise-constant
/// control geometry. Telemetry every log_every iterations plus the final one;
/// a non-finite state aborts the run and keeps the telemetry gathered so far.
inline RunRecord run_descent(const VectorFieldFamily& fam, const RoughDriver& driver,
                             const DescentConfig& cfg) {
    cfg.validate();
    const Grid& grid = driver.grid;
    const int L = grid.steps;
    const int d = fam.dim_control();
    const double dt = grid.dt();
    const auto n_pairs = cfg.pairs.size();

    std::vector<Cost> costs;
    costs.reserve(n_pairs);
    for (const auto& [x, y] : cfg.pairs) {
        if (x.size() != fam.dim_state() || y.size() != fam.dim_state())
            throw std::invalid_argument("pair dimension mismatch");
        costs.push_back(quadratic_cost(y));
    }

    RunRecord rec;
    ControlIncrements h(grid, d);
    const auto t0 = std::chrono::steady_clock::now();
    int log_index = 0;

    for (int k = 0; k <= cfg.iterations; ++k) {
        double loss = 0.0;
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(L, d);
        try {
            for (std::size_t m = 0; m < n_pairs; ++m) {
                const FlowResult res = adjoint_gradient(fam, cfg.pairs[m].first, driver, h, costs[m]);
                loss += res.loss;
                grad += res.adjoint;
            }
        } catch (const NonFiniteStateError& err) {
            rec.aborted = true;
            rec.abort_iteration = k;
            rec.abort_step = err.step();
            break;
        }
        loss /= static_cast<double>(n_pairs);
        grad /= static_cast<double>(n_pairs);
        if (!std::isfinite(loss)) {
            rec.aborted = true;
            rec.abort_iteration = k;
            break;
        }

        const bool stopping = (k == cfg.iterations) || (loss < cfg.stop_loss);
        if (k % cfg.log_every == 0 || stopping) {
            LogEntry e;
            e.iter = k;
            e.loss = loss;
            e.grad_norm = gradient_norm(grid, grad);
            e.control_norm = control_norm(h);
            if (cfg.compute_malliavin && cfg.malliavin_every_logs > 0 && n_pairs == 1 &&
                log_index % cfg.malliavin_every_logs == 0) {
                e.c_w = malliavin(fam, cfg.pairs[0].first, driver, h).c_w();
            }
            e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                            .count();
            rec.entries.push_back(e);
            ++log_index;
        }
        if (stopping) break;
        h.data -= cfg.step_size * dt * grad;
    }
    return rec;
}

/// CSV serialization: columns (iter, loss, grad_norm, control_norm, c_w,
/// wall_ms); c_w empty when not sampled; an abort shows up as a trailing
/// comment row.
inline std::string run_record_csv(const RunRecord& rec) {
    std::ostringstream out;
    out << "iter,loss,grad_norm,control_norm,c_w,wall_ms\n";
    for (const auto& e : rec.entries) {
        out << e.iter << ',' << format_double(e.loss) << ',' << format_double(e.grad_norm) << ','
            << format_double(e.control_norm) << ',';
        if (e.has_c_w()) out << format_double(e.c_w);
        out << ',' << format_double(e.wall_ms) << "\n";
    }
    if (rec.aborted)
        out << "# aborted iteration=" << rec.abort_iteration << " step=" << rec.abort_step << "\n";
    return out.str();
}

inline void write_run_record_csv(const RunRecord& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << run_record_csv(rec);
}

/// Certificate that the run obeys a Lojasiewicz bound degenerating like
/// 1/(1 + ||h||): fits the largest c with
///   grad_norm * (1 + ||h^k||) >= c * sqrt(loss^k)
/// at every logged iterate, and checks the implied reach bound
///   ||h^K|| <= exp(2 sqrt(loss^0) / c) - 1.
struct C1rReport {
    double c_fit = std::numeric_limits<double>::infinity();
    double radius_bound = 0.0;
    double realized_norm = 0.0;
    bool holds = true;
    int points_used = 0;
};

inline C1rReport certificate_c1r(const RunRecord& rec) {
    if (rec.entries.empty()) throw std::invalid_argument("empty run record");
    if (rec.aborted) throw std::invalid_argument("certificate needs a completed run");
    C1rReport rep;
    for (const auto& e : rec.entries) {
        if (e.loss <= 0.0) continue;  // at a minimum the bound is vacuous
        const double c = e.grad_norm * (1.0 + e.control_norm) / std::sqrt(e.loss);
        rep.c_fit = std::min(rep.c_fit, c);
        ++rep.points_used;
    }
    const double l0 = rec.initial_loss();
    rep.radius_bound =
        std::isinf(rep.c_fit) ? 0.0 : std::expm1(2.0 * std::sqrt(l0) / rep.c_fit);
    rep.realized_norm = rec.entries.back().control_norm;
    rep.holds = rep.realized_norm <= rep.radius_bound + 1e-9;
    return rep;
}

/// Log-linear fit of the loss decay over the final quarter of the logged
/// iterates. slope is d(ln loss)/dk, rate = exp(slope) the per-iteration
/// contraction factor.
struct DecayReport {
    double slope = 0.0;
    double rate = 1.0;
    double r2 = 0.0;
    int points = 0;
};

inline DecayReport certificate_decay(const RunRecord& rec) {
    const auto n = rec.entries.size();
    const std::size_t tail = (n + 3) / 4;
    if (tail < 10) throw std::invalid_argument("decay fit needs at least 10 tail points");
    std::vector<double> ks, logs;
    for (std::size_t i = n - tail; i < n; ++i) {
        const auto& e = rec.entries[i];
        if (e.loss <= 0.0) throw std::invalid_argument("decay fit needs positive losses in the tail");
        ks.push_back(static_cast<double>(e.iter));
        logs.push_back(std::log(e.loss));
    }
    const auto fit = stats::linear_fit(ks, logs);
    DecayReport rep;
    rep.slope = fit.slope;
    rep.rate = std::exp(fit.slope);
    rep.r2 = fit.r2;
    rep.points = static_cast<int>(tail);
    return rep;
}

}  // namespace roughflow
