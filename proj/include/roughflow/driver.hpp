#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughflow/common.hpp"
#include "roughflow/rng.hpp"

namespace roughflow {

/// Uniform grid 0 = t_0 < ... < t_L = 1.
struct Grid {
    explicit Grid(int steps_) : steps(steps_) {
        if (steps < 1) throw std::invalid_argument("grid needs at least one step");
    }
    int steps;
    double dt() const { return 1.0 / steps; }
    double time(int l) const { return static_cast<double>(l) / steps; }
};

enum class DriverKind { Fbm, Zero, Deterministic };
enum class FbmMethod { CirculantEmbedding, Cholesky, None };

/// A sampled driving path on a uniform grid, stored as per-step increments
/// (rows = steps, columns = channels). For DriverKind::Fbm the increments are
/// fractional Gaussian noise with the requested Hurst index and the second
/// order drift correction of the integrator is active; the deterministic
/// kinds carry no such correction.
struct RoughDriver {
    Grid grid;
    double hurst = 0.5;
    Eigen::MatrixXd increments;  // L x d
    std::uint64_t seed = 0;
    DriverKind kind = DriverKind::Zero;
    FbmMethod method = FbmMethod::None;

    int channels() const { return static_cast<int>(increments.cols()); }
    bool correction_active() const { return kind == DriverKind::Fbm; }
};

namespace detail {

/// Autocovariance of fractional Gaussian noise at lag k for step size dt.
inline double fgn_autocov(int k, double hurst, double dt) {
    const double a = std::abs(static_cast<double>(k));
    const double twoH = 2.0 * hurst;
    return 0.5 * std::pow(dt, twoH) *
           (std::pow(a + 1.0, twoH) - 2.0 * std::pow(a, twoH) + std::pow(std::abs(a - 1.0), twoH));
}

inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

/// Complex FFT wrapper; plan creation is serialized because FFTW planning is
/// not thread-safe.
inline void fft_inplace(std::vector<std::complex<double>>& data) {
    const int n = static_cast<int>(data.size());
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_1d(n, ptr, ptr, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
}

/// Eigenvalues of the circulant embedding of the fGn covariance (size 2L).
inline std::vector<double> circulant_eigenvalues(int L, double hurst, double dt) {
    const int m = 2 * L;
    std::vector<std::complex<double>> c(static_cast<std::size_t>(m));
    for (int j = 0; j <= L; ++j) c[static_cast<std::size_t>(j)] = fgn_autocov(j, hurst, dt);
    for (int j = L + 1; j < m; ++j) c[static_cast<std::size_t>(j)] = fgn_autocov(m - j, hurst, dt);
    fft_inplace(c);
    std::vector<double> lam(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) lam[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j)].real();
    return lam;
}

/// True when the embedding eigenvalues are nonnegative up to roundoff.
inline bool embedding_is_nonnegative(const std::vector<double>& lam) {
    double lam_max = 0.0, lam_min = 0.0;
    for (double v : lam) {
        lam_max = std::max(lam_max, v);
        lam_min = std::min(lam_min, v);
    }
    return lam_min >= -1e-10 * std::max(lam_max, 1e-300);
}

/// One channel of fGn by circulant embedding (Davies-Harte). Tiny negative
/// eigenvalues from roundoff are clamped to zero.
inline void sample_fgn_circulant(const std::vector<double>& lam, int L, Philox& rng,
                                 Eigen::Ref<Eigen::VectorXd> out) {
    const int m = 2 * L;
    std::vector<std::complex<double>> v(static_cast<std::size_t>(m));
    const double a0 = rng.next_gaussian();
    v[0] = std::sqrt(std::max(lam[0], 0.0)) * a0;
    for (int j = 1; j < L; ++j) {
        const double aj = rng.next_gaussian();
        const double bj = rng.next_gaussian();
        const double s = std::sqrt(std::max(lam[static_cast<std::size_t>(j)], 0.0) / 2.0);
        v[static_cast<std::size_t>(j)] = std::complex<double>(s * aj, s * bj);
        v[static_cast<std::size_t>(m - j)] = std::conj(v[static_cast<std::size_t>(j)]);
    }
    const double aL = rng.next_gaussian();
    v[static_cast<std::size_t>(L)] = std::sqrt(std::max(lam[static_cast<std::size_t>(L)], 0.0)) * aL;

    fft_inplace(v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int l = 0; l < L; ++l) out[l] = v[static_cast<std::size_t>(l)].real() * scale;
}

/// Lower Cholesky factor of the L x L fGn covariance. Always applicable;
/// O(L^3) once per (L, H).
inline Eigen::MatrixXd fgn_cholesky_factor(int L, double hurst, double dt) {
    Eigen::MatrixXd cov(L, L);
    for (int r = 0; r < L; ++r)
        for (int c = 0; c < L; ++c) cov(r, c) = fgn_autocov(r - c, hurst, dt);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("fGn covariance Cholesky factorization failed");
    return llt.matrixL();
}

}  // namespace detail

struct FbmOptions {
    bool force_cholesky = false;  // test hook for the fallback path
};

/// Samples d independent fBm channels on the grid. Channel i consumes the
/// Philox stream (seed, i), so identical inputs give identical increment
/// matrices regardless of threading. The path covariance is the exact
/// E[B_s B_t] = (s^2H + t^2H - |t-s|^2H)/2.
inline RoughDriver sample_fbm(const Grid& grid, int d, double hurst, std::uint64_t seed,
                              const FbmOptions& opts = {}) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw std::invalid_argument("Hurst index must lie in (0,1)");
    if (d < 1) throw std::invalid_argument("need at least one channel");

    RoughDriver drv{grid, hurst, Eigen::MatrixXd::Zero(grid.steps, d), seed, DriverKind::Fbm,
                    FbmMethod::CirculantEmbedding};
    const int L = grid.steps;
    const double dt = grid.dt();

    std::vector<double> lam;
    bool use_circulant = !opts.force_cholesky;
    if (use_circulant) {
        lam = detail::circulant_eigenvalues(L, hurst, dt);
        use_circulant = detail::embedding_is_nonnegative(lam);
    }
    drv.method = use_circulant ? FbmMethod::CirculantEmbedding : FbmMethod::Cholesky;

    Eigen::MatrixXd chol;
    if (!use_circulant) chol = detail::fgn_cholesky_factor(L, hurst, dt);
    for (int i = 0; i < d; ++i) {
        Philox rng(seed, static_cast<std::uint64_t>(i));
        if (use_circulant) {
            detail::sample_fgn_circulant(lam, L, rng, drv.increments.col(i));
        } else {
            Eigen::VectorXd z(L);
            for (int l = 0; l < L; ++l) z[l] = rng.next_gaussian();
            drv.increments.col(i) = chol * z;
        }
    }
    return drv;
}

/// All-zero increments; deterministic stand-in for tests.
inline RoughDriver zero_driver(const Grid& grid, int d) {
    if (d < 1) throw std::invalid_argument("need at least one channel");
    return RoughDriver{grid, 0.5, Eigen::MatrixXd::Zero(grid.steps, d), 0, DriverKind::Zero,
                       FbmMethod::None};
}

/// Driver with increments differenced from sampled path values ((L+1) x d).
inline RoughDriver deterministic_driver(const Grid& grid, const Eigen::MatrixXd& path_values) {
    if (path_values.rows() != grid.steps + 1)
        throw std::invalid_argument("path values must have L+1 rows");
    RoughDriver drv{grid, 0.5,
                    path_values.bottomRows(grid.steps) - path_values.topRows(grid.steps), 0,
                    DriverKind::Deterministic, FbmMethod::None};
    return drv;
}

/// Path values recovered from increments; row l is the prefix sum up to t_l,
/// row 0 is zero.
inline Eigen::MatrixXd path_values(const RoughDriver& driver) {
    const int L = driver.grid.steps;
    Eigen::MatrixXd vals(L + 1, driver.channels());
    vals.row(0).setZero();
    for (int l = 0; l < L; ++l) vals.row(l + 1) = vals.row(l) + driver.increments.row(l);
    return vals;
}

/// CSV dump, columns: t, w1..wd (path values).
inline void write_driver_csv(const RoughDriver& driver, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const Eigen::MatrixXd vals = path_values(driver);
    out << "t";
    for (int c = 0; c < driver.channels(); ++c) out << ",w" << (c + 1);
    out << "\n";
    for (int l = 0; l <= driver.grid.steps; ++l) {
        out << format_double(driver.grid.time(l));
        for (int c = 0; c < driver.channels(); ++c) out << "," << format_double(vals(l, c));
        out << "\n";
    }
}

}  // namespace roughflow
