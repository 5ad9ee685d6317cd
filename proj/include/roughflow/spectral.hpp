#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "roughflow/common.hpp"
#include "roughflow/rng.hpp"

namespace roughflow {

// ---------------------------------------------------------------------------
// Trigonometric basis and dyadic blocks
// ---------------------------------------------------------------------------

/// Frequency of basis element k >= 1; the pair (2m+1, 2m+2) shares frequency
/// m+1 so that block I_n = [2^{n+1}-1, 2^{n+2}-1) collects exactly the
/// frequencies [2^n, 2^{n+1}). k = 0 is the constant mode.
inline int basis_frequency(int k) {
    if (k < 1) throw std::invalid_argument("frequency defined for k >= 1");
    return (k + 1) / 2;
}

/// Orthonormal trigonometric basis on [0,1]:
///   e_0 = 1, e_{2m+1} = sqrt(2) cos(2 pi (m+1) t), e_{2m+2} = sqrt(2) sin(2 pi (m+1) t).
inline double basis_eval(int k, double t) {
    if (k == 0) return 1.0;
    const double w = 2.0 * 3.14159265358979323846 * basis_frequency(k) * t;
    return (k % 2 == 1) ? std::sqrt(2.0) * std::cos(w) : std::sqrt(2.0) * std::sin(w);
}

inline int block_lo(int n) { return (1 << (n + 1)) - 1; }          // inclusive
inline int block_hi(int n) { return (1 << (n + 2)) - 1; }          // exclusive
inline int block_of_index(int k) {
    if (k < 1) throw std::invalid_argument("index 0 belongs to no block");
    int n = 0;
    while (k >= block_hi(n)) ++n;
    return n;
}

/// Coefficients against the trigonometric basis together with their dyadic
/// block energies ||Delta_n f||^2 = sum_{k in I_n} gamma_k^2.
struct DyadicSpectrum {
    Eigen::VectorXd coeffs;  // gamma_0 .. gamma_{2^{max_block+2}-2}
    int max_block = 0;

    double block_energy(int n) const {
        if (n < 0 || n > max_block) throw std::out_of_range("block index out of range");
        double s = 0.0;
        for (int k = block_lo(n); k < block_hi(n); ++k) s += coeffs[k] * coeffs[k];
        return s;
    }
};

/// Coefficients of a sampled function by trapezoidal quadrature of
/// int f e_k. samples holds f(t_l) on the uniform grid l = 0..L. The top
/// block must respect the Nyquist guard 2^{max_block+2} < L.
///
/// cos(m theta), sin(m theta) are generated by the Chebyshev recurrence in m,
/// two multiplies per grid point instead of a libm call.
inline DyadicSpectrum dyadic_spectrum(const Eigen::VectorXd& samples, int max_block) {
    const int L = static_cast<int>(samples.size()) - 1;
    if (L < 1) throw std::invalid_argument("need at least two samples");
    if (max_block < 0) throw std::invalid_argument("max_block must be nonnegative");
    if ((1 << (max_block + 2)) >= L)
        throw std::invalid_argument("resolution too low for requested blocks (Nyquist)");

    const int n_coeffs = block_hi(max_block);
    const int max_freq = basis_frequency(n_coeffs - 1);
    DyadicSpectrum spec;
    spec.max_block = max_block;
    spec.coeffs.resize(n_coeffs);

    // trapezoid weights folded into a copy of the samples
    Eigen::VectorXd w = samples / L;
    w[0] *= 0.5;
    w[L] *= 0.5;
    spec.coeffs[0] = w.sum();

    Eigen::VectorXd cos_prev(L + 1), sin_prev(L + 1), cos_cur(L + 1), sin_cur(L + 1);
    Eigen::VectorXd cos_base(L + 1), sin_base(L + 1);
    for (int l = 0; l <= L; ++l) {
        const double th = 2.0 * 3.14159265358979323846 * l / L;
        cos_base[l] = std::cos(th);
        sin_base[l] = std::sin(th);
    }
    cos_prev.setOnes();
    sin_prev.setZero();
    cos_cur = cos_base;
    sin_cur = sin_base;
    const double sqrt2 = std::sqrt(2.0);
    for (int m = 1; m <= max_freq; ++m) {
        const int k_cos = 2 * m - 1, k_sin = 2 * m;
        if (k_cos < n_coeffs) spec.coeffs[k_cos] = sqrt2 * w.dot(cos_cur);
        if (k_sin < n_coeffs) spec.coeffs[k_sin] = sqrt2 * w.dot(sin_cur);
        // advance frequency: trig(m+1) = 2 cos(base) trig(m) - trig(m-1)
        Eigen::VectorXd cos_next = 2.0 * cos_base.cwiseProduct(cos_cur) - cos_prev;
        Eigen::VectorXd sin_next = 2.0 * cos_base.cwiseProduct(sin_cur) - sin_prev;
        cos_prev.swap(cos_cur);
        sin_prev.swap(sin_cur);
        cos_cur.swap(cos_next);
        sin_cur.swap(sin_next);
    }
    return spec;
}

/// Discrete L^2 norm squared of the samples by the same trapezoid rule, for
/// Parseval comparisons.
inline double discrete_l2_sq(const Eigen::VectorXd& samples) {
    const int L = static_cast<int>(samples.size()) - 1;
    double acc = 0.5 * (samples[0] * samples[0] + samples[L] * samples[L]);
    for (int l = 1; l < L; ++l) acc += samples[l] * samples[l];
    return acc / L;
}

// ---------------------------------------------------------------------------
// Sobolev surrogate norm
// ---------------------------------------------------------------------------

struct SobolevNorm {
    double delta = 0.0;
    double value = 0.0;
};

/// Littlewood-Paley surrogate of the H^delta seminorm:
///   value^2 = sum_n 2^{2 n delta} ||Delta_n f||^2.
/// Equivalent to (but not equal to) the integral Sobolev-Slobodeckij form;
/// the constant mode is excluded, so the value is shift-invariant.
inline SobolevNorm sobolev_norm(const DyadicSpectrum& spec, double delta) {
    if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0,1]");
    double acc = 0.0;
    for (int n = 0; n <= spec.max_block; ++n)
        acc += std::pow(2.0, 2.0 * n * delta) * spec.block_energy(n);
    return SobolevNorm{delta, std::sqrt(acc)};
}

/// Same surrogate with exponent 1-delta; separate name because the exponent 0
/// (delta = 1, plain block-sum L^2) is allowed here.
inline double sobolev_norm_value(const DyadicSpectrum& spec, double exponent) {
    double acc = 0.0;
    for (int n = 0; n <= spec.max_block; ++n)
        acc += std::pow(2.0, 2.0 * n * exponent) * spec.block_energy(n);
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Bernstein two-sided ratio
// ---------------------------------------------------------------------------

struct BernsteinReport {
    std::vector<int> blocks;
    std::vector<double> ratios;  // ||Delta_n f|| * 2^n / ||Delta_n f'||
    double min_ratio = std::numeric_limits<double>::infinity();
    double max_ratio = 0.0;

    bool empty() const { return blocks.empty(); }
};

/// Per-block ratio ||Delta_n f|| 2^n / ||Delta_n f'|| from independently
/// computed spectra of f and its sampled derivative. Blocks whose derivative
/// energy is zero up to quadrature roundoff are skipped.
inline BernsteinReport bernstein_check(const DyadicSpectrum& f_spec,
                                       const DyadicSpectrum& fprime_spec) {
    if (f_spec.max_block != fprime_spec.max_block)
        throw std::invalid_argument("spectra must cover the same blocks");
    double total = 0.0;
    for (int n = 0; n <= fprime_spec.max_block; ++n) total += fprime_spec.block_energy(n);
    BernsteinReport rep;
    for (int n = 0; n <= f_spec.max_block; ++n) {
        const double ep = fprime_spec.block_energy(n);
        if (ep <= 1e-24 * total || ep <= 0.0) continue;
        const double ratio = std::sqrt(f_spec.block_energy(n) / ep) * std::pow(2.0, n);
        rep.blocks.push_back(n);
        rep.ratios.push_back(ratio);
        rep.min_ratio = std::min(rep.min_ratio, ratio);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// White-noise block statistics
// ---------------------------------------------------------------------------

/// Monte-Carlo moments of ||Delta_n (B)'||^2 = sum_{k in I_n} gamma_k^2 where
/// gamma_k = int e_k dB is taken as the left-point Riemann-Stieltjes sum
/// against simulated Brownian increments, plus the cross moment between
/// independent copies.
struct DeltaBStats {
    int block = 0;
    int samples = 0;
    int resolution = 0;
    double mean_sq = 0.0;
    double se_mean = 0.0;
    double var_sq = 0.0;
    // two candidate values for Var(||Delta_n(B)'||^2): the chi-square count
    // 2^{n+2} and the alternative 2^{n+1}; the flag says which one the sample
    // variance is closer to
    double var_candidate_chi2 = 0.0;
    double var_candidate_alt = 0.0;
    bool var_matches_chi2 = false;
    double cross_mean = 0.0;
    double cross_se = 0.0;
};

inline DeltaBStats deltaB_statistics(int n_block, int samples, int resolution, std::uint64_t seed) {
    if (n_block < 0) throw std::invalid_argument("block index must be nonnegative");
    if (samples < 2) throw std::invalid_argument("need at least two samples");
    if (resolution < (1 << (n_block + 4)))
        throw std::invalid_argument("resolution must be at least 2^(n+4)");
    if ((1 << (n_block + 2)) >= resolution)
        throw std::invalid_argument("resolution too low for requested block (Nyquist)");

    const int klo = block_lo(n_block), khi = block_hi(n_block);
    const int R = resolution;
    const double sqrt_dt = std::sqrt(1.0 / R);

    // basis values at the left grid points, one row per k in the block
    Eigen::MatrixXd basis(khi - klo, R);
    for (int k = klo; k < khi; ++k)
        for (int l = 0; l < R; ++l) basis(k - klo, l) = basis_eval(k, static_cast<double>(l) / R);

    std::vector<double> sq(static_cast<std::size_t>(samples));
    std::vector<double> cross(static_cast<std::size_t>(samples));
    Eigen::VectorXd incr(R), incr2(R);
    for (int s = 0; s < samples; ++s) {
        Philox rng(seed, static_cast<std::uint64_t>(2 * s));
        Philox rng2(seed, static_cast<std::uint64_t>(2 * s + 1));
        for (int l = 0; l < R; ++l) incr[l] = rng.next_gaussian() * sqrt_dt;
        for (int l = 0; l < R; ++l) incr2[l] = rng2.next_gaussian() * sqrt_dt;
        const Eigen::VectorXd g = basis * incr;
        const Eigen::VectorXd g2 = basis * incr2;
        sq[static_cast<std::size_t>(s)] = g.squaredNorm();
        cross[static_cast<std::size_t>(s)] = g.dot(g2);
    }

    DeltaBStats st;
    st.block = n_block;
    st.samples = samples;
    st.resolution = resolution;
    st.mean_sq = stats::mean(sq);
    st.var_sq = stats::variance(sq);
    st.se_mean = std::sqrt(st.var_sq / samples);
    st.var_candidate_alt = std::pow(2.0, n_block + 1);
    st.var_candidate_chi2 = std::pow(2.0, n_block + 2);
    st.var_matches_chi2 =
        std::abs(st.var_sq - st.var_candidate_chi2) < std::abs(st.var_sq - st.var_candidate_alt);
    st.cross_mean = stats::mean(cross);
    st.cross_se = stats::std_error_of_mean(cross);
    return st;
}

// ---------------------------------------------------------------------------
// Irregularity probe
// ---------------------------------------------------------------------------

/// For each candidate low-regularity path h, the probe minimizes the
/// H^{1-delta} surrogate distance between the span of the channels and h over
/// a unit-sphere mesh of channel combinations (the constant shift drops out
/// of the block norms), and reports the floor of m(h) (1 + ||h||_{H^delta})
/// over the family. A closed-form relaxation (free scaling of h) gives a
/// lower bound used as cross-validation of the mesh minimum.
struct Bh1l2Report {
    double delta = 0.0;
    int max_block = 0;
    int mesh_size = 0;

    struct Entry {
        double m_h = 0.0;         // mesh minimum of the surrogate distance
        double relaxation_lb = 0.0;  // closed-form lower bound
        double h_norm = 0.0;      // ||h||_{H^delta}
        double product = 0.0;     // m_h * (1 + h_norm)
    };
    std::vector<Entry> entries;
    double floor_product = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Unit-sphere mesh: signs for d = 1, uniform angles for d = 2, a Fibonacci
/// sphere for d = 3, seeded random directions beyond.
inline std::vector<Eigen::VectorXd> sphere_mesh(int d) {
    std::vector<Eigen::VectorXd> mesh;
    if (d == 1) {
        mesh.push_back(Eigen::VectorXd::Constant(1, 1.0));
        mesh.push_back(Eigen::VectorXd::Constant(1, -1.0));
    } else if (d == 2) {
        const int m = 64;
        for (int i = 0; i < m; ++i) {
            const double a = 2.0 * 3.14159265358979323846 * i / m;
            Eigen::VectorXd v(2);
            v << std::cos(a), std::sin(a);
            mesh.push_back(v);
        }
    } else if (d == 3) {
        const int m = 512;
        const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
        for (int i = 0; i < m; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / m;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double a = 2.0 * 3.14159265358979323846 * i / golden;
            Eigen::VectorXd v(3);
            v << r * std::cos(a), r * std::sin(a), z;
            mesh.push_back(v);
        }
    } else {
        Philox rng(0x5f3759df, static_cast<std::uint64_t>(d));
        const int m = 1 << (d + 6);
        for (int i = 0; i < m; ++i) {
            Eigen::VectorXd v(d);
            for (int c = 0; c < d; ++c) v[c] = rng.next_gaussian();
            mesh.push_back(v.normalized());
        }
    }
    return mesh;
}

}  // namespace detail

inline Bh1l2Report bh1l2_probe(const std::vector<Eigen::VectorXd>& channels,
                               const std::vector<Eigen::VectorXd>& h_family, double delta,
                               int max_block) {
    if (!(delta > 0.5 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (1/2, 1]");
    if (channels.empty()) throw std::invalid_argument("need at least one channel");
    if (h_family.empty()) throw std::invalid_argument("candidate family must be non-empty");

    const int d = static_cast<int>(channels.size());
    std::vector<DyadicSpectrum> ch_spec;
    ch_spec.reserve(channels.size());
    for (const auto& b : channels) ch_spec.push_back(dyadic_spectrum(b, max_block));

    // weighted Gram data of the channels: A(i,j) = sum_k w_k gamma^i_k gamma^j_k
    const int n_coeffs = block_hi(max_block);
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(n_coeffs);
    for (int k = 1; k < n_coeffs; ++k)
        weights[k] = std::pow(2.0, 2.0 * block_of_index(k) * (1.0 - delta));
    Eigen::MatrixXd G(n_coeffs, d);
    for (int i = 0; i < d; ++i) G.col(i) = ch_spec[static_cast<std::size_t>(i)].coeffs;
    Eigen::MatrixXd A = G.transpose() * weights.asDiagonal() * G;

    const auto mesh = detail::sphere_mesh(d);
    Bh1l2Report rep;
    rep.delta = delta;
    rep.max_block = max_block;
    rep.mesh_size = static_cast<int>(mesh.size());

    for (const auto& h : h_family) {
        const DyadicSpectrum h_spec = dyadic_spectrum(h, max_block);
        Eigen::VectorXd b = G.transpose() * weights.asDiagonal() * h_spec.coeffs;
        const double c_h = h_spec.coeffs.dot(weights.asDiagonal() * h_spec.coeffs);

        double best = std::numeric_limits<double>::infinity();
        for (const auto& lam : mesh) {
            const double q = lam.dot(A * lam) - 2.0 * b.dot(lam) + c_h;
            best = std::min(best, q);
        }

        // relaxation: free coefficient on h, solved in closed form
        double lb;
        if (c_h > 1e-300) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A - b * b.transpose() / c_h);
            lb = es.eigenvalues()(0);
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
            lb = es.eigenvalues()(0);
        }

        Bh1l2Report::Entry entry;
        entry.m_h = std::sqrt(std::max(best, 0.0));
        entry.relaxation_lb = std::sqrt(std::max(lb, 0.0));
        entry.h_norm = sobolev_norm(h_spec, delta).value;
        entry.product = entry.m_h * (1.0 + entry.h_norm);
        rep.entries.push_back(entry);
        rep.floor_product = std::min(rep.floor_product, entry.product);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// q-variation and piecewise-linear projection gap
// ---------------------------------------------------------------------------

/// Exact q-variation norm over partitions restricted to the sample grid,
///   sup sum |f_{t_i, t_{i+1}}|^q,
/// by dynamic programming over partition endpoints; O(L^2). For piecewise
/// linear paths grid partitions attain the supremum once vertices are
/// admissible, and q = 1 reduces to the total variation.
inline double qvar_norm(const Eigen::VectorXd& samples, double q) {
    if (q < 1.0) throw std::invalid_argument("q-variation needs q >= 1");
    const int L = static_cast<int>(samples.size()) - 1;
    if (L < 1) return 0.0;
    std::vector<double> best(static_cast<std::size_t>(L) + 1, 0.0);
    for (int j = 1; j <= L; ++j) {
        double bj = 0.0;
        for (int i = 0; i < j; ++i) {
            const double inc = std::abs(samples[j] - samples[i]);
            const double cand = best[static_cast<std::size_t>(i)] + std::pow(inc, q);
            bj = std::max(bj, cand);
        }
        best[static_cast<std::size_t>(j)] = bj;
    }
    return std::pow(best[static_cast<std::size_t>(L)], 1.0 / q);
}

/// Discrete H^1 norm of a sampled path: sqrt(sum (increment)^2 / dt).
inline double h1_norm(const Eigen::VectorXd& samples) {
    const int L = static_cast<int>(samples.size()) - 1;
    double acc = 0.0;
    for (int l = 0; l < L; ++l) {
        const double d = samples[l + 1] - samples[l];
        acc += d * d;
    }
    return std::sqrt(acc * L);
}

/// Piecewise-linear interpolation of the samples at an n-cell coarse grid
/// (which must divide the fine grid), evaluated back on the fine grid. This
/// is the H^1-orthogonal projection onto piecewise linear functions.
inline Eigen::VectorXd pwl_projection(const Eigen::VectorXd& samples, int coarse_n) {
    const int L = static_cast<int>(samples.size()) - 1;
    if (coarse_n < 1 || L % coarse_n != 0)
        throw std::invalid_argument("coarse grid must divide the fine grid");
    const int stride = L / coarse_n;
    Eigen::VectorXd out(samples.size());
    for (int c = 0; c < coarse_n; ++c) {
        const int a = c * stride, b = (c + 1) * stride;
        for (int l = a; l <= b; ++l) {
            const double w = static_cast<double>(l - a) / stride;
            out[l] = (1.0 - w) * samples[a] + w * samples[b];
        }
    }
    return out;
}

/// Projection gap ratios ||h - pi_n h||_{q-var} / ||h||_{H^1} over a sequence
/// of coarse resolutions, with the least-squares log-log slope.
struct PwlGapReport {
    double q = 0.0;
    double h1 = 0.0;
    std::vector<int> ns;
    std::vector<double> ratios;
    double slope = 0.0;
    double r2 = 0.0;
};

inline PwlGapReport pwl_projection_gap(const Eigen::VectorXd& samples, const std::vector<int>& ns,
                                       double q) {
    if (!(q > 1.0 && q < 2.0)) throw std::invalid_argument("q must lie in (1,2)");
    if (ns.empty()) throw std::invalid_argument("need at least one coarse resolution");
    PwlGapReport rep;
    rep.q = q;
    rep.h1 = h1_norm(samples);
    if (rep.h1 <= 0.0) throw std::invalid_argument("path must have positive H^1 norm");
    for (int n : ns) {
        const Eigen::VectorXd gap = samples - pwl_projection(samples, n);
        rep.ns.push_back(n);
        rep.ratios.push_back(qvar_norm(gap, q) / rep.h1);
    }
    if (ns.size() >= 2) {
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < rep.ns.size(); ++i) {
            lx.push_back(std::log(static_cast<double>(rep.ns[i])));
            ly.push_back(std::log(std::max(rep.ratios[i], 1e-300)));
        }
        const auto fit = stats::linear_fit(lx, ly);
        rep.slope = fit.slope;
        rep.r2 = fit.r2;
    }
    return rep;
}

}  // namespace roughflow
