#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "roughflow/driver.hpp"
#include "roughflow/rng.hpp"
#include "roughflow/spectral.hpp"

using namespace roughflow;

namespace {

Eigen::VectorXd sample_function(const std::function<double(double)>& f, int L) {
    Eigen::VectorXd v(L + 1);
    for (int l = 0; l <= L; ++l) v[l] = f(static_cast<double>(l) / L);
    return v;
}

Eigen::VectorXd sampled_basis(int k, int L) {
    return sample_function([k](double t) { return basis_eval(k, t); }, L);
}

/// Exhaustive q-variation over all grid partitions; oracle for small L.
double brute_force_qvar(const Eigen::VectorXd& samples, double q) {
    const int L = static_cast<int>(samples.size()) - 1;
    double best = 0.0;
    // bitmask chooses which interior points appear in the partition
    for (unsigned mask = 0; mask < (1u << (L - 1)); ++mask) {
        double acc = 0.0;
        int prev = 0;
        for (int j = 1; j <= L; ++j) {
            if (j == L || (mask >> (j - 1)) & 1u) {
                acc += std::pow(std::abs(samples[j] - samples[prev]), q);
                prev = j;
            }
        }
        best = std::max(best, acc);
    }
    return std::pow(best, 1.0 / q);
}

Eigen::VectorXd brownian_path(int L, std::uint64_t seed) {
    const RoughDriver drv = sample_fbm(Grid(L), 1, 0.5, seed);
    return path_values(drv).col(0);
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& v, int window) {
    Eigen::VectorXd out(v.size());
    const int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - window), b = std::min(n - 1, i + window);
        out[i] = v.segment(a, b - a + 1).mean();
    }
    return out;
}

/// Synthesis from a coefficient prefix: sum_{k <= kmax} gamma_k e_k(t).
Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs, int kmax, int L) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(L + 1);
    for (int k = 0; k <= kmax; ++k)
        for (int l = 0; l <= L; ++l) out[l] += coeffs[k] * basis_eval(k, static_cast<double>(l) / L);
    return out;
}

}  // namespace

TEST_CASE("block index structure") {
    // blocks partition the positive indices and pairs never straddle blocks
    CHECK(block_lo(0) == 1);
    CHECK(block_hi(0) == 3);
    int expect = 1;
    for (int n = 0; n <= 6; ++n) {
        CHECK(block_lo(n) == expect);
        expect = block_hi(n);
        CHECK(block_hi(n) - block_lo(n) == (1 << (n + 1)));
    }
    for (int k = 1; k < 500; ++k) {
        const int n = block_of_index(k);
        CHECK(k >= block_lo(n));
        CHECK(k < block_hi(n));
    }
    for (int m = 0; m <= 200; ++m)
        CHECK(block_of_index(2 * m + 1) == block_of_index(2 * m + 2));
    // frequencies inside block n are exactly [2^n, 2^{n+1})
    for (int n = 0; n <= 5; ++n) {
        CHECK(basis_frequency(block_lo(n)) == (1 << n));
        CHECK(basis_frequency(block_hi(n) - 1) == (1 << (n + 1)) - 1);
    }
    CHECK_THROWS_AS(block_of_index(0), std::invalid_argument);
}

TEST_CASE("spectrum of pure modes and constants") {
    const int L = 512;
    const auto spec3 = dyadic_spectrum(sampled_basis(3, L), 4);
    for (int k = 0; k < spec3.coeffs.size(); ++k) {
        if (k == 3)
            CHECK(spec3.coeffs[k] == Catch::Approx(1.0).margin(1e-3));
        else
            CHECK(std::abs(spec3.coeffs[k]) < 1e-3);
    }

    const auto spec_const = dyadic_spectrum(sample_function([](double) { return 2.5; }, L), 4);
    CHECK(spec_const.coeffs[0] == Catch::Approx(2.5).margin(1e-12));
    CHECK(spec_const.coeffs.tail(spec_const.coeffs.size() - 1).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(dyadic_spectrum(sampled_basis(1, 32), 3), std::invalid_argument);  // Nyquist
}

TEST_CASE("spectrum of the ramp matches the exact Fourier integrals") {
    const int L = 2048;
    const auto spec = dyadic_spectrum(sample_function([](double t) { return t; }, L), 3);
    for (int freq = 1; freq <= 4; ++freq) {
        const int k_sin = 2 * freq;
        const double expect = -std::sqrt(2.0) / (2.0 * 3.14159265358979323846 * freq);
        CHECK(spec.coeffs[k_sin] == Catch::Approx(expect).margin(1e-3));
        CHECK(std::abs(spec.coeffs[2 * freq - 1]) < 1e-3);  // cosine part vanishes
    }
}

TEST_CASE("Parseval for band-limited functions") {
    const int L = 4096;
    Philox rng(17);
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(block_hi(3));
    for (int k = 0; k < coeffs.size(); ++k) coeffs[k] = rng.next_gaussian();
    const Eigen::VectorXd f = synthesize(coeffs, static_cast<int>(coeffs.size()) - 1, L);
    const auto spec = dyadic_spectrum(f, 3);
    const double parseval = spec.coeffs.squaredNorm();
    const double direct = discrete_l2_sq(f);
    CHECK(std::abs(parseval - direct) < 1e-3 * direct);
}

TEST_CASE("Sobolev surrogate norm on single blocks") {
    const int L = 1024;
    CHECK(sobolev_norm(dyadic_spectrum(Eigen::VectorXd::Zero(L + 1), 3), 0.5).value == 0.0);

    // e_k with k in I_n contributes 2^{n delta}
    for (int k : {1, 4, 9, 20}) {
        const int n = block_of_index(k);
        const auto spec = dyadic_spectrum(sampled_basis(k, L), 3);
        const double expect = std::pow(2.0, n * 0.7);
        CHECK(sobolev_norm(spec, 0.7).value == Catch::Approx(expect).epsilon(1e-3));
    }
    CHECK_THROWS_AS(sobolev_norm(DyadicSpectrum{Eigen::VectorXd::Zero(3), 0}, 1.5),
                    std::invalid_argument);
}

TEST_CASE("Brownian Sobolev surrogate concentrates at the per-block law") {
    // oracle: E gamma_cos^2 = 1/(2 pi mu)^2 and E gamma_sin^2 = 3/(2 pi mu)^2
    // for a Brownian path, so with delta = 1/2 the expected squared norm is
    // sum_n 2^n sum_{mu in [2^n, 2^{n+1})} 4 / (2 pi mu)^2.
    const int max_block = 4;
    double expect = 0.0;
    for (int n = 0; n <= max_block; ++n)
        for (int mu = 1 << n; mu < (1 << (n + 1)); ++mu)
            expect += std::pow(2.0, n) / (3.14159265358979323846 * 3.14159265358979323846 * mu * mu);

    const int L = 2048;
    const int samples = 500;
    std::vector<double> vals;
    for (int s = 0; s < samples; ++s) {
        const auto spec = dyadic_spectrum(brownian_path(L, 7000 + static_cast<std::uint64_t>(s)),
                                          max_block);
        const double v = sobolev_norm(spec, 0.5).value;
        vals.push_back(v * v);
    }
    const double mean = stats::mean(vals);
    const double se = stats::std_error_of_mean(vals);
    INFO("mean=" << mean << " expect=" << expect << " se=" << se);
    CHECK(std::abs(mean - expect) < 5.0 * se);
}

TEST_CASE("Bernstein ratios for single modes are exact") {
    const int L = 4096;
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int k : {1, 5, 11, 24}) {
        const int mu = basis_frequency(k);
        const int n = block_of_index(k);
        // derivative of the cosine mode is -2 pi mu times the sine partner
        const bool is_cos = (k % 2 == 1);
        const Eigen::VectorXd f = sampled_basis(k, L);
        Eigen::VectorXd fp(L + 1);
        for (int l = 0; l <= L; ++l) {
            const double t = static_cast<double>(l) / L;
            fp[l] = is_cos ? -two_pi * mu * basis_eval(k + 1, t) : two_pi * mu * basis_eval(k - 1, t);
        }
        const auto rep = bernstein_check(dyadic_spectrum(f, 4), dyadic_spectrum(fp, 4));
        REQUIRE_FALSE(rep.empty());
        const double expect = std::pow(2.0, n) / (two_pi * mu);
        CHECK(rep.min_ratio == Catch::Approx(expect).epsilon(1e-6));
        CHECK(rep.max_ratio == Catch::Approx(expect).epsilon(1e-6));
        CHECK(expect >= 1.0 / (4.0 * 3.14159265358979323846));
        CHECK(expect <= 1.0 / 3.14159265358979323846);
    }

    const auto empty = bernstein_check(dyadic_spectrum(Eigen::VectorXd::Zero(257), 3),
                                       dyadic_spectrum(Eigen::VectorXd::Zero(257), 3));
    CHECK(empty.empty());
}

TEST_CASE("white-noise block statistics at block three") {
    const DeltaBStats st = deltaB_statistics(3, 2000, 1 << 12, 99);
    // 16 coefficients, each standard normal
    CHECK(std::abs(st.mean_sq - 16.0) < 3.0 * st.se_mean);
    // sum of 16 chi-square-1 variables has variance 32
    CHECK(st.var_matches_chi2);
    CHECK(st.var_candidate_chi2 == 32.0);
    CHECK(st.var_candidate_alt == 16.0);
    CHECK(std::abs(st.var_sq - 32.0) < 8.0);
    // independent copies decorrelate
    CHECK(std::abs(st.cross_mean) < 3.0 * st.cross_se);

    CHECK_THROWS_AS(deltaB_statistics(3, 100, 64, 1), std::invalid_argument);  // resolution guard
}

TEST_CASE("q-variation basics") {
    // monotone path: single interval is optimal
    Eigen::VectorXd mono(5);
    mono << 0, 0.5, 0.6, 1.2, 2.0;
    for (double q : {1.0, 1.3, 2.0}) CHECK(qvar_norm(mono, q) == Catch::Approx(2.0));

    // q = 1 equals the total variation
    Eigen::VectorXd zig(5);
    zig << 0, 1, -1, 0.5, 0;
    CHECK(qvar_norm(zig, 1.0) == Catch::Approx(1 + 2 + 1.5 + 0.5));

    // sawtooth with K unit teeth at q = 2: alternating partition gives 2K
    const int teeth = 6;
    Eigen::VectorXd saw(2 * teeth + 1);
    for (int i = 0; i <= 2 * teeth; ++i) saw[i] = (i % 2 == 0) ? 0.0 : 1.0;
    CHECK(qvar_norm(saw, 2.0) == Catch::Approx(std::sqrt(2.0 * teeth)));

    CHECK_THROWS_AS(qvar_norm(mono, 0.5), std::invalid_argument);
}

TEST_CASE("q-variation equals exhaustive search on small grids") {
    Philox rng(88);
    for (int rep = 0; rep < 8; ++rep) {
        const int L = 8 + static_cast<int>(rng.next_u32() % 5);  // 8..12
        Eigen::VectorXd f(L + 1);
        for (int l = 0; l <= L; ++l) f[l] = rng.next_gaussian();
        for (double q : {1.2, 1.5, 1.9}) {
            const double dp = qvar_norm(f, q);
            const double brute = brute_force_qvar(f, q);
            CHECK(dp == Catch::Approx(brute).epsilon(1e-12));
        }
    }
}

TEST_CASE("projection gap of a single hat has the closed form") {
    const int L = 64;
    for (int n : {4, 8}) {
        const int stride = L / n;
        // hat of width 1/n, peak 1/(2 sqrt(n)), unit H^1 norm
        Eigen::VectorXd h = Eigen::VectorXd::Zero(L + 1);
        const double peak = 0.5 / std::sqrt(static_cast<double>(n));
        for (int l = 0; l <= stride; ++l) {
            const double w = static_cast<double>(l) / stride;
            h[l] = peak * (1.0 - std::abs(2.0 * w - 1.0));
        }
        const double q = 1.5;
        const PwlGapReport rep = pwl_projection_gap(h, {n}, q);
        CHECK(rep.h1 == Catch::Approx(1.0));
        const double expect = std::pow(2.0, 1.0 / q - 1.0) / std::sqrt(static_cast<double>(n));
        CHECK(rep.ratios[0] == Catch::Approx(expect));
    }
}

TEST_CASE("projection gap vanishes for already piecewise linear paths") {
    const int L = 128;
    Eigen::VectorXd h(L + 1);
    const int n = 8, stride = L / n;
    Philox rng(13);
    Eigen::VectorXd nodes(n + 1);
    for (int c = 0; c <= n; ++c) nodes[c] = rng.next_gaussian();
    for (int l = 0; l <= L; ++l) {
        const int c = std::min(l / stride, n - 1);
        const double w = static_cast<double>(l - c * stride) / stride;
        h[l] = (1.0 - w) * nodes[c] + w * nodes[c + 1];
    }
    const PwlGapReport rep = pwl_projection_gap(h, {n}, 1.5);
    CHECK(rep.ratios[0] < 1e-14);

    CHECK_THROWS_AS(pwl_projection_gap(h, {3}, 1.5), std::invalid_argument);  // non-divisible
    CHECK_THROWS_AS(pwl_projection_gap(h, {8}, 2.5), std::invalid_argument);
}

TEST_CASE("projection gap rate on smoothed rough paths") {
    const int L = 512;
    const double q = 1.5;
    for (int seed = 0; seed < 10; ++seed) {
        const Eigen::VectorXd rough = brownian_path(L, 3100 + static_cast<std::uint64_t>(seed));
        const Eigen::VectorXd smooth = moving_average(rough, L / 8);
        const PwlGapReport rep = pwl_projection_gap(smooth, {4, 8, 16, 32}, q);
        INFO("seed=" << seed << " slope=" << rep.slope);
        CHECK(rep.slope <= 1.0 / q - 1.0 + 0.15);
    }
}

TEST_CASE("irregularity probe keeps a positive floor on adversarial truncations") {
    const int L = 1024;
    const int max_block = 5;
    const double delta = 0.75;
    for (int seed = 0; seed < 20; ++seed) {
        std::vector<Eigen::VectorXd> channels;
        const RoughDriver drv = sample_fbm(Grid(L), 2, 0.5, 52000 + static_cast<std::uint64_t>(seed));
        const Eigen::MatrixXd vals = path_values(drv);
        channels.push_back(vals.col(0));
        channels.push_back(vals.col(1));

        // candidates: low-block truncations of the first channel, the best
        // low-frequency approximants of the path itself
        const auto spec0 = dyadic_spectrum(channels[0], max_block);
        std::vector<Eigen::VectorXd> family;
        for (int nt = 0; nt <= 3; ++nt)
            family.push_back(synthesize(spec0.coeffs, block_hi(nt) - 1, L));

        const Bh1l2Report rep = bh1l2_probe(channels, family, delta, max_block);
        REQUIRE(rep.entries.size() == family.size());
        CHECK(rep.floor_product > 0.0);
        for (const auto& e : rep.entries) {
            CHECK(e.m_h > 0.0);
            // the free-scaling relaxation is a certified lower bound
            CHECK(e.relaxation_lb <= e.m_h + 1e-9);
        }

        // doubling the candidates cannot drive the product under the floor
        std::vector<Eigen::VectorXd> scaled;
        for (const auto& h : family) scaled.push_back(2.0 * h);
        const Bh1l2Report rep2 = bh1l2_probe(channels, scaled, delta, max_block);
        CHECK(rep2.floor_product >= rep.floor_product * (1.0 - 1e-9));
    }
}

TEST_CASE("probe handles a single channel with sign mesh") {
    const int L = 600;
    const Eigen::VectorXd b = brownian_path(L, 4321);
    std::vector<Eigen::VectorXd> family = {Eigen::VectorXd::Zero(L + 1)};
    const Bh1l2Report rep = bh1l2_probe({b}, family, 0.75, 4);
    CHECK(rep.mesh_size == 2);
    CHECK(rep.entries[0].m_h > 0.0);  // a nonzero sample path has positive distance
    CHECK(rep.entries[0].h_norm == 0.0);

    CHECK_THROWS_AS(bh1l2_probe({b}, {}, 0.75, 4), std::invalid_argument);
    CHECK_THROWS_AS(bh1l2_probe({b}, family, 0.4, 4), std::invalid_argument);
}
