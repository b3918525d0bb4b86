#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pmsda/alignment.hpp"
#include "pmsda/random.hpp"

#include "oracles.hpp"

using namespace pmsda;

namespace {

MmdConfig fixed(double bw, double lambda = 0.1) {
    MmdConfig c;
    c.bandwidth_mode = BandwidthMode::fixed;
    c.fixed_bandwidth = bw;
    c.lambda = lambda;
    return c;
}

std::vector<Vector> random_set(Rng& rng, std::size_t n, std::size_t dim, double shift = 0.0) {
    std::normal_distribution<double> n01;
    std::vector<Vector> out(n, Vector(dim));
    for (auto& v : out)
        for (auto& c : v) c = n01(rng) + shift;
    return out;
}

}  // namespace

TEST(MmdPair, SingletonSamePointIsMinusTwo) {
    const std::vector<Vector> x{{0.3, -1.0}};
    EXPECT_NEAR(mmd_pair(x, x, fixed(1.0)).value, -2.0, 1e-15);
    EXPECT_NEAR(mmd_pair(x, x, MmdConfig{}).value, -2.0, 1e-15);
}

TEST(MmdPair, DuplicatePairIsMinusOne) {
    const std::vector<Vector> x{{1.0, 2.0}, {1.0, 2.0}};
    EXPECT_NEAR(mmd_pair(x, x, MmdConfig{}).value, -1.0, 1e-15);
}

TEST(MmdPair, FarApartPairsApproachOne) {
    const std::vector<Vector> x{{0.0}, {0.0}};
    const std::vector<Vector> y{{50.0}, {50.0}};
    EXPECT_NEAR(mmd_pair(x, y, fixed(1.0)).value, 1.0, 1e-12);
}

TEST(MmdPair, MatchesBruteForceOracle) {
    Rng rng(2024);
    std::uniform_int_distribution<std::size_t> size(1, 6);
    std::uniform_real_distribution<double> bw(0.3, 3.0);
    for (int t = 0; t < 200; ++t) {
        const auto x = random_set(rng, size(rng), 3);
        const auto y = random_set(rng, size(rng), 3, 0.7);
        const double b = bw(rng);
        EXPECT_NEAR(mmd_pair(x, y, fixed(b)).value, (double)oracle::mmd(x, y, b), 1e-12);
        const auto med = mmd_pair(x, y, MmdConfig{});
        EXPECT_NEAR(med.value, (double)oracle::mmd(x, y, med.bandwidth), 1e-12);
    }
}

TEST(MmdPair, Symmetric) {
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto x = random_set(rng, 4, 2);
        const auto y = random_set(rng, 5, 2, 1.0);
        EXPECT_NEAR(mmd_pair(x, y, MmdConfig{}).value, mmd_pair(y, x, MmdConfig{}).value, 1e-12);
    }
}

TEST(MmdPair, MedianBandwidthSkipsZeroDistances) {
    const std::vector<Vector> x{{0.0}, {0.0}};
    const std::vector<Vector> y{{3.0}};
    EXPECT_DOUBLE_EQ(median_bandwidth(x, y), 3.0);
    EXPECT_DOUBLE_EQ(median_bandwidth(x, x), 1.0);
}

TEST(MmdPair, GradientsMatchFiniteDifferences) {
    Rng rng(77);
    const double h = 1e-5;
    const auto cfg = fixed(1.3);
    for (int t = 0; t < 20; ++t) {
        auto x = random_set(rng, 4, 3);
        auto y = random_set(rng, 3, 3, 0.5);
        const auto r = mmd_pair(x, y, cfg);
        auto check = [&](std::vector<Vector>& set, const std::vector<Vector>& grad) {
            for (std::size_t i = 0; i < set.size(); ++i)
                for (std::size_t d = 0; d < set[i].size(); ++d) {
                    const double keep = set[i][d];
                    set[i][d] = keep + h;
                    const double up = mmd_pair(x, y, cfg).value;
                    set[i][d] = keep - h;
                    const double dn = mmd_pair(x, y, cfg).value;
                    set[i][d] = keep;
                    const double fd = (up - dn) / (2 * h);
                    EXPECT_NEAR(grad[i][d], fd, 1e-4 * std::max(1.0, std::abs(fd)));
                }
        };
        check(x, r.grad_x);
        check(y, r.grad_y);
    }
}

TEST(MmdPair, NonDecreasingUnderShift) {
    Rng rng(4);
    const auto x = random_set(rng, 6, 2);
    const Vector u{0.6, 0.8};
    double prev = -1e9;
    for (double t : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        auto y = x;
        for (auto& v : y)
            for (std::size_t d = 0; d < 2; ++d) v[d] += t * u[d];
        const double val = mmd_pair(x, y, fixed(1.0)).value;
        EXPECT_GE(val, prev - 1e-15);
        prev = val;
    }
}

TEST(MmdPair, Errors) {
    const std::vector<Vector> empty;
    const std::vector<Vector> x{{1.0}};
    const std::vector<Vector> bad{{1.0, 2.0}};
    EXPECT_THROW(mmd_pair(empty, x, MmdConfig{}), DomainError);
    EXPECT_THROW(mmd_pair(x, empty, MmdConfig{}), DomainError);
    EXPECT_THROW(mmd_pair(x, bad, MmdConfig{}), DomainError);
}

TEST(ThreeDomain, LambdaZeroAndEmptyReplayReduceToPair) {
    Rng rng(12);
    const auto s = random_set(rng, 4, 2);
    const auto t = random_set(rng, 5, 2, 1.0);
    const auto r = random_set(rng, 3, 2, -1.0);
    const double st = mmd_pair(s, t, MmdConfig{}).value;
    MmdConfig zero;
    zero.lambda = 0.0;
    EXPECT_EQ(three_domain_discrepancy(s, t, r, zero).value, st);
    const auto no_r = three_domain_discrepancy(s, t, std::vector<Vector>{}, MmdConfig{});
    EXPECT_EQ(no_r.value, st);
    EXPECT_TRUE(no_r.grad_r.empty());
}

TEST(ThreeDomain, WeightedFixture) {
    const std::vector<Vector> s{{0, 0}, {1, 0}, {0, 1}};
    const std::vector<Vector> t{{0.5, 0.5}, {2, 1}};
    const std::vector<Vector> r{{0, 0.2}, {-1, 0}, {0.3, -0.4}, {1, 1}};
    const auto res = three_domain_discrepancy(s, t, r, fixed(1.0, 0.1));
    EXPECT_NEAR(res.source_target, -0.479328123297136827901717569045, 1e-12);
    EXPECT_NEAR(res.source_replay, -0.482178701021369241734822121926, 1e-12);
    EXPECT_NEAR(res.value, -0.527545993399273752075199781238, 1e-10);
}

TEST(ThreeDomain, GradientsAccumulateBothPairs) {
    Rng rng(31);
    const auto s = random_set(rng, 3, 2);
    const auto t = random_set(rng, 3, 2, 1.0);
    const auto r = random_set(rng, 2, 2, -0.5);
    const auto cfg = fixed(1.0, 0.25);
    const auto res = three_domain_discrepancy(s, t, r, cfg);
    const auto st = mmd_pair(s, t, cfg);
    const auto sr = mmd_pair(s, r, cfg);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t d = 0; d < 2; ++d)
            EXPECT_NEAR(res.grad_s[i][d], st.grad_x[i][d] + 0.25 * sr.grad_x[i][d], 1e-15);
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(res.grad_r[i][d], 0.25 * sr.grad_y[i][d], 1e-15);
}
