#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"

using namespace riskbal;

namespace {

struct Data {
    std::vector<double> mu, se;
};

Data gibbs_data(std::uint64_t seed, std::size_t J, double tau = 0.03)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Data d;
    for (std::size_t j = 0; j < J; ++j) {
        const double se = 0.01 + 0.03 * std::abs(z(rng));
        d.se.push_back(se);
        d.mu.push_back(0.13 + tau * z(rng) + se * z(rng));
    }
    return d;
}

GibbsConfig small_config(std::uint64_t seed = 1)
{
    GibbsConfig g;
    g.iters = 3000;
    g.burn_in = 500;
    g.chains = 4;
    g.seed = seed;
    return g;
}

}  // namespace

TEST(Gibbs, ConjugateOracleWithFixedAlphaTau)
{
    const auto d = gibbs_data(1, 12);
    auto cfg = small_config();
    cfg.fixed_alpha = 0.12;
    cfg.fixed_tau = 0.025;
    const auto s = gibbs_shrinkage(d.mu, d.se, cfg);
    for (std::size_t j = 0; j < d.mu.size(); ++j) {
        const double pj = 1 / (d.se[j] * d.se[j]), pt = 1 / (0.025 * 0.025);
        const double mean = (d.mu[j] * pj + 0.12 * pt) / (pj + pt);
        const double sd = 1 / std::sqrt(pj + pt);
        EXPECT_LE(std::abs(s.hospitals[j].post_mean - mean), 3 * s.hospitals[j].mc_se) << j;
        EXPECT_NEAR(s.hospitals[j].post_sd, sd, 0.05 * sd) << j;
    }
    for (double a : s.alpha_draws) EXPECT_EQ(a, 0.12);
    for (double t : s.tau_draws) EXPECT_EQ(t, 0.025);
}

TEST(Gibbs, TinyStandardErrorsFollowData)
{
    auto d = gibbs_data(2, 10);
    for (auto& s : d.se) s = 1e-6;
    const auto s = gibbs_shrinkage(d.mu, d.se, small_config());
    for (std::size_t j = 0; j < d.mu.size(); ++j) EXPECT_NEAR(s.hospitals[j].post_mean, d.mu[j], 1e-5);
}

TEST(Gibbs, CompletePoolingAtTauZero)
{
    const auto d = gibbs_data(3, 15);
    auto cfg = small_config();
    cfg.fixed_tau = 0.0;
    const auto s = gibbs_shrinkage(d.mu, d.se, cfg);
    double num = 0, den = 0;
    for (std::size_t j = 0; j < d.mu.size(); ++j) {
        num += d.mu[j] / (d.se[j] * d.se[j]);
        den += 1 / (d.se[j] * d.se[j]);
    }
    const double pooled = num / den;
    for (const auto& h : s.hospitals) {
        EXPECT_DOUBLE_EQ(h.post_mean, s.hospitals[0].post_mean);
        EXPECT_LE(std::abs(h.post_mean - pooled), 3 * h.mc_se + 1e-12);
    }
}

TEST(Gibbs, WorstDecileProbabilitiesSumExactly)
{
    for (std::size_t J : {2u, 9u, 10u, 11u, 37u}) {
        const auto d = gibbs_data(4 + J, J);
        const auto s = gibbs_shrinkage(d.mu, d.se, small_config());
        const long long total = std::accumulate(s.worst_counts.begin(), s.worst_counts.end(), 0LL);
        EXPECT_EQ(s.worst_k, (J + 9) / 10);
        EXPECT_EQ(total, static_cast<long long>(s.worst_k) * s.total_draws);
        double p = 0;
        for (const auto& h : s.hospitals) {
            EXPECT_GE(h.prob_worst_decile, 0.0);
            EXPECT_LE(h.prob_worst_decile, 1.0);
            p += h.prob_worst_decile;
        }
        EXPECT_NEAR(p, static_cast<double>(s.worst_k), 1e-9);
    }
}

TEST(Gibbs, ShrinkageOrdering)
{
    const auto d = gibbs_data(5, 40);
    const auto s = gibbs_shrinkage(d.mu, d.se, small_config());
    // Draw-wise average of the precision-weighted grand mean, i.e. the posterior mean of alpha.
    const double g = std::accumulate(s.alpha_draws.begin(), s.alpha_draws.end(), 0.0) / static_cast<double>(s.alpha_draws.size());
    int violations = 0;
    for (std::size_t j = 0; j < d.mu.size(); ++j)
        if (std::abs(s.hospitals[j].post_mean - g) > std::abs(d.mu[j] - g) + 3 * s.hospitals[j].mc_se) ++violations;
    EXPECT_EQ(violations, 0);
    EXPECT_TRUE(s.converged) << s.rhat_max;
}

TEST(Gibbs, OutliersFlaggedAsWorst)
{
    auto d = gibbs_data(6, 60, 0.01);
    for (std::size_t j : {3u, 17u, 42u}) {
        d.mu[j] = 0.23;
        d.se[j] = 0.01;
    }
    const auto s = gibbs_shrinkage(d.mu, d.se, small_config());
    for (std::size_t j : {3u, 17u, 42u}) EXPECT_GT(s.hospitals[j].prob_worst_decile, 0.9);
}

TEST(Gibbs, DeterministicAcrossThreadCounts)
{
    const auto d = gibbs_data(7, 20);
    auto cfg = small_config(99);
    cfg.threads = 1;
    const auto a = gibbs_shrinkage(d.mu, d.se, cfg);
    cfg.threads = 4;
    const auto b = gibbs_shrinkage(d.mu, d.se, cfg);
    for (std::size_t j = 0; j < d.mu.size(); ++j) {
        EXPECT_EQ(a.hospitals[j].post_mean, b.hospitals[j].post_mean);
        EXPECT_EQ(a.hospitals[j].ci_lo, b.hospitals[j].ci_lo);
    }
    cfg.seed = 100;
    const auto c = gibbs_shrinkage(d.mu, d.se, cfg);
    EXPECT_NE(a.hospitals[0].post_mean, c.hospitals[0].post_mean);
}

TEST(Gibbs, AffineEquivarianceUnboundedAlpha)
{
    const auto d = gibbs_data(8, 20);
    auto cfg = small_config();
    cfg.bound_alpha = false;
    const auto a = gibbs_shrinkage(d.mu, d.se, cfg);
    auto shifted = d.mu;
    for (auto& m : shifted) m += 5.0;
    const auto b = gibbs_shrinkage(shifted, d.se, cfg);
    for (std::size_t j = 0; j < d.mu.size(); ++j) {
        EXPECT_NEAR(b.hospitals[j].post_mean, a.hospitals[j].post_mean + 5.0, 1e-6);
        EXPECT_NEAR(b.hospitals[j].ci_hi, a.hospitals[j].ci_hi + 5.0, 1e-6);
        EXPECT_NEAR(b.hospitals[j].post_sd, a.hospitals[j].post_sd, 1e-6);
    }
}

TEST(Gibbs, BoundedAlphaStaysInUnitInterval)
{
    const auto d = gibbs_data(9, 10);
    const auto s = gibbs_shrinkage(d.mu, d.se, small_config());
    for (double a : s.alpha_draws) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
    for (double t : s.tau_draws) EXPECT_GT(t, 0.0);
}

TEST(Gibbs, InputValidation)
{
    auto cfg = small_config();
    EXPECT_THROW(gibbs_shrinkage({0.1}, {0.1}, cfg), DomainError);
    EXPECT_THROW(gibbs_shrinkage({0.1, 0.2}, {0.1}, cfg), AlignmentError);
    EXPECT_THROW(gibbs_shrinkage({0.1, 0.2}, {0.1, 0.0}, cfg), DomainError);
    cfg.burn_in = cfg.iters;
    EXPECT_THROW(gibbs_shrinkage({0.1, 0.2}, {0.1, 0.1}, cfg), DomainError);
}

TEST(GibbsDetail, SplitRhat)
{
    std::mt19937_64 rng(10);
    std::normal_distribution<double> z;
    std::vector<std::vector<double>> same(4, std::vector<double>(2000));
    for (auto& c : same)
        for (auto& x : c) x = z(rng);
    EXPECT_LT(detail::split_rhat(same), 1.01);
    auto apart = same;
    for (auto& x : apart[0]) x += 3.0;
    EXPECT_GT(detail::split_rhat(apart), 1.2);
    std::vector<std::vector<double>> flat(3, std::vector<double>(100, 0.5));
    EXPECT_DOUBLE_EQ(detail::split_rhat(flat), 1.0);
}

TEST(GibbsDetail, TruncatedNormalRespectsBounds)
{
    std::mt19937_64 rng(11);
    double sum = 0;
    for (int i = 0; i < 20000; ++i) {
        const double x = detail::truncated_normal(rng, 0.0, 1.0, 0.0, 1.0);
        ASSERT_GE(x, 0.0);
        ASSERT_LE(x, 1.0);
        sum += x;
    }
    // mean of N(0,1) truncated to [0,1]
    const double phi0 = 1 / std::sqrt(2 * M_PI), phi1 = std::exp(-0.5) / std::sqrt(2 * M_PI);
    EXPECT_NEAR(sum / 20000, (phi0 - phi1) / (dist::normal_cdf(1) - 0.5), 0.01);
}
