#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace riskbal {

struct GibbsConfig {
    int iters = 5000;  // per chain, including burn-in
    int burn_in = 1000;
    int chains = 4;
    std::uint64_t seed = 1;
    std::size_t threads = 0;

    // Prior support of the random-effect mean. Unbounded when bound_alpha is false.
    bool bound_alpha = true;
    double alpha_lo = 0.0;
    double alpha_hi = 1.0;

    // Test modes: hold a hyper-parameter fixed instead of sampling it. A fixed tau of 0
    // is complete pooling.
    std::optional<double> fixed_alpha;
    std::optional<double> fixed_tau;
};

struct HospitalPosterior {
    double post_mean = 0;
    double post_sd = 0;
    double ci_lo = 0;  // 2.5%
    double ci_hi = 0;  // 97.5%
    double prob_worst_decile = 0;
    double mc_se = 0;  // Monte Carlo standard error of post_mean (batch means)
};

struct PosteriorSummary {
    std::vector<HospitalPosterior> hospitals;
    std::vector<double> alpha_draws;  // merged over chains in chain order
    std::vector<double> tau_draws;
    std::vector<long long> worst_counts;  // per hospital
    long long total_draws = 0;
    std::size_t worst_k = 0;
    double rhat_max = 1.0;  // split-chain potential scale reduction, worst parameter
    bool converged = true;  // rhat_max <= 1.05
};

namespace detail {

// Normal(mean, sd) restricted to [lo, hi] by inverse CDF.
template <class Rng>
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi)
{
    const double a = dist::normal_cdf((lo - mean) / sd);
    const double b = dist::normal_cdf((hi - mean) / sd);
    if (!(b - a > 1e-300)) return std::clamp(mean, lo, hi);
    std::uniform_real_distribution<double> unif(a, b);
    double u = unif(rng);
    u = std::clamp(u, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
    return std::clamp(mean + sd * dist::normal_quantile(u), lo, hi);
}

// One slice-sampling update (stepping out, then shrinkage) of eta = log(tau) for the
// density tau^{-J} exp(-S / (2 tau^2)) under a flat prior on tau; the Jacobian of
// the log transform contributes one power of tau.
template <class Rng>
double slice_log_tau(Rng& rng, double eta, double J, double S)
{
    auto logp = [&](double e) { return -(J - 1.0) * e - 0.5 * S * std::exp(-2.0 * e); };
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    const double level = logp(eta) - expo(rng);
    constexpr double width = 1.0;
    double left = eta - width * unif(rng);
    double right = left + width;
    for (int k = 0; k < 100 && logp(left) > level; ++k) left -= width;
    for (int k = 0; k < 100 && logp(right) > level; ++k) right += width;
    for (int k = 0; k < 1000; ++k) {
        const double cand = left + (right - left) * unif(rng);
        if (logp(cand) > level) return cand;
        if (cand < eta) left = cand;
        else right = cand;
    }
    return eta;
}

inline double split_rhat(const std::vector<std::vector<double>>& chains)
{
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        if (h < 2) return 1.0;
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
    }
    const double m = static_cast<double>(halves.front().size());
    std::vector<double> means;
    double W = 0;
    for (const auto& s : halves) {
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / m;
        double v = 0;
        for (double x : s) v += (x - mean) * (x - mean);
        W += v / (m - 1);
        means.push_back(mean);
    }
    W /= static_cast<double>(halves.size());
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    double B = 0;
    for (double mu : means) B += (mu - grand) * (mu - grand);
    B *= m / static_cast<double>(means.size() - 1);
    if (!(W > 0.0)) return 1.0;
    const double var_plus = (m - 1) / m * W + B / m;
    return std::sqrt(var_plus / W);
}

// Monte Carlo standard error of the mean of a chain by non-overlapping batch means.
inline double batch_means_se(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    const std::size_t batches = std::min<std::size_t>(50, n / 10);
    if (batches < 2) return 0.0;
    const std::size_t len = n / batches;
    std::vector<double> bm(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < len; ++i) bm[b] += x[b * len + i];
        bm[b] /= static_cast<double>(len);
    }
    const double mean = std::accumulate(bm.begin(), bm.end(), 0.0) / static_cast<double>(batches);
    double v = 0;
    for (double m : bm) v += (m - mean) * (m - mean);
    v /= static_cast<double>(batches - 1);
    return std::sqrt(v / static_cast<double>(batches));
}

inline double quantile_sorted(const std::vector<double>& s, double q)
{
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    return i + 1 < s.size() ? s[i] * (1 - frac) + s[i + 1] * frac : s[i];
}

}  // namespace detail

/// Blocked Gibbs sampler for mu_hat_j ~ N(mu_j, se_j^2), mu_j ~ N(alpha, tau^2) with a
/// flat prior on tau > 0 and alpha uniform on [alpha_lo, alpha_hi]. Standard errors are
/// treated as known. Hospitals are indexed as given; ties in the worst-decile ranking
/// go to the lower index.
inline PosteriorSummary gibbs_shrinkage(const std::vector<double>& mu_hat, const std::vector<double>& se, const GibbsConfig& cfg)
{
    const std::size_t J = mu_hat.size();
    if (se.size() != J) throw AlignmentError("gibbs: estimates and standard errors differ in length");
    if (J < 2) throw DomainError("gibbs: need at least two hospitals");
    if (cfg.iters <= cfg.burn_in || cfg.burn_in < 0 || cfg.chains < 1) throw DomainError("gibbs: need iters > burn_in >= 0 and chains >= 1");
    for (double s : se)
        if (!(s > 0.0)) throw DomainError("gibbs: standard errors must be > 0");
    if (cfg.fixed_tau && !(*cfg.fixed_tau >= 0.0)) throw DomainError("gibbs: fixed tau must be >= 0");

    const double lo = cfg.bound_alpha ? cfg.alpha_lo : -std::numeric_limits<double>::infinity();
    const double hi = cfg.bound_alpha ? cfg.alpha_hi : std::numeric_limits<double>::infinity();
    const auto kept = static_cast<std::size_t>(cfg.iters - cfg.burn_in);
    const auto chains = static_cast<std::size_t>(cfg.chains);
    const std::size_t worst_k = (J + 9) / 10;

    double mean_hat = 0, var_hat = 0;
    for (double m : mu_hat) mean_hat += m;
    mean_hat /= static_cast<double>(J);
    for (double m : mu_hat) var_hat += (m - mean_hat) * (m - mean_hat);
    const double sd_hat = std::sqrt(var_hat / static_cast<double>(J - 1));
    double prec_sum = 0, prec_mean = 0;
    for (std::size_t j = 0; j < J; ++j) {
        prec_sum += 1.0 / (se[j] * se[j]);
        prec_mean += mu_hat[j] / (se[j] * se[j]);
    }
    prec_mean /= prec_sum;

    struct ChainDraws {
        std::vector<std::vector<double>> mu;  // [j][draw]
        std::vector<double> alpha, tau;
        std::vector<long long> worst;
    };
    std::vector<ChainDraws> out(chains);

    parallel_for(chains, cfg.threads, [&](std::size_t c) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(c), 0x5eedu};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> stdnorm(0.0, 1.0);

        auto& d = out[c];
        d.mu.assign(J, std::vector<double>());
        for (auto& v : d.mu) v.reserve(kept);
        d.alpha.reserve(kept);
        d.tau.reserve(kept);
        d.worst.assign(J, 0);

        std::vector<double> mu(mu_hat);
        double alpha = cfg.fixed_alpha ? *cfg.fixed_alpha : std::clamp(mean_hat, lo, hi);
        double tau = cfg.fixed_tau ? *cfg.fixed_tau : std::max(sd_hat, 1e-6) * (0.5 + 0.5 * static_cast<double>(c));
        std::vector<std::size_t> order(J);

        for (int it = 0; it < cfg.iters; ++it) {
            if (tau == 0.0) {
                // Complete pooling: every mu_j equals alpha, whose conditional given the
                // estimates is the precision-weighted mean.
                if (!cfg.fixed_alpha) alpha = detail::truncated_normal(rng, prec_mean, 1.0 / std::sqrt(prec_sum), lo, hi);
                std::fill(mu.begin(), mu.end(), alpha);
            } else {
                const double tau2 = tau * tau;
                for (std::size_t j = 0; j < J; ++j) {
                    const double pj = 1.0 / (se[j] * se[j]);
                    const double prec = pj + 1.0 / tau2;
                    const double m = (mu_hat[j] * pj + alpha / tau2) / prec;
                    mu[j] = m + stdnorm(rng) / std::sqrt(prec);
                }
                if (!cfg.fixed_alpha) {
                    const double m = std::accumulate(mu.begin(), mu.end(), 0.0) / static_cast<double>(J);
                    alpha = detail::truncated_normal(rng, m, tau / std::sqrt(static_cast<double>(J)), lo, hi);
                }
                if (!cfg.fixed_tau) {
                    double S = 0;
                    for (double m : mu) S += (m - alpha) * (m - alpha);
                    S = std::max(S, 1e-300);
                    tau = std::exp(detail::slice_log_tau(rng, std::log(tau), static_cast<double>(J), S));
                }
            }
            if (it < cfg.burn_in) continue;
            for (std::size_t j = 0; j < J; ++j) d.mu[j].push_back(mu[j]);
            d.alpha.push_back(alpha);
            d.tau.push_back(tau);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(worst_k), order.end(),
                              [&](std::size_t a, std::size_t b) { return mu[a] > mu[b] || (mu[a] == mu[b] && a < b); });
            for (std::size_t k = 0; k < worst_k; ++k) ++d.worst[order[k]];
        }
    });

    PosteriorSummary s;
    s.worst_k = worst_k;
    s.total_draws = static_cast<long long>(kept * chains);
    s.worst_counts.assign(J, 0);
    s.hospitals.resize(J);
    double rhat = 1.0;
    for (std::size_t j = 0; j < J; ++j) {
        std::vector<double> all;
        all.reserve(kept * chains);
        std::vector<std::vector<double>> per_chain;
        double mcse_sq = 0;
        for (const auto& d : out) {
            all.insert(all.end(), d.mu[j].begin(), d.mu[j].end());
            per_chain.push_back(d.mu[j]);
            s.worst_counts[j] += d.worst[j];
            const double b = detail::batch_means_se(d.mu[j]);
            mcse_sq += b * b;
        }
        rhat = std::max(rhat, detail::split_rhat(per_chain));
        const double n = static_cast<double>(all.size());
        const double mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
        double v = 0;
        for (double x : all) v += (x - mean) * (x - mean);
        std::sort(all.begin(), all.end());
        auto& h = s.hospitals[j];
        h.post_mean = mean;
        h.post_sd = n > 1 ? std::sqrt(v / (n - 1)) : 0.0;
        h.ci_lo = detail::quantile_sorted(all, 0.025);
        h.ci_hi = detail::quantile_sorted(all, 0.975);
        h.prob_worst_decile = static_cast<double>(s.worst_counts[j]) / static_cast<double>(s.total_draws);
        h.mc_se = std::sqrt(mcse_sq) / static_cast<double>(chains);
    }
    std::vector<std::vector<double>> a_chains, t_chains;
    for (const auto& d : out) {
        s.alpha_draws.insert(s.alpha_draws.end(), d.alpha.begin(), d.alpha.end());
        s.tau_draws.insert(s.tau_draws.end(), d.tau.begin(), d.tau.end());
        a_chains.push_back(d.alpha);
        t_chains.push_back(d.tau);
    }
    rhat = std::max({rhat, detail::split_rhat(a_chains), detail::split_rhat(t_chains)});
    s.rhat_max = rhat;
    s.converged = rhat <= 1.05;
    return s;
}

}  // namespace riskbal
