#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "distributions.hpp"
#include "errors.hpp"

namespace riskbal {

inline double simple_mean(const std::vector<double>& v)
{
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Heterogeneity statistic sum (mu_j - mean)^2 / (se_j^2 + tau^2) around the simple
/// mean of the estimates.
inline double q_statistic(const std::vector<double>& mu_hat, const std::vector<double>& se, double tau)
{
    if (mu_hat.size() != se.size()) throw AlignmentError("q_statistic: estimates and standard errors differ in length");
    if (!(tau >= 0.0)) throw DomainError("q_statistic: tau must be >= 0");
    const double mbar = simple_mean(mu_hat);
    double q = 0;
    for (std::size_t j = 0; j < mu_hat.size(); ++j) {
        if (!(se[j] > 0.0)) throw DomainError("q_statistic: standard errors must be > 0");
        const double dev = mu_hat[j] - mbar;
        q += dev * dev / (se[j] * se[j] + tau * tau);
    }
    return q;
}

namespace detail {

// Root of Q(tau) = level on tau >= 0 for level < Q(0); Q is strictly decreasing.
inline double solve_q_equals(const std::vector<double>& mu_hat, const std::vector<double>& se, double level)
{
    double scale = 0;
    for (double s : se) scale = std::max(scale, s);
    double lo = 0.0, hi = std::max(scale, 1e-12);
    while (q_statistic(mu_hat, se, hi) >= level) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) throw NumericError("q inversion: failed to bracket the root");
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 500; ++it) {
        mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double q = q_statistic(mu_hat, se, mid);
        if (std::abs(q - level) < 1e-11) break;
        if (q > level) lo = mid;
        else hi = mid;
    }
    return mid;
}

}  // namespace detail

/// Moment-matching estimate: the tau where Q(tau) equals its null expectation J - 1,
/// or 0 when Q(0) is already at or below it.
inline double tau_point_estimate(const std::vector<double>& mu_hat, const std::vector<double>& se)
{
    if (mu_hat.size() < 2) throw DomainError("tau_point_estimate: need at least two hospitals");
    const double target = static_cast<double>(mu_hat.size() - 1);
    if (q_statistic(mu_hat, se, 0.0) <= target) return 0.0;
    return detail::solve_q_equals(mu_hat, se, target);
}

struct TauInterval {
    double lo = 0;
    double hi = 0;
    // Q(0) fell below the lower chi-square quantile: no tau is accepted by the test.
    // The interval is reported as (0, 0) and should not be read as covering 0.
    bool below_lower_quantile = false;
};

/// Test-inversion interval {tau : q_lo <= Q(tau) <= q_hi} with chi-square(J-1)
/// quantiles at alpha/2 and 1 - alpha/2.
inline TauInterval tau_ci(const std::vector<double>& mu_hat, const std::vector<double>& se, double level = 0.95)
{
    if (!(level > 0.0 && level < 1.0)) throw DomainError("tau_ci: level must lie in (0, 1)");
    if (mu_hat.size() < 2) throw DomainError("tau_ci: need at least two hospitals");
    const double df = static_cast<double>(mu_hat.size() - 1);
    const double alpha = 1.0 - level;
    const double q_hi = dist::chi_square_quantile(1.0 - alpha / 2.0, df);
    const double q_lo = dist::chi_square_quantile(alpha / 2.0, df);
    const double q0 = q_statistic(mu_hat, se, 0.0);
    TauInterval ci;
    ci.lo = q0 > q_hi ? detail::solve_q_equals(mu_hat, se, q_hi) : 0.0;
    ci.hi = q0 > q_lo ? detail::solve_q_equals(mu_hat, se, q_lo) : 0.0;
    ci.below_lower_quantile = q0 < q_lo;
    return ci;
}

inline bool covers(const TauInterval& ci, double tau) { return !ci.below_lower_quantile && ci.lo <= tau && tau <= ci.hi; }

/// Range of the central `coverage` share of hospitals under a normal random-effects
/// distribution.
inline std::pair<double, double> prediction_interval(double mu_bar, double tau_hat, double coverage = 0.8)
{
    if (!(coverage > 0.0 && coverage < 1.0)) throw DomainError("prediction_interval: coverage must lie in (0, 1)");
    const double z = dist::normal_quantile(0.5 * (1.0 + coverage));
    return {mu_bar - z * tau_hat, mu_bar + z * tau_hat};
}

/// Share of raw cross-hospital variation explained by case mix, 1 - tau_adj^2 / tau_raw^2.
inline std::optional<double> cross_hospital_r2(double tau_raw, double tau_adj)
{
    if (!(tau_raw > 0.0)) return std::nullopt;
    return 1.0 - (tau_adj * tau_adj) / (tau_raw * tau_raw);
}

struct HeterogeneityResult {
    double grand_mean = 0;
    double tau_hat = 0;
    TauInterval tau_ci;
    double q_at_zero = 0;
    std::pair<double, double> prediction_interval_80;
    std::optional<double> r2_cross;
};

inline HeterogeneityResult heterogeneity(const std::vector<double>& mu_hat, const std::vector<double>& se, double level = 0.95,
                                         double coverage = 0.8)
{
    HeterogeneityResult r;
    r.grand_mean = simple_mean(mu_hat);
    r.tau_hat = tau_point_estimate(mu_hat, se);
    r.tau_ci = tau_ci(mu_hat, se, level);
    r.q_at_zero = q_statistic(mu_hat, se, 0.0);
    r.prediction_interval_80 = prediction_interval(r.grand_mean, r.tau_hat, coverage);
    return r;
}

}  // namespace riskbal
