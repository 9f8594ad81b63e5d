#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace riskbal::dist {

/// Regularized lower incomplete gamma P(a, x): power series below a + 1, modified
/// Lentz continued fraction for the upper tail above.
inline double regularized_gamma_p(double a, double x)
{
    if (!(a > 0.0)) throw DomainError("regularized_gamma_p: a must be > 0");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    constexpr double eps = 1e-16;
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term, ap = a;
        for (int n = 0; n < 10000; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::min(1.0, sum * std::exp(log_prefix));
    }
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

inline double chi_square_cdf(double x, double df) { return regularized_gamma_p(0.5 * df, 0.5 * x); }

/// Inverse of chi_square_cdf by bracketed bisection to machine resolution.
inline double chi_square_quantile(double prob, double df)
{
    if (!(prob > 0.0 && prob < 1.0)) throw DomainError("chi_square_quantile: probability must lie in (0, 1)");
    if (!(df > 0.0)) throw DomainError("chi_square_quantile: df must be > 0");
    double lo = 0.0, hi = std::max(1.0, df);
    while (chi_square_cdf(hi, df) < prob) {
        lo = hi;
        hi *= 2.0;
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (chi_square_cdf(mid, df) < prob) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Standard normal quantile: rational starting point refined by Halley steps on erfc.
inline double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: probability must lie in (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p > 1 - 0.02425) {
        const double q = std::sqrt(-2 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    for (int it = 0; it < 3; ++it) {
        const double e = normal_cdf(x) - p;
        const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
        x = x - u / (1 + x * u / 2);
    }
    return x;
}

/// Asymptotic Kolmogorov-Smirnov p-value with the Stephens small-sample correction.
inline double ks_pvalue(double d_stat, std::size_t n)
{
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d_stat;
    if (lambda < 1e-3) return 1.0;
    double sum = 0, sign = 1;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0;
    double p_value = 0;
};

/// One-sample KS test of `sample` against a continuous CDF.
inline KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf)
{
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, ks_pvalue(d, sample.size())};
}

}  // namespace riskbal::dist
