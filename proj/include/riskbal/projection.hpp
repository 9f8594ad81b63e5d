#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace riskbal {

inline void check_box_feasible(Eigen::Index n, double lower, double upper)
{
    const double nd = static_cast<double>(n);
    if (n < 1 || !(lower >= 0.0) || !(lower <= upper) || nd * lower > 1.0 + 1e-12 || nd * upper < 1.0 - 1e-12)
        throw FeasibilityError("infeasible weight bounds: need n*lower <= 1 <= n*upper with n=" + std::to_string(n) +
                               ", lower=" + std::to_string(lower) + ", upper=" + std::to_string(upper));
}

/// Euclidean projection onto {g : sum(g) = 1, lower <= g_i <= upper}.
///
/// The minimizer has the form g_i = clip(v_i - theta, lower, upper) for a scalar
/// shift theta; the clipped sum is non-increasing in theta, so theta is bracketed
/// and bisected. Once the bracket pins down which coordinates sit at a bound, theta
/// is recomputed in closed form from the free coordinates so the sum is exact to
/// rounding.
inline Eigen::VectorXd project_simplex_box(const Eigen::Ref<const Eigen::VectorXd>& v, double lower, double upper)
{
    const Eigen::Index n = v.size();
    check_box_feasible(n, lower, upper);
    for (Eigen::Index i = 0; i < n; ++i)
        if (!std::isfinite(v[i])) throw NumericError("projection: non-finite input");

    auto clipped_sum = [&](double theta) {
        double s = 0;
        for (Eigen::Index i = 0; i < n; ++i) s += std::clamp(v[i] - theta, lower, upper);
        return s;
    };

    double lo = v.minCoeff() - upper;  // every coordinate at upper: sum >= 1
    double hi = v.maxCoeff() - lower;  // every coordinate at lower: sum <= 1
    double theta = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        theta = 0.5 * (lo + hi);
        if (theta == lo || theta == hi) break;  // bracket exhausted
        const double s = clipped_sum(theta);
        if (std::abs(s - 1.0) < 1e-12) break;
        if (s > 1.0) lo = theta;
        else hi = theta;
    }

    // Exact shift for the active set found above.
    double fixed_sum = 0, free_sum = 0;
    Eigen::Index free_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = v[i] - theta;
        if (x <= lower) fixed_sum += lower;
        else if (x >= upper) fixed_sum += upper;
        else {
            free_sum += v[i];
            ++free_count;
        }
    }
    if (free_count > 0) {
        const double exact = (free_sum - (1.0 - fixed_sum)) / static_cast<double>(free_count);
        // Keep the closed form only if it leaves the active set unchanged.
        bool consistent = true;
        for (Eigen::Index i = 0; i < n && consistent; ++i) {
            const double a = v[i] - theta, b = v[i] - exact;
            const bool fa = a > lower && a < upper;
            if (fa && (b < lower - 1e-14 || b > upper + 1e-14)) consistent = false;
            if (!fa && ((a <= lower && b > lower + 1e-14) || (a >= upper && b < upper - 1e-14))) consistent = false;
        }
        if (consistent) theta = exact;
    }

    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = std::clamp(v[i] - theta, lower, upper);
    return g;
}

}  // namespace riskbal
