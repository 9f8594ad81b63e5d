#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "projection.hpp"

namespace riskbal {

struct SolverConfig {
    double lambda = 0.05;
    double lower = 0.0;
    double upper = 1.0;
    double tol_kkt = 1e-8;
    int max_iter = 50000;
    double ridge_epsilon = 1e-9;

    void validate() const
    {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("solver: lambda must be a finite value >= 0");
        if (!(lower >= 0.0)) throw DomainError("solver: lower bound must be >= 0");
        if (!(upper >= lower)) throw DomainError("solver: upper bound must be >= lower bound");
        if (!(tol_kkt > 0.0)) throw DomainError("solver: tol_kkt must be > 0");
        if (max_iter < 1) throw DomainError("solver: max_iter must be >= 1");
        if (!(ridge_epsilon >= 0.0)) throw DomainError("solver: ridge_epsilon must be >= 0");
    }
};

struct HospitalWeights {
    std::string hospital_id;
    Eigen::VectorXd gamma;
    double ess = 0;
    Eigen::VectorXd imbalance;  // sum_i gamma_i phi(X_i) - target
    double imbalance_l2 = 0;
    double kkt_residual = 0;
    int iterations = 0;
    bool converged = false;
};

struct HospitalFailure {
    std::string hospital_id;
    std::string message;
};

struct WeightSet {
    std::vector<HospitalWeights> hospitals;  // lexicographic by id
    std::vector<HospitalFailure> failures;
    SolverConfig config;
    double avg_ess = 0;

    const HospitalWeights& at(const std::string& id) const
    {
        auto it = std::lower_bound(hospitals.begin(), hospitals.end(), id,
                                   [](const HospitalWeights& h, const std::string& k) { return h.hospital_id < k; });
        if (it == hospitals.end() || it->hospital_id != id) throw LookupError("weights: no entry for hospital '" + id + "'");
        return *it;
    }

    bool all_converged() const
    {
        return failures.empty() && std::all_of(hospitals.begin(), hospitals.end(), [](const auto& h) { return h.converged; });
    }
};

// Balance objective ||target - phi^T g||^2 + penalty * ||g||^2 for one hospital.
inline double balance_objective(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& target,
                                double penalty, const Eigen::Ref<const Eigen::VectorXd>& gamma)
{
    return (phi.transpose() * gamma - target).squaredNorm() + penalty * gamma.squaredNorm();
}

inline Eigen::VectorXd balance_gradient(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& target,
                                        double penalty, const Eigen::Ref<const Eigen::VectorXd>& gamma)
{
    const Eigen::VectorXd r = phi.transpose() * gamma - target;
    return 2.0 * (phi * r) + 2.0 * penalty * gamma;
}

/// Projected-gradient fixed-point residual ||g - P(g - grad f(g))||_inf; zero exactly
/// at a constrained minimizer.
inline double kkt_residual(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& target,
                           double penalty, const Eigen::Ref<const Eigen::VectorXd>& gamma, double lower, double upper)
{
    const Eigen::VectorXd step = gamma - balance_gradient(phi, target, penalty, gamma);
    return (gamma - project_simplex_box(step, lower, upper)).lpNorm<Eigen::Infinity>();
}

// Largest eigenvalue of phi^T phi by power iteration on the smaller Gram matrix.
inline double max_singular_value_squared(const Eigen::Ref<const Eigen::MatrixXd>& phi)
{
    const Eigen::MatrixXd gram = phi.rows() <= phi.cols() ? Eigen::MatrixXd(phi * phi.transpose())
                                                          : Eigen::MatrixXd(phi.transpose() * phi);
    const Eigen::Index m = gram.rows();
    if (m == 0) return 0.0;
    Eigen::VectorXd v(m);
    for (Eigen::Index k = 0; k < m; ++k) v[k] = 1.0 + 0.5 * static_cast<double>(k + 1) / static_cast<double>(m);
    v.normalize();
    double est = 0;
    for (int it = 0; it < 1000; ++it) {
        Eigen::VectorXd w = gram * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = v.dot(w);
        v = w / norm;
        if (it > 0 && std::abs(next - est) <= 1e-10 * std::abs(next)) {
            est = next;
            break;
        }
        est = next;
    }
    // Rayleigh quotients approach the top eigenvalue from below; callers inflate.
    return est;
}

/// Minimizes ||target - phi^T g||^2 + (lambda n_j + ridge)||g||^2 subject to
/// sum(g) = 1 and lower <= g <= upper by accelerated projected gradient with
/// gradient-based momentum restart. Step size 1/L with L = 2(1.01 sigma_max^2 +
/// lambda n_j + ridge). Stops when the KKT residual reaches tol_kkt; otherwise
/// returns the best iterate with converged = false.
inline HospitalWeights solve_hospital(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& target,
                                      const SolverConfig& config, const Eigen::VectorXd* warm_start = nullptr)
{
    config.validate();
    const Eigen::Index n = phi.rows();
    if (n < 1) throw DomainError("solver: hospital has no patients");
    if (target.size() != phi.cols()) throw AlignmentError("solver: target length does not match basis width");
    if (!phi.allFinite() || !target.allFinite()) throw NumericError("solver: non-finite value in basis or target");
    check_box_feasible(n, config.lower, config.upper);

    const double penalty = config.lambda * static_cast<double>(n) + config.ridge_epsilon;
    double lipschitz = 2.0 * (1.01 * max_singular_value_squared(phi) + penalty);
    if (!(lipschitz > 0.0)) lipschitz = 1.0;
    const double step = 1.0 / lipschitz;

    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    if (warm_start && warm_start->size() == n && warm_start->allFinite())
        x = project_simplex_box(*warm_start, config.lower, config.upper);
    else
        x = project_simplex_box(x, config.lower, config.upper);

    HospitalWeights out;
    Eigen::VectorXd best = x;
    double best_res = kkt_residual(phi, target, penalty, x, config.lower, config.upper);
    int iterations = 0;

    Eigen::VectorXd y = x, x_next(n);
    double t = 1.0;
    while (best_res > config.tol_kkt && iterations < config.max_iter) {
        ++iterations;
        x_next = project_simplex_box(y - step * balance_gradient(phi, target, penalty, y), config.lower, config.upper);
        if ((y - x_next).dot(x_next - x) > 0.0) {
            t = 1.0;
            y = x_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_next + ((t - 1.0) / t_next) * (x_next - x);
            t = t_next;
        }
        x.swap(x_next);
        const double res = kkt_residual(phi, target, penalty, x, config.lower, config.upper);
        if (res < best_res) {
            best_res = res;
            best = x;
        }
    }

    out.gamma = std::move(best);
    out.ess = 1.0 / out.gamma.squaredNorm();
    out.imbalance = phi.transpose() * out.gamma - target;
    out.imbalance_l2 = out.imbalance.norm();
    out.kkt_residual = best_res;
    out.iterations = iterations;
    out.converged = best_res <= config.tol_kkt;
    return out;
}

struct SolveOptions {
    std::size_t threads = 0;
    const WeightSet* warm_start = nullptr;  // previous solution, e.g. the prior point of a lambda sweep
};

/// Solves every hospital independently. Outcomes are never consulted. A hospital
/// whose solve throws is recorded in `failures` and the rest continue.
inline WeightSet solve_all(const BasisMatrix& basis, const Cohort& cohort, const SolverConfig& config, const SolveOptions& opt = {})
{
    config.validate();
    const auto ids = cohort.hospital_ids();
    std::vector<std::optional<HospitalWeights>> slots(ids.size());
    std::vector<std::string> errors(ids.size());

    parallel_for(ids.size(), opt.threads, [&](std::size_t k) {
        try {
            const Eigen::MatrixXd phi = hospital_design(basis, cohort, ids[k]);
            const Eigen::VectorXd* warm = nullptr;
            if (opt.warm_start) {
                auto it = std::lower_bound(opt.warm_start->hospitals.begin(), opt.warm_start->hospitals.end(), ids[k],
                                           [](const HospitalWeights& h, const std::string& key) { return h.hospital_id < key; });
                if (it != opt.warm_start->hospitals.end() && it->hospital_id == ids[k]) warm = &it->gamma;
            }
            auto hw = solve_hospital(phi, basis.target(), config, warm);
            hw.hospital_id = ids[k];
            slots[k] = std::move(hw);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    });

    WeightSet ws;
    ws.config = config;
    double ess_sum = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (slots[k]) {
            ess_sum += slots[k]->ess;
            ws.hospitals.push_back(std::move(*slots[k]));
        } else {
            ws.failures.push_back({ids[k], errors[k]});
        }
    }
    ws.avg_ess = ws.hospitals.empty() ? 0.0 : ess_sum / static_cast<double>(ws.hospitals.size());
    return ws;
}

}  // namespace riskbal
