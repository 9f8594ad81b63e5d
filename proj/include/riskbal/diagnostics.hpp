#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "balance_solver.hpp"
#include "data_model.hpp"
#include "errors.hpp"
#include "linear_model.hpp"

namespace riskbal {

/// Variable-importance coefficients: slopes of a pooled OLS fit (with intercept) of
/// the outcome on the basis. The intercept is not returned.
inline Eigen::VectorXd variable_importance(const BasisMatrix& basis, const Eigen::VectorXd& outcomes)
{
    const Eigen::Index n = basis.phi.rows();
    if (outcomes.size() != n) throw AlignmentError("variable_importance: outcomes do not match basis rows");
    if (basis.p() >= n) throw SingularModelError("variable_importance: need more patients than basis columns");
    const Eigen::RowVectorXd mx = basis.phi.colwise().mean();
    const Eigen::MatrixXd xc = basis.phi.rowwise() - mx;
    const Eigen::VectorXd yc = outcomes.array() - outcomes.mean();
    std::vector<std::string> names;
    for (const auto& c : basis.columns) names.push_back(c.name);
    return solve_normal_equations(xc.transpose() * xc, xc.transpose() * yc, names);
}

struct HospitalBias {
    std::string hospital_id;
    double delta_raw = 0;
    double delta_weighted = 0;
    double imbalance_l2_raw = 0;
    double imbalance_l2_weighted = 0;
};

struct BiasReport {
    Eigen::VectorXd eta_hat;
    std::vector<HospitalBias> hospitals;
    std::optional<double> pbr;
    double avg_ess = 0;
};

/// Importance-weighted case-mix bias per hospital, before (unweighted means) and
/// after (balancing-weighted means) weighting, both against the basis target.
inline std::vector<HospitalBias> bias_deltas(const BasisMatrix& basis, const Cohort& cohort, const WeightSet& weights,
                                             const Eigen::VectorXd& eta_hat)
{
    std::vector<HospitalBias> out;
    for (const auto& hw : weights.hospitals) {
        const Eigen::MatrixXd phi = hospital_design(basis, cohort, hw.hospital_id);
        if (phi.rows() != hw.gamma.size()) throw AlignmentError("bias_deltas: weights misaligned for '" + hw.hospital_id + "'");
        const Eigen::VectorXd raw_gap = phi.colwise().mean().transpose() - basis.target();
        const Eigen::VectorXd w_gap = phi.transpose() * hw.gamma - basis.target();
        out.push_back({hw.hospital_id, raw_gap.dot(eta_hat), w_gap.dot(eta_hat), raw_gap.norm(), w_gap.norm()});
    }
    return out;
}

/// 100 * (1 - mean|delta_weighted| / mean|delta_raw|). Empty when the raw deltas all
/// vanish.
inline std::optional<double> percent_bias_reduction(const std::vector<HospitalBias>& deltas)
{
    double raw = 0, weighted = 0;
    for (const auto& d : deltas) {
        raw += std::abs(d.delta_raw);
        weighted += std::abs(d.delta_weighted);
    }
    if (deltas.empty() || !(raw > 0.0)) return std::nullopt;
    return 100.0 * (1.0 - weighted / raw);
}

inline BiasReport bias_report(const BasisMatrix& basis, const Cohort& cohort, const WeightSet& weights, const Eigen::VectorXd& eta_hat)
{
    BiasReport r;
    r.eta_hat = eta_hat;
    r.hospitals = bias_deltas(basis, cohort, weights, eta_hat);
    r.pbr = percent_bias_reduction(r.hospitals);
    r.avg_ess = weights.avg_ess;
    return r;
}

// Standardized mean differences per hospital and basis column.
struct BalanceRow {
    std::string hospital_id;
    std::string covariate;
    double smd_raw = 0;
    double smd_weighted = 0;
};

inline std::vector<BalanceRow> balance_table(const BasisMatrix& basis, const Cohort& cohort, const WeightSet& weights)
{
    std::vector<BalanceRow> out;
    for (const auto& hw : weights.hospitals) {
        const Eigen::MatrixXd phi = hospital_design(basis, cohort, hw.hospital_id);
        const Eigen::VectorXd raw = phi.colwise().mean().transpose() - basis.target();
        const Eigen::VectorXd wtd = phi.transpose() * hw.gamma - basis.target();
        for (Eigen::Index k = 0; k < basis.p(); ++k)
            out.push_back({hw.hospital_id, basis.columns[static_cast<std::size_t>(k)].name, raw[k], wtd[k]});
    }
    return out;
}

struct FrontierPoint {
    double lambda = 0;
    double pbr = 0;
    double avg_ess = 0;
    bool converged = true;
};

struct SweepError : Error {
    SweepError(const std::string& what, double lambda) : Error(what), lambda(lambda) {}
    double lambda;
};

/// Solves the weights along an ascending lambda grid, warm-starting each point from
/// the previous one, and reports PBR and average ESS per point.
inline std::vector<FrontierPoint> lambda_sweep(const BasisMatrix& basis, const Cohort& cohort, const std::vector<double>& grid,
                                               SolverConfig config, const Eigen::VectorXd& eta_hat, std::size_t threads = 0)
{
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] >= grid[k - 1])) throw DomainError("lambda_sweep: grid must be sorted ascending");
    std::vector<FrontierPoint> out;
    std::optional<WeightSet> prev;
    for (double lambda : grid) {
        config.lambda = lambda;
        SolveOptions so;
        so.threads = threads;
        so.warm_start = prev ? &*prev : nullptr;
        WeightSet ws = solve_all(basis, cohort, config, so);
        if (!ws.failures.empty())
            throw SweepError("lambda_sweep: hospital '" + ws.failures.front().hospital_id + "' failed at lambda=" +
                                 std::to_string(lambda) + ": " + ws.failures.front().message,
                             lambda);
        const auto pbr = percent_bias_reduction(bias_deltas(basis, cohort, ws, eta_hat));
        out.push_back({lambda, pbr.value_or(std::nan("")), ws.avg_ess, ws.all_converged()});
        prev = std::move(ws);
    }
    return out;
}

}  // namespace riskbal
