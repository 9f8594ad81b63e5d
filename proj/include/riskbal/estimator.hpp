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

// Values of a per-patient vector restricted to one hospital, in file order.
inline Eigen::VectorXd gather(const Eigen::VectorXd& per_patient, const std::vector<std::size_t>& rows)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = per_patient[static_cast<Eigen::Index>(rows[r])];
    return out;
}

inline const std::vector<std::size_t>& aligned_rows(const HospitalWeights& hw, const Cohort& cohort)
{
    const auto& rows = cohort.rows_of(hw.hospital_id);
    if (static_cast<Eigen::Index>(rows.size()) != hw.gamma.size())
        throw AlignmentError("weights for hospital '" + hw.hospital_id + "' have " + std::to_string(hw.gamma.size()) +
                             " entries but the cohort has " + std::to_string(rows.size()) + " patients");
    return rows;
}

inline std::vector<double> weighted_means(const WeightSet& weights, const Cohort& cohort, const Eigen::VectorXd& values)
{
    if (values.size() != static_cast<Eigen::Index>(cohort.n())) throw AlignmentError("values do not cover every patient");
    std::vector<double> mu;
    mu.reserve(weights.hospitals.size());
    for (const auto& hw : weights.hospitals) mu.push_back(hw.gamma.dot(gather(values, aligned_rows(hw, cohort))));
    return mu;
}

/// Weighted hospital means of the outcome.
inline std::vector<double> weighted_means(const WeightSet& weights, const Cohort& cohort)
{
    return weighted_means(weights, cohort, cohort.outcome_vector());
}

/// Normalized-weights variance sum g_i (v_i - mu)^2 / (1 - sum g_i^2). Empty when the
/// weights concentrate on a single effective unit.
inline std::optional<double> hospital_variance(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                               const Eigen::Ref<const Eigen::VectorXd>& values, double mu)
{
    if (gamma.size() != values.size()) throw AlignmentError("hospital_variance: weights and values differ in length");
    const double sq = gamma.squaredNorm();
    if (sq >= 1.0 - 1e-12) return std::nullopt;
    const double ss = (gamma.array() * (values.array() - mu).square()).sum();
    return std::max(0.0, ss) / (1.0 - sq);
}

// The variance formula as typeset in the source write-up (squared weights in the sum,
// denominator sum g^2 - 1). Its denominator is non-positive for normalized weights,
// so it is only exposed for side-by-side comparison.
inline std::optional<double> hospital_variance_literal(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                                       const Eigen::Ref<const Eigen::VectorXd>& values, double mu)
{
    const double denom = gamma.squaredNorm() - 1.0;
    if (denom == 0.0) return std::nullopt;
    return (gamma.array().square() * (values.array() - mu).square()).sum() / denom;
}

struct PooledSe {
    double sigma_pool = 0;  // standard deviation scale
    std::vector<double> se;
    std::vector<std::optional<double>> variances;
};

/// Pools hospital variances weighted by effective sample size and returns
/// se_j = sigma_pool / sqrt(ess_j). Undefined variances get zero pooling weight.
inline PooledSe pool_variances(const std::vector<double>& ess, const std::vector<std::optional<double>>& variances)
{
    if (ess.size() != variances.size()) throw AlignmentError("pooled_se: ess and variances differ in length");
    double num = 0, den = 0;
    for (std::size_t j = 0; j < ess.size(); ++j) {
        if (!variances[j]) continue;
        num += ess[j] * *variances[j];
        den += ess[j];
    }
    if (!(den > 0.0)) throw PoolingError("pooled_se: no hospital has a defined variance");
    PooledSe out;
    out.sigma_pool = std::sqrt(num / den);
    out.variances = variances;
    out.se.reserve(ess.size());
    for (double e : ess) out.se.push_back(out.sigma_pool / std::sqrt(e));
    return out;
}

inline PooledSe pooled_se(const WeightSet& weights, const Cohort& cohort, const Eigen::VectorXd& values, bool literal = false)
{
    std::vector<double> ess;
    std::vector<std::optional<double>> var;
    for (const auto& hw : weights.hospitals) {
        const Eigen::VectorXd v = gather(values, aligned_rows(hw, cohort));
        const double mu = hw.gamma.dot(v);
        ess.push_back(1.0 / hw.gamma.squaredNorm());
        var.push_back(literal ? hospital_variance_literal(hw.gamma, v, mu) : hospital_variance(hw.gamma, v, mu));
    }
    return pool_variances(ess, var);
}

struct OutcomeModel {
    Eigen::VectorXd beta;                 // pooled coefficients on the basis
    std::vector<std::string> hospital_ids;
    std::vector<double> alpha;            // per-hospital intercepts, aligned with hospital_ids
    Eigen::VectorXd residuals;            // per patient

    double intercept(const std::string& id) const
    {
        for (std::size_t k = 0; k < hospital_ids.size(); ++k)
            if (hospital_ids[k] == id) return alpha[k];
        throw LookupError("outcome model: no intercept for hospital '" + id + "'");
    }
};

/// Least squares with hospital intercepts and common slopes, via within-hospital
/// demeaning. With `weights`, each patient's squared residual is weighted by its
/// balancing weight.
inline OutcomeModel fit_outcome_model(const BasisMatrix& basis, const Cohort& cohort, const Eigen::VectorXd& outcomes,
                                      const WeightSet* weights = nullptr)
{
    const Eigen::Index n = static_cast<Eigen::Index>(cohort.n());
    const Eigen::Index p = basis.p();
    if (basis.phi.rows() != n || outcomes.size() != n) throw AlignmentError("outcome model: basis, outcomes and cohort differ in length");
    if (p >= n - static_cast<Eigen::Index>(cohort.J()))
        throw SingularModelError("outcome model: need p < n - J (p=" + std::to_string(p) + ", n=" + std::to_string(n) +
                                 ", J=" + std::to_string(cohort.J()) + ")");

    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (weights) {
        for (const auto& hw : weights->hospitals) {
            const auto& rows = aligned_rows(hw, cohort);
            for (std::size_t r = 0; r < rows.size(); ++r) w[static_cast<Eigen::Index>(rows[r])] = hw.gamma[static_cast<Eigen::Index>(r)];
        }
    }

    Eigen::MatrixXd xt(n, p);
    Eigen::VectorXd yt(n);
    std::vector<Eigen::VectorXd> phi_means;
    std::vector<double> y_means;
    for (const auto& [id, rows] : cohort.hospitals) {
        Eigen::VectorXd mx = Eigen::VectorXd::Zero(p);
        double my = 0, sw = 0;
        for (auto i : rows) {
            const auto ii = static_cast<Eigen::Index>(i);
            mx += w[ii] * basis.phi.row(ii).transpose();
            my += w[ii] * outcomes[ii];
            sw += w[ii];
        }
        if (!(sw > 0.0)) throw SingularModelError("outcome model: hospital '" + id + "' has zero total weight");
        mx /= sw;
        my /= sw;
        for (auto i : rows) {
            const auto ii = static_cast<Eigen::Index>(i);
            xt.row(ii) = basis.phi.row(ii) - mx.transpose();
            yt[ii] = outcomes[ii] - my;
        }
        phi_means.push_back(mx);
        y_means.push_back(my);
    }

    const Eigen::MatrixXd gram = xt.transpose() * w.asDiagonal() * xt;
    const Eigen::VectorXd rhs = xt.transpose() * w.asDiagonal() * yt;
    std::vector<std::string> names;
    for (const auto& c : basis.columns) names.push_back(c.name);

    OutcomeModel m;
    m.beta = solve_normal_equations(gram, rhs, names);
    if (!m.beta.allFinite()) throw SingularModelError("outcome model: non-finite coefficients");
    m.hospital_ids = cohort.hospital_ids();
    for (std::size_t k = 0; k < y_means.size(); ++k) m.alpha.push_back(y_means[k] - m.beta.dot(phi_means[k]));
    m.residuals.resize(n);
    std::size_t k = 0;
    for (const auto& [id, rows] : cohort.hospitals) {
        for (auto i : rows) {
            const auto ii = static_cast<Eigen::Index>(i);
            m.residuals[ii] = outcomes[ii] - m.alpha[k] - basis.phi.row(ii).dot(m.beta);
        }
        ++k;
    }
    return m;
}

inline OutcomeModel fit_outcome_model(const BasisMatrix& basis, const Cohort& cohort, const WeightSet* weights = nullptr)
{
    return fit_outcome_model(basis, cohort, cohort.outcome_vector(), weights);
}

/// Weighted mean plus the model's prediction of the remaining imbalance,
/// mu_w + beta . (target - sum g_i phi(X_i)).
inline std::vector<double> bias_corrected_means(const WeightSet& weights, const BasisMatrix& basis, const Cohort& cohort,
                                                const OutcomeModel& model, const Eigen::VectorXd& outcomes)
{
    const auto mu = weighted_means(weights, cohort, outcomes);
    std::vector<double> out;
    out.reserve(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const auto& hw = weights.hospitals[j];
        const Eigen::VectorXd balance = hospital_design(basis, cohort, hw.hospital_id).transpose() * hw.gamma;
        out.push_back(mu[j] + model.beta.dot(basis.target() - balance));
    }
    return out;
}

inline std::vector<double> bias_corrected_means(const WeightSet& weights, const BasisMatrix& basis, const Cohort& cohort,
                                                const OutcomeModel& model)
{
    return bias_corrected_means(weights, basis, cohort, model, cohort.outcome_vector());
}

/// Model-assisted form: the hospital's fitted surface averaged over the target
/// population plus the weighted mean of its residuals. Equal to
/// bias_corrected_means under the intercept-plus-common-slope model.
inline std::vector<double> model_assisted_means(const WeightSet& weights, const BasisMatrix& basis, const Cohort& cohort,
                                                const OutcomeModel& model)
{
    const Eigen::Index n = basis.phi.rows();
    // Average of beta . phi(X_i) over the target population.
    double slope_part = 0;
    if (basis.target_override) {
        slope_part = model.beta.dot(*basis.target_override);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) slope_part += basis.phi.row(i).dot(model.beta);
        slope_part /= static_cast<double>(n);
    }
    std::vector<double> out;
    out.reserve(weights.hospitals.size());
    for (const auto& hw : weights.hospitals) {
        const double surface = model.intercept(hw.hospital_id) + slope_part;
        out.push_back(surface + hw.gamma.dot(gather(model.residuals, aligned_rows(hw, cohort))));
    }
    return out;
}

struct ResidualSe {
    PooledSe pooled;
    double model_r2 = 0;
};

/// Standard errors of the bias-corrected estimates: the pooled variance machinery
/// applied to model residuals instead of outcomes. model_r2 compares the residual
/// pool with the weighted-outcome pool.
inline ResidualSe bias_corrected_se(const WeightSet& weights, const Cohort& cohort, const OutcomeModel& model,
                                    const PooledSe& outcome_pool, bool literal = false)
{
    ResidualSe out;
    out.pooled = pooled_se(weights, cohort, model.residuals, literal);
    const double base = outcome_pool.sigma_pool * outcome_pool.sigma_pool;
    out.model_r2 = base > 0 ? 1.0 - out.pooled.sigma_pool * out.pooled.sigma_pool / base : 0.0;
    return out;
}

struct HospitalEstimate {
    std::string hospital_id;
    std::size_t n = 0;
    double ess = 0;
    double mu_raw = 0;
    double mu_weighted = 0;
    double se_weighted = 0;
    double mu_bias_corrected = 0;
    double se_bias_corrected = 0;
    bool extrapolated = false;  // bias-corrected estimate left [0, 1]
};

struct EstimateTable {
    std::vector<HospitalEstimate> hospitals;
    double sigma_pool_weighted = 0;
    double sigma_pool_residual = 0;
    double model_r2 = 0;
};

struct EstimateOptions {
    bool literal_variance = false;  // debug: use the typeset variance formula
    bool weighted_model_fit = false;
};

inline EstimateTable estimate_all(const BasisMatrix& basis, const Cohort& cohort, const WeightSet& weights, const EstimateOptions& opt = {})
{
    const Eigen::VectorXd y = cohort.outcome_vector();
    const auto mu_w = weighted_means(weights, cohort, y);
    const auto pool = pooled_se(weights, cohort, y, opt.literal_variance);
    const auto model = fit_outcome_model(basis, cohort, y, opt.weighted_model_fit ? &weights : nullptr);
    const auto mu_bc = bias_corrected_means(weights, basis, cohort, model, y);
    const auto res = bias_corrected_se(weights, cohort, model, pool, opt.literal_variance);

    EstimateTable t;
    t.sigma_pool_weighted = pool.sigma_pool;
    t.sigma_pool_residual = res.pooled.sigma_pool;
    t.model_r2 = res.model_r2;
    for (std::size_t j = 0; j < weights.hospitals.size(); ++j) {
        const auto& hw = weights.hospitals[j];
        const Eigen::VectorXd yj = gather(y, aligned_rows(hw, cohort));
        HospitalEstimate e;
        e.hospital_id = hw.hospital_id;
        e.n = static_cast<std::size_t>(yj.size());
        e.ess = 1.0 / hw.gamma.squaredNorm();
        e.mu_raw = yj.mean();
        e.mu_weighted = mu_w[j];
        e.se_weighted = pool.se[j];
        e.mu_bias_corrected = mu_bc[j];
        e.se_bias_corrected = res.pooled.se[j];
        e.extrapolated = mu_bc[j] < 0.0 || mu_bc[j] > 1.0;
        t.hospitals.push_back(std::move(e));
    }
    return t;
}

}  // namespace riskbal
