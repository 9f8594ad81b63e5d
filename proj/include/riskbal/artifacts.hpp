#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "balance_solver.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "data_model.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "gibbs.hpp"
#include "pooling.hpp"
#include "simulator.hpp"

// Readers and writers for the CSV files exchanged between CLI commands.
namespace riskbal::artifacts {

inline void provenance(std::ostream& out, std::uint64_t seed, double lambda)
{
    out << "# riskbal " << version << " seed=" << seed << " lambda=" << csv::fmt(lambda) << '\n';
}

inline std::string flag(bool b) { return b ? "1" : "0"; }

inline void write_weights(std::ostream& out, const WeightSet& ws, const Cohort& cohort)
{
    csv::write_row(out, {"row_index", "hospital_id", "weight"});
    for (const auto& hw : ws.hospitals) {
        const auto& rows = cohort.rows_of(hw.hospital_id);
        for (std::size_t k = 0; k < rows.size(); ++k)
            csv::write_row(out, {std::to_string(cohort.patients[rows[k]].row_index), hw.hospital_id,
                                 csv::fmt(hw.gamma[static_cast<Eigen::Index>(k)])});
    }
}

inline void write_summary(std::ostream& out, const WeightSet& ws)
{
    csv::write_row(out, {"hospital_id", "n", "ess", "imbalance_l2", "kkt_residual", "iterations"});
    for (const auto& hw : ws.hospitals)
        csv::write_row(out, {hw.hospital_id, std::to_string(hw.gamma.size()), csv::fmt(hw.ess), csv::fmt(hw.imbalance_l2),
                             csv::fmt(hw.kkt_residual), std::to_string(hw.iterations)});
}

namespace detail {

inline double number(const csv::Table& t, const std::vector<std::string>& row, std::size_t col, std::size_t line)
{
    double v = 0;
    if (col >= row.size() || !csv::parse_double(row[col], v))
        throw ParseError("non-numeric value in column '" + t.header[col] + "'", line, t.header[col]);
    return v;
}

inline std::size_t require(const csv::Table& t, const std::string& name, const std::string& file)
{
    const auto c = t.column(name);
    if (c == csv::Table::npos) throw SchemaError(file + ": missing column '" + name + "'");
    return c;
}

}  // namespace detail

/// Rebuilds a WeightSet from weights.csv, checked against the cohort it was
/// solved for. ESS and imbalance are recomputed from the basis.
inline WeightSet read_weights(std::istream& in, const BasisMatrix& basis, const Cohort& cohort, const SolverConfig& config)
{
    const auto t = csv::read(in);
    const auto c_row = detail::require(t, "row_index", "weights.csv");
    const auto c_hid = detail::require(t, "hospital_id", "weights.csv");
    const auto c_w = detail::require(t, "weight", "weights.csv");

    std::map<std::size_t, std::size_t> position;  // source row -> cohort position
    for (std::size_t i = 0; i < cohort.n(); ++i) position[cohort.patients[i].row_index] = i;
    std::vector<double> weight(cohort.n(), 0.0);
    std::vector<bool> seen(cohort.n(), false);

    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const double idx = detail::number(t, row, c_row, r + 1);
        auto it = position.find(static_cast<std::size_t>(idx));
        if (idx < 0 || it == position.end())
            throw AlignmentError("weights.csv: row_index " + row[c_row] + " is not a patient of the cohort");
        const auto i = it->second;
        if (c_hid >= row.size() || row[c_hid] != cohort.patients[i].hospital_id)
            throw AlignmentError("weights.csv: hospital_id mismatch at row_index " + row[c_row]);
        if (seen[i]) throw AlignmentError("weights.csv: duplicate row_index " + row[c_row]);
        seen[i] = true;
        weight[i] = detail::number(t, row, c_w, r + 1);
    }

    WeightSet ws;
    ws.config = config;
    double ess_sum = 0;
    const Eigen::VectorXd target = basis.target();
    for (const auto& [id, rows] : cohort.hospitals) {
        HospitalWeights hw;
        hw.hospital_id = id;
        hw.gamma.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (!seen[rows[k]]) throw AlignmentError("weights.csv: no weight for hospital '" + id + "' patient row " +
                                                     std::to_string(cohort.patients[rows[k]].row_index));
            hw.gamma[static_cast<Eigen::Index>(k)] = weight[rows[k]];
        }
        const Eigen::MatrixXd phi = hospital_design(basis, cohort, id);
        hw.ess = 1.0 / hw.gamma.squaredNorm();
        hw.imbalance = phi.transpose() * hw.gamma - target;
        hw.imbalance_l2 = hw.imbalance.norm();
        const double penalty = config.lambda * static_cast<double>(rows.size()) + config.ridge_epsilon;
        hw.kkt_residual = kkt_residual(phi, target, penalty, hw.gamma, config.lower, config.upper);
        hw.converged = true;
        ess_sum += hw.ess;
        ws.hospitals.push_back(std::move(hw));
    }
    ws.avg_ess = ws.hospitals.empty() ? 0.0 : ess_sum / static_cast<double>(ws.hospitals.size());
    return ws;
}

inline const std::vector<std::string>& estimate_columns()
{
    static const std::vector<std::string> cols = {"hospital_id", "n", "ess", "mu_raw", "mu_weighted", "se_weighted",
                                                  "mu_bias_corrected", "se_bias_corrected", "flag_extrapolated"};
    return cols;
}

inline void write_estimates(std::ostream& out, const EstimateTable& t)
{
    csv::write_row(out, estimate_columns());
    for (const auto& e : t.hospitals)
        csv::write_row(out, {e.hospital_id, std::to_string(e.n), csv::fmt(e.ess), csv::fmt(e.mu_raw), csv::fmt(e.mu_weighted),
                             csv::fmt(e.se_weighted), csv::fmt(e.mu_bias_corrected), csv::fmt(e.se_bias_corrected),
                             flag(e.extrapolated)});
}

inline EstimateTable read_estimates(std::istream& in)
{
    const auto t = csv::read(in);
    std::vector<std::size_t> col;
    for (const auto& name : estimate_columns()) col.push_back(detail::require(t, name, "estimates.csv"));
    EstimateTable out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto num = [&](std::size_t k) { return detail::number(t, row, col[k], r + 1); };
        HospitalEstimate e;
        e.hospital_id = row[col[0]];
        e.n = static_cast<std::size_t>(num(1));
        e.ess = num(2);
        e.mu_raw = num(3);
        e.mu_weighted = num(4);
        e.se_weighted = num(5);
        e.mu_bias_corrected = num(6);
        e.se_bias_corrected = num(7);
        e.extrapolated = num(8) != 0.0;
        out.hospitals.push_back(std::move(e));
    }
    if (out.hospitals.size() < 2) throw ValidationError("estimates.csv: need at least two hospitals");
    return out;
}

inline void write_bias(std::ostream& out, const BiasReport& r)
{
    csv::write_row(out, {"hospital_id", "delta_raw", "delta_weighted", "imbalance_l2_raw", "imbalance_l2_weighted"});
    for (const auto& h : r.hospitals)
        csv::write_row(out, {h.hospital_id, csv::fmt(h.delta_raw), csv::fmt(h.delta_weighted), csv::fmt(h.imbalance_l2_raw),
                             csv::fmt(h.imbalance_l2_weighted)});
}

inline void write_pbr(std::ostream& out, const BiasReport& r)
{
    csv::write_row(out, {"pbr", "avg_ess"});
    csv::write_row(out, {r.pbr ? csv::fmt(*r.pbr) : "", csv::fmt(r.avg_ess)});
}

inline void write_importance(std::ostream& out, const BasisMatrix& basis, const Eigen::VectorXd& eta)
{
    csv::write_row(out, {"covariate", "eta_hat"});
    for (std::size_t k = 0; k < basis.columns.size(); ++k)
        csv::write_row(out, {basis.columns[k].name, csv::fmt(eta[static_cast<Eigen::Index>(k)])});
}

inline void write_balance(std::ostream& out, const std::vector<BalanceRow>& rows)
{
    csv::write_row(out, {"hospital_id", "covariate", "smd_raw", "smd_weighted"});
    for (const auto& b : rows) csv::write_row(out, {b.hospital_id, b.covariate, csv::fmt(b.smd_raw), csv::fmt(b.smd_weighted)});
}

inline void write_sweep(std::ostream& out, const std::vector<FrontierPoint>& pts)
{
    csv::write_row(out, {"lambda", "pbr", "avg_ess"});
    for (const auto& p : pts) csv::write_row(out, {csv::fmt(p.lambda), csv::fmt(p.pbr), csv::fmt(p.avg_ess)});
}

struct HeterogeneityRow {
    std::string estimate_set;
    HeterogeneityResult result;
};

inline void write_heterogeneity(std::ostream& out, const std::vector<HeterogeneityRow>& rows)
{
    csv::write_row(out, {"estimate_set", "mu_bar", "tau_hat", "tau_ci_lo", "tau_ci_hi", "q_below_lower_quantile", "pi80_lo",
                         "pi80_hi", "q_at_zero", "r2_cross"});
    for (const auto& [name, r] : rows)
        csv::write_row(out, {name, csv::fmt(r.grand_mean), csv::fmt(r.tau_hat), csv::fmt(r.tau_ci.lo), csv::fmt(r.tau_ci.hi),
                             flag(r.tau_ci.below_lower_quantile), csv::fmt(r.prediction_interval_80.first),
                             csv::fmt(r.prediction_interval_80.second), csv::fmt(r.q_at_zero),
                             r.r2_cross ? csv::fmt(*r.r2_cross) : ""});
}

/// Standard errors for unadjusted means. For a 0/1 outcome the within-hospital
/// variance is n/(n-1) mu (1-mu); it is pooled like the weighted case with
/// uniform weights, so ESS = n.
inline std::vector<double> raw_standard_errors(const EstimateTable& t)
{
    std::vector<double> ess;
    std::vector<std::optional<double>> var;
    for (const auto& e : t.hospitals) {
        const double n = static_cast<double>(e.n);
        ess.push_back(n);
        if (e.n > 1) var.push_back(n / (n - 1.0) * e.mu_raw * (1.0 - e.mu_raw));
        else var.push_back(std::nullopt);
    }
    return pool_variances(ess, var).se;
}

inline std::vector<HeterogeneityRow> heterogeneity_rows(const EstimateTable& t)
{
    std::vector<double> mu_raw, mu_w, se_w, mu_bc, se_bc;
    for (const auto& e : t.hospitals) {
        mu_raw.push_back(e.mu_raw);
        mu_w.push_back(e.mu_weighted);
        se_w.push_back(e.se_weighted);
        mu_bc.push_back(e.mu_bias_corrected);
        se_bc.push_back(e.se_bias_corrected);
    }
    std::vector<HeterogeneityRow> rows = {{"raw", heterogeneity(mu_raw, raw_standard_errors(t))},
                                          {"weighted", heterogeneity(mu_w, se_w)},
                                          {"bias_corrected", heterogeneity(mu_bc, se_bc)}};
    for (std::size_t k = 1; k < rows.size(); ++k) rows[k].result.r2_cross = cross_hospital_r2(rows[0].result.tau_hat, rows[k].result.tau_hat);
    return rows;
}

inline void write_posterior(std::ostream& out, const std::vector<std::string>& ids, const PosteriorSummary& s)
{
    csv::write_row(out, {"hospital_id", "post_mean", "post_sd", "ci_lo_2.5", "ci_hi_97.5", "prob_worst_decile"});
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto& h = s.hospitals[j];
        csv::write_row(out, {ids[j], csv::fmt(h.post_mean), csv::fmt(h.post_sd), csv::fmt(h.ci_lo), csv::fmt(h.ci_hi),
                             csv::fmt(h.prob_worst_decile)});
    }
}

inline void write_sim_header(std::ostream& out)
{
    csv::write_row(out, {"beta_bar", "sigma_alpha2", "sigma_beta2", "estimator", "avg_bias", "avg_se", "avg_rmspe", "reps",
                         "clamp_count"});
}

inline void write_sim_rows(std::ostream& out, const sim::SimResult& r)
{
    for (const auto& s : r.estimators)
        csv::write_row(out, {csv::fmt(r.params.beta_bar), csv::fmt(r.params.sigma_alpha2), csv::fmt(r.params.sigma_beta2),
                             sim::to_string(s.estimator), csv::fmt(s.avg_bias), csv::fmt(s.avg_se), csv::fmt(s.avg_rmspe),
                             std::to_string(r.params.reps), std::to_string(r.clamp_count)});
}

}  // namespace riskbal::artifacts
