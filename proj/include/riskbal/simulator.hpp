#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "balance_solver.hpp"
#include "csv.hpp"
#include "data_model.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "parallel.hpp"

namespace riskbal::sim {

inline constexpr std::size_t covariate_count = 7;
inline constexpr std::array<double, covariate_count> risk_coefficients = {0.4, 0.3, 0.4, 0.2, 0.2, 0.2, 0.2};

struct SimParams {
    std::size_t J = 30;
    double alpha_bar = -1.0;
    double sigma_alpha2 = 1.0;
    double beta_bar = 0.0;
    double sigma_beta2 = 1.0;
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    double lambda = 0.05;
    std::size_t threads = 0;

    void validate() const
    {
        if (J < 2) throw DomainError("simulator: J must be >= 2");
        if (!(sigma_alpha2 >= 0.0) || !(sigma_beta2 >= 0.0)) throw DomainError("simulator: variances must be >= 0");
        if (reps < 1) throw DomainError("simulator: reps must be >= 1");
        if (!(lambda >= 0.0)) throw DomainError("simulator: lambda must be >= 0");
    }
};

struct HospitalTruth {
    std::string id;
    std::array<double, 3> u{};  // latent traits on [-0.5, 0.5)
    double alpha_j = 0;         // total hospital intercept on the logit scale
    double beta_j = 0;
    double size_share = 0;
    std::size_t size = 0;
    double true_quality = 0;  // hospital risk averaged over the whole population
};

struct SimPatient {
    std::size_t hospital = 0;
    std::array<double, covariate_count> x{};
    double risk = 0;
    int outcome = 0;
};

struct Population {
    SimParams params;
    std::vector<HospitalTruth> hospitals;
    std::vector<SimPatient> patients;
    std::vector<std::vector<std::size_t>> members;  // patient positions per hospital
    std::array<double, covariate_count> x_bar{};
    std::size_t clamp_count = 0;  // Bernoulli probabilities that fell outside [0, 1]
};

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Logit-scale risk of a patient with covariates x at hospital h.
inline double patient_logit(const Population& pop, const HospitalTruth& h, const std::array<double, covariate_count>& x)
{
    double centered = 0, raw = 0;
    for (std::size_t k = 0; k < covariate_count; ++k) {
        centered += risk_coefficients[k] * (x[k] - pop.x_bar[k]);
        raw += risk_coefficients[k] * x[k];
    }
    return h.alpha_j + pop.params.beta_bar * centered + (h.beta_j - pop.params.beta_bar) * raw;
}

inline std::string hospital_name(std::size_t j, std::size_t J)
{
    const int width = static_cast<int>(std::to_string(J).size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "h%0*zu", width, j + 1);
    return buf;
}

/// Draws the fixed population: hospital latents, sizes (N = 80 J split in proportion
/// to u0 + 0.3 on the unit-interval scale), covariates, risks and outcomes, and each
/// hospital's true quality averaged over every patient in the population.
///
/// The latent traits u are drawn on [-0.5, 0.5); every formula that needs a unit
/// interval argument (the exponential quantile, the size share, the Bernoulli
/// probabilities, the centering constants) uses u + 0.5.
inline Population gen_population(const SimParams& params, std::uint64_t seed)
{
    params.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);

    Population pop;
    pop.params = params;
    const double sa = std::sqrt(params.sigma_alpha2), sb = std::sqrt(params.sigma_beta2);
    double share_total = 0;
    for (std::size_t j = 0; j < params.J; ++j) {
        HospitalTruth h;
        h.id = hospital_name(j, params.J);
        for (auto& u : h.u) u = unif(rng);
        const double s0 = h.u[0] + 0.5, s1 = h.u[1] + 0.5, s2 = h.u[2] + 0.5;
        h.alpha_j = params.alpha_bar + sa * 4.0 * (s0 + s1 + s2 - 1.5);
        h.beta_j = params.beta_bar + sb * 6.0 * (s0 + s1 - 1.0);
        h.size_share = s0 + 0.3;
        share_total += h.size_share;
        pop.hospitals.push_back(std::move(h));
    }

    // Largest-remainder rounding so the sizes add up to N exactly.
    const std::size_t N = 80 * params.J;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < params.J; ++j) {
        auto& h = pop.hospitals[j];
        h.size_share /= share_total;
        const double exact = h.size_share * static_cast<double>(N);
        h.size = static_cast<std::size_t>(std::floor(exact));
        assigned += h.size;
        remainders.emplace_back(exact - std::floor(exact), j);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < N; ++k, ++assigned) ++pop.hospitals[remainders[k % remainders.size()].second].size;
    for (auto& h : pop.hospitals)
        if (h.size == 0) h.size = 1;

    auto bernoulli_p = [&](double p) {
        if (p < 0.0 || p > 1.0) ++pop.clamp_count;
        return std::clamp(p, 0.0, 1.0);
    };

    pop.members.resize(params.J);
    for (std::size_t j = 0; j < params.J; ++j) {
        const auto& h = pop.hospitals[j];
        const double s0 = h.u[0] + 0.5, s1 = h.u[1] + 0.5, s2 = h.u[2] + 0.5;
        const double rate = 1.0 + 1.5 * -std::log1p(-s0);  // exponential quantile at s0
        const double p2 = bernoulli_p((s1 + s2 + 0.5) / 3.0);
        const double p3 = bernoulli_p((s0 + s1 + s2) / 3.0);
        std::poisson_distribution<int> x1(rate);
        std::bernoulli_distribution x2(p2), x3(p3), coin(0.5);
        for (std::size_t i = 0; i < h.size; ++i) {
            SimPatient pt;
            pt.hospital = j;
            pt.x[0] = x1(rng);
            pt.x[1] = x2(rng);
            pt.x[2] = x3(rng);
            for (std::size_t k = 3; k < covariate_count; ++k) pt.x[k] = coin(rng);
            pop.members[j].push_back(pop.patients.size());
            pop.patients.push_back(pt);
        }
    }

    for (const auto& pt : pop.patients)
        for (std::size_t k = 0; k < covariate_count; ++k) pop.x_bar[k] += pt.x[k];
    for (auto& m : pop.x_bar) m /= static_cast<double>(pop.patients.size());

    for (auto& pt : pop.patients) {
        pt.risk = logistic(patient_logit(pop, pop.hospitals[pt.hospital], pt.x));
        pt.outcome = std::bernoulli_distribution(pt.risk)(rng);
    }
    for (auto& h : pop.hospitals) {
        double s = 0;
        for (const auto& pt : pop.patients) s += logistic(patient_logit(pop, h, pt.x));
        h.true_quality = s / static_cast<double>(pop.patients.size());
    }
    return pop;
}

inline std::vector<std::string> covariate_names()
{
    std::vector<std::string> names;
    for (std::size_t k = 0; k < covariate_count; ++k) names.push_back("X" + std::to_string(k + 1));
    return names;
}

/// The population itself as a cohort, with its generated outcomes.
inline Cohort population_cohort(const Population& pop)
{
    Cohort c;
    c.covariate_names = covariate_names();
    for (std::size_t j = 0; j < pop.hospitals.size(); ++j) {
        for (auto i : pop.members[j]) {
            const auto& pt = pop.patients[i];
            PatientRecord rec;
            rec.row_index = c.patients.size();
            rec.hospital_id = pop.hospitals[j].id;
            rec.outcome = pt.outcome;
            rec.covariates.assign(pt.x.begin(), pt.x.end());
            c.hospitals[rec.hospital_id].push_back(c.patients.size());
            c.patients.push_back(std::move(rec));
        }
    }
    return c;
}

/// Bootstrap replicate: each hospital resamples its own patients with replacement at
/// its population size, and fresh outcomes are drawn from the resampled patients'
/// risks.
inline Cohort resample(const Population& pop, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Cohort c;
    c.covariate_names = covariate_names();
    c.patients.reserve(pop.patients.size());
    for (std::size_t j = 0; j < pop.hospitals.size(); ++j) {
        const auto& members = pop.members[j];
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        auto& rows = c.hospitals[pop.hospitals[j].id];
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto& pt = pop.patients[members[pick(rng)]];
            PatientRecord rec;
            rec.row_index = c.patients.size();
            rec.hospital_id = pop.hospitals[j].id;
            rec.outcome = std::bernoulli_distribution(pt.risk)(rng);
            rec.covariates.assign(pt.x.begin(), pt.x.end());
            rows.push_back(c.patients.size());
            c.patients.push_back(std::move(rec));
        }
    }
    return c;
}

// Independent per-replicate stream derived from (seed, rep).
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t rep)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(rep),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(rep) >> 32), 0x7e57u};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

enum class Estimator { raw, weighted, weighted_regression };
inline constexpr std::array<Estimator, 3> all_estimators = {Estimator::raw, Estimator::weighted, Estimator::weighted_regression};

inline const char* to_string(Estimator e)
{
    switch (e) {
    case Estimator::raw: return "raw";
    case Estimator::weighted: return "weighted";
    case Estimator::weighted_regression: return "weighted_regression";
    }
    return "?";
}

struct EstimatorSummary {
    Estimator estimator = Estimator::raw;
    double avg_bias = 0;   // mean over hospitals of |mean error|
    double avg_se = 0;     // mean over hospitals of the replicate standard deviation
    double avg_rmspe = 0;  // mean over hospitals of root mean squared error
    std::vector<double> bias, se, rmspe;  // per hospital
};

struct SimResult {
    SimParams params;
    std::array<EstimatorSummary, 3> estimators;
    std::size_t clamp_count = 0;
    std::size_t nonconverged = 0;  // hospital solves that stopped at max_iter

    const EstimatorSummary& operator[](Estimator e) const { return estimators[static_cast<std::size_t>(e)]; }
};

struct ExperimentOptions {
    double rare_threshold = 0.05;
    SolverConfig solver;  // lambda is taken from SimParams
};

/// Fixed population, then `reps` bootstrap replicates; each replicate re-solves the
/// weights and computes the unadjusted, weighted and weighted-plus-regression
/// estimates, compared with the true hospital qualities.
inline SimResult run_experiment(const SimParams& params, const ExperimentOptions& opt = {})
{
    params.validate();
    const Population pop = gen_population(params, params.seed);
    const std::size_t J = pop.hospitals.size();

    struct RepOut {
        std::array<std::vector<double>, 3> est;
        std::size_t nonconverged = 0;
    };
    std::vector<RepOut> reps(params.reps);

    SolverConfig solver = opt.solver;
    solver.lambda = params.lambda;
    parallel_for(params.reps, params.threads, [&](std::size_t r) {
        try {
            const Cohort c = resample(pop, replicate_seed(params.seed, r));
            BasisOptions bo;
            bo.rare_threshold = opt.rare_threshold;
            const BasisMatrix basis = build_basis(c, bo);
            SolveOptions so;
            so.threads = 1;
            const WeightSet ws = solve_all(basis, c, solver, so);
            if (!ws.failures.empty()) throw Error(ws.failures.front().hospital_id + ": " + ws.failures.front().message);
            const Eigen::VectorXd y = c.outcome_vector();
            const auto model = fit_outcome_model(basis, c, y);
            auto& out = reps[r];
            for (const auto& hw : ws.hospitals) {
                out.est[0].push_back(gather(y, c.rows_of(hw.hospital_id)).mean());
                if (!hw.converged) ++out.nonconverged;
            }
            out.est[1] = weighted_means(ws, c, y);
            out.est[2] = bias_corrected_means(ws, basis, c, model, y);
        } catch (const std::exception& e) {
            throw Error("simulator: replicate " + std::to_string(r) + ": " + e.what());
        }
    });

    SimResult res;
    res.params = params;
    res.clamp_count = pop.clamp_count;
    for (const auto& r : reps) res.nonconverged += r.nonconverged;
    const double R = static_cast<double>(params.reps);
    for (std::size_t e = 0; e < 3; ++e) {
        auto& s = res.estimators[e];
        s.estimator = all_estimators[e];
        for (std::size_t j = 0; j < J; ++j) {
            const double truth = pop.hospitals[j].true_quality;
            double sum = 0, sum_sq_err = 0;
            for (const auto& r : reps) {
                sum += r.est[e][j];
                sum_sq_err += (r.est[e][j] - truth) * (r.est[e][j] - truth);
            }
            const double mean = sum / R;
            double var = 0;
            for (const auto& r : reps) var += (r.est[e][j] - mean) * (r.est[e][j] - mean);
            s.bias.push_back(mean - truth);
            s.se.push_back(params.reps > 1 ? std::sqrt(var / (R - 1)) : 0.0);
            s.rmspe.push_back(std::sqrt(sum_sq_err / R));
        }
        for (std::size_t j = 0; j < J; ++j) {
            s.avg_bias += std::abs(s.bias[j]);
            s.avg_se += s.se[j];
            s.avg_rmspe += s.rmspe[j];
        }
        s.avg_bias /= static_cast<double>(J);
        s.avg_se /= static_cast<double>(J);
        s.avg_rmspe /= static_cast<double>(J);
    }
    return res;
}

inline void write_cohort_csv(std::ostream& out, const Cohort& c)
{
    std::vector<std::string> header = {"hospital_id", "outcome"};
    header.insert(header.end(), c.covariate_names.begin(), c.covariate_names.end());
    csv::write_row(out, header);
    for (const auto& p : c.patients) {
        std::vector<std::string> row = {p.hospital_id, std::to_string(p.outcome)};
        for (double x : p.covariates) row.push_back(csv::fmt(x));
        csv::write_row(out, row);
    }
}

}  // namespace riskbal::sim
