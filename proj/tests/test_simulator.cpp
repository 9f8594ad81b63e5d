#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"

using namespace riskbal;

TEST(Simulator, NoSignalGivesConstantRisk)
{
    sim::SimParams sp;
    sp.J = 6;
    sp.sigma_alpha2 = 0;
    sp.sigma_beta2 = 0;
    sp.beta_bar = 0;
    const auto pop = sim::gen_population(sp, 1);
    for (const auto& pt : pop.patients) EXPECT_NEAR(pt.risk, 0.2689414213699951, 1e-15);
    for (const auto& h : pop.hospitals) EXPECT_NEAR(h.true_quality, 0.2689414213699951, 1e-13);
}

TEST(Simulator, SizesAndShares)
{
    sim::SimParams sp;
    sp.J = 10;
    const auto pop = sim::gen_population(sp, 2);
    std::size_t total = 0;
    double share = 0;
    for (const auto& h : pop.hospitals) {
        EXPECT_GT(h.size_share, 0.0);
        EXPECT_NEAR(h.size_share / (h.u[0] + 0.8), pop.hospitals[0].size_share / (pop.hospitals[0].u[0] + 0.8), 1e-12);
        share += h.size_share;
        total += h.size;
        EXPECT_NEAR(static_cast<double>(h.size), h.size_share * 800, 1.0);
    }
    EXPECT_NEAR(share, 1.0, 1e-12);
    EXPECT_EQ(total, 800u);
    EXPECT_EQ(pop.patients.size(), 800u);
}

TEST(Simulator, LatentFormulas)
{
    sim::SimParams sp;
    sp.J = 5;
    sp.sigma_alpha2 = 0.25;
    sp.sigma_beta2 = 4.0;
    sp.beta_bar = 1.0;
    const auto pop = sim::gen_population(sp, 3);
    for (const auto& h : pop.hospitals) {
        const double s0 = h.u[0] + 0.5, s1 = h.u[1] + 0.5, s2 = h.u[2] + 0.5;
        EXPECT_GE(h.u[0], -0.5);
        EXPECT_LT(h.u[0], 0.5);
        EXPECT_DOUBLE_EQ(h.alpha_j, -1.0 + 0.5 * 4.0 * (s0 + s1 + s2 - 1.5));
        EXPECT_DOUBLE_EQ(h.beta_j, 1.0 + 2.0 * 6.0 * (s0 + s1 - 1.0));
    }
    EXPECT_EQ(pop.clamp_count, 0u);
}

TEST(Simulator, RiskCoefficients)
{
    const std::array<double, 7> v = {0.4, 0.3, 0.4, 0.2, 0.2, 0.2, 0.2};
    EXPECT_EQ(sim::risk_coefficients, v);
    EXPECT_EQ(sim::covariate_names(), (std::vector<std::string>{"X1", "X2", "X3", "X4", "X5", "X6", "X7"}));
}

TEST(Simulator, RiskMatchesLogitFormula)
{
    sim::SimParams sp;
    sp.J = 4;
    sp.beta_bar = 2.0;
    const auto pop = sim::gen_population(sp, 4);
    for (std::size_t i = 0; i < pop.patients.size(); i += 37) {
        const auto& pt = pop.patients[i];
        const auto& h = pop.hospitals[pt.hospital];
        double centered = 0, raw = 0;
        for (std::size_t k = 0; k < 7; ++k) {
            centered += sim::risk_coefficients[k] * (pt.x[k] - pop.x_bar[k]);
            raw += sim::risk_coefficients[k] * pt.x[k];
        }
        EXPECT_NEAR(pt.risk, sim::logistic(h.alpha_j + 2.0 * centered + (h.beta_j - 2.0) * raw), 1e-15);
    }
}

TEST(Simulator, HospitalNamesSortNumerically)
{
    EXPECT_EQ(sim::hospital_name(0, 9), "h1");
    EXPECT_EQ(sim::hospital_name(0, 30), "h01");
    EXPECT_EQ(sim::hospital_name(99, 100), "h100");
    EXPECT_LT(sim::hospital_name(1, 30), sim::hospital_name(9, 30));
}

TEST(Resample, SizesFixedAndDeterministic)
{
    sim::SimParams sp;
    sp.J = 5;
    const auto pop = sim::gen_population(sp, 5);
    const auto a = sim::resample(pop, 11);
    const auto b = sim::resample(pop, 11);
    const auto c = sim::resample(pop, 12);
    ASSERT_EQ(a.n(), pop.patients.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.n(); ++i) {
        EXPECT_EQ(a.patients[i].covariates, b.patients[i].covariates);
        EXPECT_EQ(a.patients[i].outcome, b.patients[i].outcome);
        differs = differs || a.patients[i].covariates != c.patients[i].covariates;
    }
    EXPECT_TRUE(differs);
    for (std::size_t j = 0; j < pop.hospitals.size(); ++j) EXPECT_EQ(a.rows_of(pop.hospitals[j].id).size(), pop.hospitals[j].size);
}

TEST(Resample, SinglePatientHospital)
{
    sim::Population pop;
    pop.params.J = 1;
    sim::HospitalTruth h;
    h.id = "h1";
    h.size = 1;
    pop.hospitals.push_back(h);
    sim::SimPatient pt;
    pt.x = {3, 1, 0, 1, 0, 1, 0};
    pt.risk = 0.5;
    pop.patients.push_back(pt);
    pop.members = {{0}};
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto c = sim::resample(pop, s);
        ASSERT_EQ(c.n(), 1u);
        EXPECT_EQ(c.patients[0].covariates, std::vector<double>(pt.x.begin(), pt.x.end()));
    }
}

TEST(Resample, MeanMatchesPopulation)
{
    sim::SimParams sp;
    sp.J = 3;
    const auto pop = sim::gen_population(sp, 6);
    const auto& rows = pop.members[0];
    double pop_mean = 0;
    for (auto i : rows) pop_mean += pop.patients[i].x[0];
    pop_mean /= static_cast<double>(rows.size());
    double acc = 0, acc_sq = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        const auto c = sim::resample(pop, sim::replicate_seed(6, r));
        double m = 0;
        for (auto i : c.rows_of(pop.hospitals[0].id)) m += c.patients[i].covariates[0];
        m /= static_cast<double>(rows.size());
        acc += m;
        acc_sq += m * m;
    }
    const double mean = acc / reps;
    const double sd = std::sqrt(acc_sq / reps - mean * mean);
    EXPECT_LT(std::abs(mean - pop_mean), 4 * sd / std::sqrt(double(reps)));
}

TEST(ReplicateSeed, DistinctStreams)
{
    std::set<std::uint64_t> seen;
    for (std::size_t r = 0; r < 1000; ++r) seen.insert(sim::replicate_seed(1, r));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(sim::replicate_seed(1, 0), sim::replicate_seed(2, 0));
}

TEST(RunExperiment, NullModelUnbiased)
{
    sim::SimParams sp;
    sp.J = 6;
    sp.sigma_alpha2 = 0;
    sp.sigma_beta2 = 0;
    sp.beta_bar = 0;
    sp.reps = 100;
    const auto res = sim::run_experiment(sp);
    for (const auto& s : res.estimators) {
        for (std::size_t j = 0; j < sp.J; ++j) EXPECT_LE(std::abs(s.bias[j]), 4 * s.se[j] / std::sqrt(100.0) + 1e-12) << sim::to_string(s.estimator);
    }
    EXPECT_EQ(res.nonconverged, 0u);
}

TEST(RunExperiment, RmspeDecompositionAndDeterminism)
{
    sim::SimParams sp;
    sp.J = 6;
    sp.beta_bar = 1.0;
    sp.reps = 40;
    sp.threads = 1;
    const auto a = sim::run_experiment(sp);
    sp.threads = 4;
    const auto b = sim::run_experiment(sp);
    const double R = 40;
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(a.estimators[e].avg_rmspe, b.estimators[e].avg_rmspe);
        for (std::size_t j = 0; j < sp.J; ++j) {
            const auto& s = a.estimators[e];
            const double var = s.se[j] * s.se[j] * (R - 1) / R;
            EXPECT_NEAR(s.rmspe[j] * s.rmspe[j], s.bias[j] * s.bias[j] + var, 1e-12);
        }
    }
    EXPECT_STREQ(sim::to_string(a.estimators[2].estimator), "weighted_regression");
}

TEST(SimParams, Validation)
{
    sim::SimParams sp;
    sp.J = 1;
    EXPECT_THROW(sim::gen_population(sp, 1), DomainError);
    sp = sim::SimParams{};
    sp.sigma_beta2 = -1;
    EXPECT_THROW(sp.validate(), DomainError);
    sp = sim::SimParams{};
    sp.reps = 0;
    EXPECT_THROW(sp.validate(), DomainError);
}

TEST(CohortCsv, RoundTrip)
{
    sim::SimParams sp;
    sp.J = 4;
    const auto c = sim::population_cohort(sim::gen_population(sp, 7));
    std::ostringstream os;
    sim::write_cohort_csv(os, c);
    const auto back = oracle::cohort_from_text(os.str());
    ASSERT_EQ(back.n(), c.n());
    EXPECT_EQ(back.hospital_ids(), c.hospital_ids());
    for (std::size_t i = 0; i < c.n(); ++i) {
        EXPECT_EQ(back.patients[i].covariates, c.patients[i].covariates);
        EXPECT_EQ(back.patients[i].outcome, c.patients[i].outcome);
    }
}
