#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace riskbal;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

void expect_feasible(const Eigen::VectorXd& g, double lo, double hi)
{
    EXPECT_NEAR(g.sum(), 1.0, 1e-10);
    EXPECT_GE(g.minCoeff(), lo - 1e-12);
    EXPECT_LE(g.maxCoeff(), hi + 1e-12);
}

}  // namespace

TEST(Projection, AlreadyFeasible)
{
    const auto g = project_simplex_box(vec({0.5, 0.5}), 0.0, 1.0);
    EXPECT_NEAR(g[0], 0.5, 1e-15);
    EXPECT_NEAR(g[1], 0.5, 1e-15);
}

TEST(Projection, ClipTwoPoints)
{
    const auto g = project_simplex_box(vec({2.0, 0.0}), 0.0, 1.0);
    EXPECT_NEAR(g[0], 1.0, 1e-15);
    EXPECT_NEAR(g[1], 0.0, 1e-15);
}

TEST(Projection, UpperBoundBindsAgainstGridOracle)
{
    const auto v = vec({2.0, 0.0, 0.0});
    const auto g = project_simplex_box(v, 0.0, 0.4);
    EXPECT_NEAR(g[0], 0.4, 1e-12);
    EXPECT_NEAR(g[1], 0.3, 1e-12);
    EXPECT_NEAR(g[2], 0.3, 1e-12);
    const auto ref = oracle::grid_refine(3, 0.0, 0.4, [&](const Eigen::VectorXd& x) { return (x - v).squaredNorm(); });
    EXPECT_LT((g - ref).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Projection, InfeasibleBounds)
{
    EXPECT_THROW(project_simplex_box(vec({1, 2, 3}), 0.0, 0.3), FeasibilityError);
    EXPECT_THROW(project_simplex_box(vec({1, 2}), 0.6, 1.0), FeasibilityError);
    EXPECT_THROW(project_simplex_box(vec({1, 2}), -0.1, 1.0), FeasibilityError);
}

TEST(Projection, NonFiniteInput) { EXPECT_THROW(project_simplex_box(vec({1, std::nan("")}), 0.0, 1.0), NumericError); }

TEST(Projection, KktStationarityProperty)
{
    // The projection is clip(v - theta); free coordinates share one shift.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 2.0);
    std::uniform_int_distribution<int> size(1, 30);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = size(rng);
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = z(rng);
        const double hi = trial % 2 ? 1.0 : std::min(1.0, 2.0 / n);
        const auto g = project_simplex_box(v, 0.0, hi);
        expect_feasible(g, 0.0, hi);
        double shift = std::nan("");
        for (int i = 0; i < n; ++i) {
            if (g[i] > 1e-12 && g[i] < hi - 1e-12) {
                if (std::isnan(shift)) shift = v[i] - g[i];
                EXPECT_NEAR(v[i] - g[i], shift, 1e-9);
            }
        }
        if (!std::isnan(shift)) {
            for (int i = 0; i < n; ++i) {
                if (g[i] <= 1e-12) EXPECT_LE(v[i] - shift, 1e-9);
                if (g[i] >= hi - 1e-12) EXPECT_GE(v[i] - shift, hi - 1e-9);
            }
        }
    }
}

TEST(SolveHospital, SinglePatient)
{
    Eigen::MatrixXd phi(1, 2);
    phi << 0.3, -1.0;
    for (double lambda : {0.0, 1.0, 100.0}) {
        SolverConfig cfg;
        cfg.lambda = lambda;
        const auto hw = solve_hospital(phi, vec({0.0, 0.0}), cfg);
        EXPECT_EQ(hw.gamma.size(), 1);
        EXPECT_DOUBLE_EQ(hw.gamma[0], 1.0);
        EXPECT_NEAR(hw.imbalance[0], 0.3, 1e-15);
        EXPECT_NEAR(hw.imbalance[1], -1.0, 1e-15);
        EXPECT_DOUBLE_EQ(hw.ess, 1.0);
    }
}

TEST(SolveHospital, IdenticalRowsSymmetric)
{
    Eigen::MatrixXd phi(2, 2);
    phi << 1.0, 2.0, 1.0, 2.0;
    SolverConfig cfg;
    cfg.lambda = 1.0;
    const auto hw = solve_hospital(phi, vec({0.0, 0.0}), cfg);
    EXPECT_NEAR(hw.gamma[0], 0.5, 1e-9);
    EXPECT_NEAR(hw.gamma[1], 0.5, 1e-9);
}

TEST(SolveHospital, OneDimensionalCalculus)
{
    Eigen::MatrixXd phi(2, 1);
    phi << 0.0, 1.0;
    const auto t = vec({0.75});
    SolverConfig cfg;
    cfg.lambda = 0.0;
    auto hw = solve_hospital(phi, t, cfg);
    EXPECT_NEAR(hw.gamma[0], 0.25, 1e-8);
    EXPECT_NEAR(hw.gamma[1], 0.75, 1e-8);
    EXPECT_LE(hw.kkt_residual, 1e-8);
    EXPECT_TRUE(hw.converged);

    // f(g2) = (0.75 - g2)^2 + 2 ((1 - g2)^2 + g2^2), f'(g2) = 10 g2 - 5.5
    cfg.lambda = 1.0;
    hw = solve_hospital(phi, t, cfg);
    EXPECT_NEAR(hw.gamma[0], 0.45, 1e-8);
    EXPECT_NEAR(hw.gamma[1], 0.55, 1e-8);
    const double pen = 2.0 + cfg.ridge_epsilon;
    const auto ref = oracle::grid_refine(2, 0.0, 1.0, [&](const Eigen::VectorXd& g) { return oracle::objective(phi, t, pen, g); }, 1e-6);
    EXPECT_NEAR(hw.gamma[1], ref[1], 1e-6);
}

TEST(SolveHospital, NanInputIsNumericError)
{
    Eigen::MatrixXd phi(2, 1);
    phi << 0.0, std::nan("");
    EXPECT_THROW(solve_hospital(phi, vec({0.0}), SolverConfig{}), NumericError);
}

TEST(SolveHospital, InfeasibleBounds)
{
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, 1);
    SolverConfig cfg;
    cfg.upper = 0.2;
    EXPECT_THROW(solve_hospital(phi, vec({0.0}), cfg), FeasibilityError);
}

TEST(SolveHospital, IterationCapReportsBestIterate)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    Eigen::MatrixXd phi(40, 3);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
    SolverConfig cfg;
    cfg.lambda = 0.0;
    cfg.max_iter = 2;
    const auto hw = solve_hospital(phi, vec({3.0, -3.0, 3.0}), cfg);
    EXPECT_FALSE(hw.converged);
    EXPECT_GT(hw.kkt_residual, cfg.tol_kkt);
    expect_feasible(hw.gamma, 0.0, 1.0);
}

TEST(SolverConfig, Validation)
{
    SolverConfig c;
    c.lambda = -1;
    EXPECT_THROW(c.validate(), ValidationError);
    c = SolverConfig{};
    c.tol_kkt = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = SolverConfig{};
    c.lower = 0.5;
    c.upper = 0.4;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(SolveHospital, MatchesActiveSetOracle)
{
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> nd(1, 6), pd(1, 3);
    const double lambdas[] = {0.0, 0.1, 1.0};
    for (int trial = 0; trial < 150; ++trial) {
        const int n = nd(rng), p = pd(rng);
        Eigen::MatrixXd phi(n, p);
        for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
        Eigen::VectorXd t(p);
        for (int k = 0; k < p; ++k) t[k] = 0.5 * z(rng);
        SolverConfig cfg;
        cfg.lambda = lambdas[trial % 3];
        cfg.upper = (trial % 2 && n >= 3) ? 0.4 : 1.0;
        const auto hw = solve_hospital(phi, t, cfg);
        const double pen = cfg.lambda * n + cfg.ridge_epsilon;
        const auto ref = oracle::enumerate_active_sets(phi, t, pen, cfg.lower, cfg.upper);
        const double f = oracle::objective(phi, t, pen, hw.gamma);
        EXPECT_LE(f - ref.value, 1e-8 * std::max(1.0, ref.value)) << "trial " << trial;
        EXPECT_LE(hw.kkt_residual, 1e-8);
        expect_feasible(hw.gamma, cfg.lower, cfg.upper);
    }
}

TEST(SolveHospital, GridOracleSmallInstances)
{
    std::mt19937_64 rng(23);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3, p = 2;
        Eigen::MatrixXd phi(n, p);
        for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
        const Eigen::VectorXd t = Eigen::VectorXd::Zero(p);
        SolverConfig cfg;
        cfg.lambda = 0.1;
        const auto hw = solve_hospital(phi, t, cfg);
        const double pen = cfg.lambda * n + cfg.ridge_epsilon;
        auto f = [&](const Eigen::VectorXd& g) { return oracle::objective(phi, t, pen, g); };
        const auto ref = oracle::grid_refine(n, 0.0, 1.0, f);
        EXPECT_LE(f(hw.gamma), f(ref) + 1e-10);
    }
}

TEST(SolveHospital, LambdaMonotonicityProperty)
{
    std::mt19937_64 rng(29);
    std::normal_distribution<double> z;
    const double grid[] = {0.0, 0.05, 0.1, 0.5, 1.0, 2.0, 3.5, 10.0};
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 4 + trial % 20, p = 1 + trial % 4;
        Eigen::MatrixXd phi(n, p);
        for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng) + 0.7;
        const Eigen::VectorXd t = Eigen::VectorXd::Zero(p);
        double prev_ess = 0, prev_imb = 0;
        for (double lambda : grid) {
            SolverConfig cfg;
            cfg.lambda = lambda;
            const auto hw = solve_hospital(phi, t, cfg);
            EXPECT_GE(hw.ess, prev_ess - 1e-6);
            EXPECT_GE(hw.imbalance_l2, prev_imb - 1e-6);
            prev_ess = hw.ess;
            prev_imb = hw.imbalance_l2;
        }
    }
}

TEST(SolveHospital, LargeLambdaUniform)
{
    std::mt19937_64 rng(31);
    std::normal_distribution<double> z;
    Eigen::MatrixXd phi(25, 3);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
    SolverConfig cfg;
    cfg.lambda = 1e6;
    const auto hw = solve_hospital(phi, Eigen::VectorXd::Constant(3, 2.0), cfg);
    EXPECT_LE((hw.gamma.array() - 1.0 / 25).abs().maxCoeff(), 1e-4);
}

TEST(SolveHospital, WarmStartSameAnswer)
{
    std::mt19937_64 rng(37);
    std::normal_distribution<double> z;
    Eigen::MatrixXd phi(30, 2);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
    SolverConfig cfg;
    cfg.lambda = 0.1;
    const auto cold = solve_hospital(phi, vec({0.2, 0.1}), cfg);
    const Eigen::VectorXd start = Eigen::VectorXd::Unit(30, 4);
    const auto warm = solve_hospital(phi, vec({0.2, 0.1}), cfg, &start);
    EXPECT_LT((cold.gamma - warm.gamma).lpNorm<Eigen::Infinity>(), 1e-7);
}

TEST(SolveAll, SeparableAndDeterministic)
{
    std::mt19937_64 rng(41);
    const auto c = oracle::random_cohort(rng, {30, 45}, 3);
    const auto basis = build_basis(c);
    SolverConfig cfg;
    cfg.lambda = 0.05;
    SolveOptions one, many;
    one.threads = 1;
    many.threads = 4;
    const auto a = solve_all(basis, c, cfg, one);
    const auto b = solve_all(basis, c, cfg, many);
    ASSERT_EQ(a.hospitals.size(), 2u);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto& id = a.hospitals[j].hospital_id;
        const auto single = solve_hospital(hospital_design(basis, c, id), basis.target(), cfg);
        EXPECT_TRUE(a.hospitals[j].gamma == single.gamma);
        EXPECT_TRUE(a.hospitals[j].gamma == b.hospitals[j].gamma);
    }
    EXPECT_TRUE(a.all_converged());
    EXPECT_NEAR(a.avg_ess, 0.5 * (a.hospitals[0].ess + a.hospitals[1].ess), 1e-12);
}

TEST(SolveAll, BalancedCohortLargeLambdaUniform)
{
    // Every hospital is a copy of the same case mix.
    std::ostringstream os;
    os << "hospital_id,outcome,age,sex\n";
    for (const char* id : {"a", "b", "c"})
        for (int i = 0; i < 12; ++i) os << id << ',' << (i % 4 == 0) << ',' << 40 + 3 * i << ',' << (i % 3 == 0) << '\n';
    const auto c = oracle::cohort_from_text(os.str());
    const auto basis = build_basis(c);
    SolverConfig cfg;
    cfg.lambda = 1e3;
    const auto ws = solve_all(basis, c, cfg);
    for (const auto& hw : ws.hospitals) EXPECT_LE((hw.gamma.array() - 1.0 / 12).abs().maxCoeff(), 1e-4);
}

TEST(SolveAll, FailuresCollectedPerHospital)
{
    const auto c = oracle::cohort_from_text("hospital_id,outcome,age\na,0,1\na,1,2\nb,0,3\nb,1,4\nb,1,5\nb,0,6\nb,0,7\n");
    const auto basis = build_basis(c);
    SolverConfig cfg;
    cfg.upper = 0.3;  // infeasible for the 2-patient hospital only
    const auto ws = solve_all(basis, c, cfg);
    ASSERT_EQ(ws.failures.size(), 1u);
    EXPECT_EQ(ws.failures[0].hospital_id, "a");
    ASSERT_EQ(ws.hospitals.size(), 1u);
    EXPECT_EQ(ws.hospitals[0].hospital_id, "b");
    EXPECT_THROW(ws.at("a"), LookupError);
}

TEST(PowerIteration, BoundsLargestEigenvalue)
{
    std::mt19937_64 rng(43);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd phi(3 + trial, 1 + trial % 5);
        for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = z(rng);
        const double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(phi).singularValues()[0];
        EXPECT_NEAR(max_singular_value_squared(phi), exact * exact, 1e-6 * exact * exact);
    }
}
