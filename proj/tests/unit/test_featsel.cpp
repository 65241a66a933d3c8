#include "counterlens/featsel.hpp"
#include "counterlens/metrics.hpp"
#include "test_support.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace counterlens;

namespace {

struct Problem {
    FeatureMatrix x;
    Vector y;
};

// y depends on x0 (strongly) and x1 (weakly); the rest is noise.
Problem signal_problem(std::size_t n, std::size_t p, std::uint64_t seed, double noise = 0.3) {
    Problem pr{fixtures::gaussian_features(n, p, seed), {}};
    pr.y = 3.0 * pr.x.values.col(0) + 1.0 * pr.x.values.col(1) + noise * fixtures::gaussian_vector(n, seed + 1);
    return pr;
}

const ModelSpec kOls{Method::ridge, {{"lambda", 0.0}}, 1, {}};

double aic(const Matrix& x, const Vector& y, const std::vector<Index>& cols) {
    Matrix a(x.rows(), static_cast<Index>(cols.size()) + 1);
    a.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k)
        a.col(static_cast<Index>(k) + 1) = x.col(cols[k]);
    const Vector r = y - a * a.colPivHouseholderQr().solve(y);
    const double n = static_cast<double>(x.rows());
    return n * std::log(r.squaredNorm() / n) + 2.0 * static_cast<double>(cols.size() + 1);
}

} // namespace

TEST(Rfe, FindsTheSingleSignal) {
    Problem pr{fixtures::gaussian_features(150, 8, 3), {}};
    pr.y = 2.0 * pr.x.values.col(5) + 0.05 * fixtures::gaussian_vector(150, 4);
    const CvPlan plan(150, 5, 1, 1);
    const auto r = rfe(kOls, pr.x, pr.y, {1, 2, 4, 8}, plan);
    EXPECT_EQ(r.selected, std::vector<std::string>{"x5"});
    EXPECT_EQ(r.trace_index, (std::vector<int>{1, 2, 4, 8}));
    EXPECT_EQ(r.trace.size(), 4u);
}

TEST(Rfe, ScoresAreMeanFoldRmse) {
    const auto pr = signal_problem(80, 5, 5);
    const CvPlan plan(80, 4, 1, 1);
    const auto r = rfe(kOls, pr.x, pr.y, {5}, plan);
    EXPECT_EQ(r.selected.size(), 5u);
    // With every column kept no elimination happens, so each fold is a plain
    // OLS fit.
    double sum = 0;
    for (int f = 0; f < 4; ++f) {
        const auto train = plan.train_rows(0, f);
        const auto test = plan.test_rows(0, f);
        const auto m = fit(kOls, pr.x.take_rows(train), take(pr.y, train));
        sum += rmse(take(pr.y, test), m.predict(pr.x.take_rows(test)));
    }
    EXPECT_NEAR(r.best_score, sum / 4, 1e-12);
    EXPECT_EQ(r.best_score, r.trace[0]);
}

TEST(Rfe, RejectsUnsupportedEstimatorAndSizes) {
    const auto pr = signal_problem(50, 4, 6);
    const CvPlan plan(50, 5, 1, 1);
    EXPECT_THROW(rfe({Method::knn, {}, 1, {}}, pr.x, pr.y, {1}, plan), ConfigError);
    EXPECT_THROW(rfe(kOls, pr.x, pr.y, {0}, plan), ArgumentError);
    EXPECT_THROW(rfe(kOls, pr.x, pr.y, {5}, plan), ArgumentError);
}

TEST(Ga, TraceIsMonotoneAndSubsetNonempty) {
    const auto pr = signal_problem(100, 8, 7);
    const CvPlan plan(100, 5, 1, 2);
    GaOptions o;
    o.population = 8;
    o.generations = 6;
    const auto r = ga_select(kOls, pr.x, pr.y, plan, o);
    ASSERT_EQ(r.trace.size(), 7u);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        EXPECT_LE(r.trace[i], r.trace[i - 1]);
    EXPECT_FALSE(r.selected.empty());
    EXPECT_NEAR(r.best_score, subset_cv_rmse(kOls, pr.x, pr.y, plan, r.selected), 1e-12);
    EXPECT_EQ(r.best_score, r.trace.back());
}

TEST(Ga, InjectedOptimumSurvivesByElitism) {
    const auto pr = signal_problem(100, 8, 8, 0.05);
    const CvPlan plan(100, 5, 1, 2);
    GaOptions o;
    o.population = 6;
    o.generations = 3;
    std::vector<bool> genome(8, false);
    genome[0] = genome[1] = true;
    o.initial = {genome};
    const auto r = ga_select(kOls, pr.x, pr.y, plan, o);
    const double injected = subset_cv_rmse(kOls, pr.x, pr.y, plan, {"x0", "x1"});
    EXPECT_LE(r.best_score, injected);
    EXPECT_LE(r.trace.front(), injected);
}

TEST(Ga, RejectsOddPopulation) {
    const auto pr = signal_problem(40, 4, 9);
    GaOptions o;
    o.population = 5;
    EXPECT_THROW(ga_select(kOls, pr.x, pr.y, CvPlan(40, 4, 1, 1), o), ConfigError);
}

TEST(Sa, GreedyRunNeverAcceptsWorse) {
    const auto pr = signal_problem(100, 8, 10);
    const CvPlan plan(100, 5, 1, 3);
    SaOptions o;
    o.iterations = 40;
    o.initial_temperature = 0.0;
    const auto r = sa_select(kOls, pr.x, pr.y, plan, o);
    ASSERT_EQ(r.trace.size(), 41u);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        EXPECT_LE(r.trace[i], r.trace[i - 1]);
    EXPECT_NEAR(r.best_score, subset_cv_rmse(kOls, pr.x, pr.y, plan, r.selected), 1e-12);
}

TEST(Sa, SeededAndReproducible) {
    const auto pr = signal_problem(80, 6, 11);
    const CvPlan plan(80, 4, 1, 3);
    SaOptions o;
    o.iterations = 30;
    o.seed = 4;
    const auto a = sa_select(kOls, pr.x, pr.y, plan, o);
    const auto b = sa_select(kOls, pr.x, pr.y, plan, o);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_EQ(a.trace, b.trace);
}

TEST(SlopeTest, MatchesIncompleteBetaOracle) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Vector x = fixtures::gaussian_vector(25, seed);
        const Vector y = 0.3 * x + fixtures::gaussian_vector(25, seed + 50);
        // t^2 = r^2 (n-2) / (1 - r^2); p = I_{df/(df+t^2)}(df/2, 1/2)
        const double r = pearson(x, y);
        const double df = 23;
        const double t2 = r * r * df / (1 - r * r);
        const double oracle = boost::math::ibeta(df / 2, 0.5, df / (df + t2));
        EXPECT_NEAR(slope_p_value(x, y), oracle, 1e-10);
    }
    EXPECT_EQ(slope_p_value(Vector::Constant(5, 1.0), Vector::LinSpaced(5, 0, 1)), 1.0);
}

TEST(Sbf, KeepsStrongSignalsOnly) {
    auto pr = signal_problem(200, 10, 12);
    pr.y = 2.0 * pr.x.values.col(0) + 2.0 * pr.x.values.col(1) + 0.3 * fixtures::gaussian_vector(200, 40);
    const auto r = sbf(kOls, pr.x, pr.y, CvPlan(200, 5, 1, 4), 0.001);
    EXPECT_NE(std::find(r.selected.begin(), r.selected.end(), "x0"), r.selected.end());
    EXPECT_NE(std::find(r.selected.begin(), r.selected.end(), "x1"), r.selected.end());
    EXPECT_LE(r.selected.size(), 4u);
    EXPECT_EQ(r.trace.size(), 5u);
}

TEST(Sbf, NothingPassingIsDegenerate) {
    Problem pr{fixtures::gaussian_features(60, 3, 13), fixtures::gaussian_vector(60, 14)};
    EXPECT_THROW(sbf(kOls, pr.x, pr.y, CvPlan(60, 5, 1, 4), 1e-12), DegenerateError);
    EXPECT_THROW(sbf(kOls, pr.x, pr.y, CvPlan(60, 5, 1, 4), 1.0), ConfigError);
}

TEST(Stepwise, FirstForwardStepMatchesAicOracle) {
    const auto pr = signal_problem(120, 6, 15);
    const auto r = stepwise(pr.x, pr.y, StepDirection::forward);
    ASSERT_FALSE(r.path.empty());
    double best = aic(pr.x.values, pr.y, {});
    Index pick = -1;
    for (Index j = 0; j < 6; ++j) {
        const double a = aic(pr.x.values, pr.y, {j});
        if (a < best) {
            best = a;
            pick = j;
        }
    }
    EXPECT_EQ(r.path[0], "+x" + std::to_string(pick));
    EXPECT_NEAR(r.trace[1], best, 1e-9);
    EXPECT_NEAR(r.trace[0], aic(pr.x.values, pr.y, {}), 1e-9);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        EXPECT_LT(r.trace[i], r.trace[i - 1]);
}

TEST(Stepwise, FinalSubsetIsAFixedPoint) {
    const auto pr = signal_problem(150, 8, 16);
    const auto r = stepwise(pr.x, pr.y, StepDirection::both);
    const auto again = stepwise(pr.x, pr.y, StepDirection::both, &r.selected);
    EXPECT_EQ(again.selected, r.selected);
    EXPECT_TRUE(again.path.empty());
    EXPECT_NE(std::find(r.selected.begin(), r.selected.end(), "x0"), r.selected.end());
}

TEST(Stepwise, PureNoiseKeepsFewCounters) {
    int small = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Problem pr{fixtures::gaussian_features(200, 10, seed * 3), fixtures::gaussian_vector(200, seed * 7)};
        small += stepwise(pr.x, pr.y, StepDirection::forward).selected.size() <= 2;
    }
    EXPECT_GE(small, 4);
}

TEST(Stepwise, OrthogonalTargetGivesEmptySubsetWithNote) {
    // Project the target off [1, X]: no counter can lower the SSE, so every
    // addition only pays the AIC penalty.
    Problem pr{fixtures::gaussian_features(50, 3, 17), fixtures::gaussian_vector(50, 18)};
    Matrix a(50, 4);
    a.col(0).setOnes();
    a.rightCols(3) = pr.x.values;
    pr.y -= a * a.colPivHouseholderQr().solve(pr.y);
    const auto r = stepwise(pr.x, pr.y, StepDirection::forward);
    EXPECT_TRUE(r.selected.empty());
    EXPECT_EQ(r.notes.size(), 1u);
}

TEST(Stepwise, BackwardNeedsFullRankStart) {
    auto pr = signal_problem(40, 4, 18);
    pr.x.values.col(3) = pr.x.values.col(0) + pr.x.values.col(1);
    EXPECT_THROW(stepwise(pr.x, pr.y, StepDirection::backward), NumericalError);
    EXPECT_NO_THROW(stepwise(pr.x, pr.y, StepDirection::forward));
    const auto wide = signal_problem(6, 5, 19);
    EXPECT_THROW(stepwise(wide.x, wide.y, StepDirection::backward), NumericalError);
    EXPECT_THROW(parse_direction("sideways"), ConfigError);
}

TEST(Selection, TraceCsvAndOverlap) {
    const auto pr = signal_problem(60, 4, 20);
    const auto r = stepwise(pr.x, pr.y, StepDirection::forward);
    const auto csv = r.trace_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,aic");
    EXPECT_EQ(overlap({"a", "b", "c"}, {"c", "a", "z"}), 2u);
    EXPECT_EQ(r.to_json().at("method"), "stepwise");
}
