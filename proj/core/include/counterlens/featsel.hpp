#pragma once

#include "counterlens/common.hpp"
#include "counterlens/regressors.hpp"
#include "counterlens/resampling.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace counterlens {

struct SelectionResult {
    std::string method;     // rfe, ga, sa, sbf, stepwise
    std::string estimator;  // method tag of the wrapped model, or "glm"
    std::vector<std::string> selected;  // canonical column order
    /// rfe: CV RMSE per size; ga: best-so-far per generation; sa: best-so-far
    /// per iteration; sbf: per-fold RMSE; stepwise: AIC after each step.
    std::vector<double> trace;
    std::vector<int> trace_index;  // size, generation, iteration, fold or step
    std::string criterion = "cv_rmse";
    double best_score = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::vector<std::string> path;   // stepwise moves, e.g. "+BR_CN"
    std::vector<std::string> notes;  // repairs and other events

    nlohmann::json to_json() const;
    std::string trace_csv() const;
};

/// CV RMSE of `estimator` restricted to `subset` (column names).
double subset_cv_rmse(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y,
                      const CvPlan& plan, const std::vector<std::string>& subset);

/// Recursive feature elimination. Supported estimators: random_forest,
/// bagged_cart and ridge (lambda=0 gives ordinary least squares).
SelectionResult rfe(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y,
                    std::vector<int> sizes, const CvPlan& plan);

struct GaOptions {
    int population = 20;
    int generations = 10;
    std::uint64_t seed = 3456;
    double crossover_rate = 0.8;
    double mutation_rate = 0.0;  // 0 = 1 / number of predictors
    /// Genomes placed first in the initial population, one flag per column.
    std::vector<std::vector<bool>> initial;
};

SelectionResult ga_select(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y,
                          const CvPlan& plan, const GaOptions& options = {});

struct SaOptions {
    int iterations = 200;
    std::uint64_t seed = 3456;
    /// Negative = 0.1 x CV RMSE of the initial subset. Zero = greedy.
    double initial_temperature = -1.0;
    double cooling = 0.95;
};

SelectionResult sa_select(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y,
                          const CvPlan& plan, const SaOptions& options = {});

/// Two-sided p-value of the slope in y ~ 1 + x.
double slope_p_value(const Vector& x, const Vector& y);

/// Selection by filter: counters whose univariate slope p-value is at most
/// `threshold` in at least half of the folds.
SelectionResult sbf(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y,
                    const CvPlan& plan, double threshold);

enum class StepDirection { forward, backward, both };
StepDirection parse_direction(std::string_view text);

/// AIC-guided stepwise linear regression, AIC = n ln(SSE/n) + 2k. May return
/// an empty subset when no counter improves on the intercept-only model.
SelectionResult stepwise(const FeatureMatrix& x, const Vector& y, StepDirection direction,
                         const std::vector<std::string>* start = nullptr);

/// |a ∩ b|
std::size_t overlap(const std::vector<std::string>& a, const std::vector<std::string>& b);

} // namespace counterlens
