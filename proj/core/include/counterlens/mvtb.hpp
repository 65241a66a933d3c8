#pragma once

#include "counterlens/common.hpp"
#include "counterlens/ensemble.hpp"
#include "counterlens/regressors.hpp"
#include "counterlens/tree.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace counterlens {

struct MvtbOptions {
    int n_trees = 1000;
    double shrinkage = 0.01;
    int depth = 3;
    double subsample = 0.5;
    double min_leaf = 10.0;
    std::uint64_t seed = 3456;
    /// Once fitting runs longer than this many seconds, `progress` is called
    /// every 50 iterations. Never aborts the fit.
    double time_budget_seconds = 60.0;
    std::function<void(int iteration, int total)> progress;
};

/// Multivariate boosted trees: one additive tree sequence per outcome over a
/// shared predictor set. Each iteration commits a single tree to the outcome
/// whose candidate most reduces its standardized residual SSE.
class MvtbModel {
public:
    const std::vector<std::string>& outcomes() const { return outcomes_; }
    const std::vector<std::string>& predictors() const { return standardization_.names; }
    const MvtbOptions& options() const { return options_; }

    /// predictors x outcomes, accumulated split gains in standardized units.
    const Matrix& influence() const { return influence_; }
    /// Outcome index that received each committed tree.
    const std::vector<int>& selection_log() const { return selection_log_; }
    std::vector<int> trees_per_outcome() const;
    /// Standardized training SSE of each outcome: the initial value followed by
    /// one entry per tree committed to that outcome.
    const std::vector<std::vector<double>>& sse_trace() const { return sse_trace_; }

    /// n x outcomes predictions in natural units.
    Matrix predict(const FeatureMatrix& x) const;

    nlohmann::json to_json() const;
    static MvtbModel from_json(const nlohmann::json& doc);

    /// CSV with a header row: counter,<outcome...>
    std::string influence_csv() const;
    /// CSV: iteration,outcome
    std::string selection_log_csv() const;

private:
    friend MvtbModel fit_mvtb(const FeatureMatrix&, const Matrix&, std::vector<std::string>, const MvtbOptions&);

    std::vector<std::string> outcomes_;
    Standardization standardization_;
    MvtbOptions options_;
    Vector outcome_mean_;
    Vector outcome_sd_;
    std::vector<std::vector<RegressionTree>> trees_;
    Matrix influence_;
    std::vector<int> selection_log_;
    std::vector<std::vector<double>> sse_trace_;
};

MvtbModel fit_mvtb(const FeatureMatrix& x, const Matrix& y, std::vector<std::string> outcomes,
                   const MvtbOptions& options = {});

inline Matrix mvtb_predict(const MvtbModel& model, const FeatureMatrix& x) { return model.predict(x); }

/// Influence summed over outcomes, as percentages.
RankingTable mvtb_ranking(const MvtbModel& model);

} // namespace counterlens
