#pragma once

#include "counterlens/common.hpp"
#include "counterlens/dataset.hpp"
#include "counterlens/regressors.hpp"
#include "counterlens/resampling.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace counterlens {

struct RankingEntry {
    std::string counter;
    double percentage = 0.0;
};

/// Counter percentages summing to 100, descending, ties by counter name.
struct RankingTable {
    std::vector<RankingEntry> entries;
    std::string method;
    std::string objective;
    bool active = true;  // false for zero-weight ensemble members

    /// The first min(k, size) counters.
    std::vector<std::string> top(std::size_t k) const;
    double percentage_of(std::string_view counter) const;
};

/// Converts nonnegative scores to a RankingTable. All-zero scores are shared
/// equally so the table still sums to 100.
RankingTable make_ranking(const std::vector<std::string>& counters, const std::vector<double>& scores,
                          std::string method, std::string objective);

/// min ||A w - b|| subject to w >= 0 (Lawson-Hanson active set).
Vector nnls(const Matrix& a, const Vector& b, double tolerance = 1e-12);

struct EnsembleMember {
    FittedModel model;  // refit on the full training set
    Vector oof;
    double cv_rmse = 0.0;
    double weight = 0.0;
    bool active() const { return weight > 0.0; }
};

struct BlendOptions {
    /// Drop members whose fit fails instead of aborting; at least two must
    /// survive.
    bool drop_failed_members = false;
};

class EnsembleModel {
public:
    const std::vector<EnsembleMember>& members() const { return members_; }
    double intercept() const { return intercept_; }
    Vector weights() const;
    /// n x members matrix of out-of-fold predictions used for the blend.
    const Matrix& oof_design() const { return oof_design_; }
    const std::string& metric_name() const { return metric_name_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// intercept + sum_m weight_m * member_m(x)
    Vector predict(const FeatureMatrix& x) const;
    /// Same combination applied to the stored out-of-fold predictions.
    Vector oof_predictions() const;

    /// Writes <dir>/ensemble.json plus one <label>.model.json per member.
    void save(const std::filesystem::path& dir) const;
    static EnsembleModel load(const std::filesystem::path& dir);

private:
    friend EnsembleModel blend(const std::vector<ModelSpec>&, const FeatureMatrix&, const Vector&,
                               const CvPlan&, std::string, const BlendOptions&);
    std::vector<EnsembleMember> members_;
    double intercept_ = 0.0;
    Matrix oof_design_;
    std::string metric_name_;
    std::vector<std::string> warnings_;
};

/// Collects every member's out-of-fold predictions under one plan, solves a
/// nonnegative least-squares blend with a free intercept, then refits each
/// member on all rows.
EnsembleModel blend(const std::vector<ModelSpec>& specs, const FeatureMatrix& x, const Vector& y,
                    const CvPlan& plan, std::string metric_name = {}, const BlendOptions& options = {});

/// Blend-weighted sum of member importances, as percentages. With
/// weighted = false every active member counts once (plain summation).
RankingTable ensemble_importance(const EnsembleModel& ensemble, bool weighted = true);

/// One table per member, inactive members included and flagged.
std::vector<RankingTable> member_rankings(const EnsembleModel& ensemble);

/// Pearson correlations among member predictions on x.
CorrelationMatrix model_correlation(const EnsembleModel& ensemble, const FeatureMatrix& x);

} // namespace counterlens
