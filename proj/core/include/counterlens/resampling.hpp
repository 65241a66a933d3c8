#pragma once

#include "counterlens/common.hpp"
#include "counterlens/regressors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace counterlens {

/// Repeated k-fold assignment. Within a repeat, fold sizes differ by at most
/// one. Fully determined by (seed, n, n_folds, n_repeats).
class CvPlan {
public:
    CvPlan(std::size_t n, int n_folds, int n_repeats, std::uint64_t seed);

    std::size_t rows() const { return n_; }
    int n_folds() const { return n_folds_; }
    int n_repeats() const { return n_repeats_; }
    std::uint64_t seed() const { return seed_; }

    int fold_of(int repeat, std::size_t row) const { return assignment_[static_cast<std::size_t>(repeat)][row]; }
    std::vector<std::size_t> train_rows(int repeat, int fold) const;
    std::vector<std::size_t> test_rows(int repeat, int fold) const;

    nlohmann::json to_json() const;

private:
    std::size_t n_;
    int n_folds_;
    int n_repeats_;
    std::uint64_t seed_;
    std::vector<std::vector<int>> assignment_;
};

struct OutOfFold {
    Vector predictions;  // per-row mean over repeats
    double cv_rmse = 0.0;
};

/// Held-out predictions for every row; fold fits may run concurrently. A fold
/// failure is rethrown with its repeat and fold index.
OutOfFold out_of_fold(const ModelSpec& spec, const FeatureMatrix& x, const Vector& y, const CvPlan& plan);

} // namespace counterlens
