#pragma once

#include "counterlens/common.hpp"
#include "counterlens/random.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace counterlens {

/// Per-feature ascending argsort of a predictor matrix, built once per fit and
/// shared by every tree grown on that matrix.
class SortedColumns {
public:
    explicit SortedColumns(const Matrix& x);

    const std::vector<int>& order(Index feature) const { return order_[static_cast<std::size_t>(feature)]; }
    Index features() const { return static_cast<Index>(order_.size()); }

private:
    std::vector<std::vector<int>> order_;
};

struct TreeParams {
    int max_depth = 0;       // 0 = unbounded
    double min_split = 2.0;  // node weight required to attempt a split
    double min_leaf = 1.0;   // minimum weight on each side of a split
    int mtry = 0;            // features tried per node, 0 = all
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

/// CART regression tree with axis-aligned splits x[feature] <= threshold.
class RegressionTree {
public:
    RegressionTree() = default;
    explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    double predict(const Matrix& x, Index row) const { return nodes_[leaf_of(x, row)].value; }
    Vector predict(const Matrix& x) const;
    std::size_t leaf_of(const Matrix& x, Index row) const;

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::vector<TreeNode>& nodes() { return nodes_; }
    std::size_t leaf_count() const;

    nlohmann::json to_json() const;
    static RegressionTree from_json(const nlohmann::json& doc);

private:
    std::vector<TreeNode> nodes_;
};

/// Grows a tree level by level on rows with positive weight. Each split is the
/// one with the largest weighted SSE reduction; ties go to the lower feature
/// index and then the lower threshold. The reduction of every committed split
/// is added to gain[feature]. `rng` is only drawn from when mtry < features.
RegressionTree grow_tree(const Matrix& x, const SortedColumns& sorted, const Vector& target,
                         std::span<const double> weights, const TreeParams& params, Rng* rng,
                         std::vector<double>& gain);

/// Replaces each leaf value with the mean target of all rows of `x` that land
/// in it. Leaves no row reaches keep their value.
void refit_leaves(RegressionTree& tree, const Matrix& x, const Vector& target);

} // namespace counterlens
