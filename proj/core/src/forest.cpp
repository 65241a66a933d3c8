#include "regressor_impl.hpp"

#include "counterlens/parallel.hpp"
#include "counterlens/random.hpp"
#include "counterlens/tree.hpp"

#include <algorithm>

namespace counterlens::detail {

namespace {

class ForestRegressor final : public Regressor {
public:
    explicit ForestRegressor(std::vector<RegressionTree> trees) : trees_(std::move(trees)) {}

    Vector predict(const Matrix& z) const override {
        Vector out = Vector::Zero(z.rows());
        for (const auto& t : trees_)
            out += t.predict(z);
        return out / static_cast<double>(trees_.size());
    }

    nlohmann::json parameters() const override {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_)
            trees.push_back(t.to_json());
        return {{"trees", trees}};
    }

private:
    std::vector<RegressionTree> trees_;
};

} // namespace

// random_forest and bagged_cart differ only in feature subsampling and
// defaults; bagged_cart always bootstraps and tries every feature.
FitOutput fit_forest(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const bool bagged = spec.method == Method::bagged_cart;
    const int p = static_cast<int>(z.cols());
    const auto n = static_cast<std::size_t>(z.rows());
    const int n_trees = as_count(spec.param("n_trees"), "n_trees", 1);

    TreeParams params;
    params.max_depth = as_count(spec.param("max_depth"), "max_depth", 0);
    params.min_split = as_count(spec.param("min_node_size"), "min_node_size", 1);
    bool bootstrap = true;
    if (!bagged) {
        const int mtry = as_count(spec.param("mtry"), "mtry", 0);
        params.mtry = mtry == 0 ? std::max(1, p / 3) : std::min(mtry, p);
        bootstrap = spec.param("bootstrap") != 0.0;
    }

    const SortedColumns sorted(z);
    const std::string_view tag = to_string(spec.method);
    std::vector<RegressionTree> trees(static_cast<std::size_t>(n_trees));
    std::vector<std::vector<double>> gains(static_cast<std::size_t>(n_trees));
    parallel_for(trees.size(), [&](std::size_t t) {
        Rng rng(stream_seed(spec.seed, tag, t));
        std::vector<double> weights(n, bootstrap ? 0.0 : 1.0);
        if (bootstrap)
            for (std::size_t draw = 0; draw < n; ++draw)
                weights[rng.index(n)] += 1.0;
        gains[t].assign(static_cast<std::size_t>(p), 0.0);
        trees[t] = grow_tree(z, sorted, y, weights, params, &rng, gains[t]);
    });

    FitOutput out;
    out.raw_importance.assign(static_cast<std::size_t>(p), 0.0);
    for (const auto& g : gains)
        for (int j = 0; j < p; ++j)
            out.raw_importance[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(j)];
    out.source = ImportanceSource::split_gain;
    out.model = std::make_unique<ForestRegressor>(std::move(trees));
    return out;
}

std::unique_ptr<Regressor> load_forest(const nlohmann::json& params) {
    std::vector<RegressionTree> trees;
    for (const auto& t : params.at("trees"))
        trees.push_back(RegressionTree::from_json(t));
    if (trees.empty())
        throw FormatError("forest has no trees");
    return std::make_unique<ForestRegressor>(std::move(trees));
}

} // namespace counterlens::detail
