#include "regressor_impl.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/random.hpp"
#include "counterlens/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace counterlens::detail {

std::vector<double> boosting_subsample(std::uint64_t stream, std::uint64_t index, std::size_t n, double fraction) {
    std::vector<double> weights(n, 0.0);
    auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    m = std::clamp<std::size_t>(m, 1, n);
    if (m == n) {
        std::fill(weights.begin(), weights.end(), 1.0);
        return weights;
    }
    Rng rng(stream_seed(stream, "subsample", index));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < m; ++k) {
        std::swap(pool[k], pool[k + rng.index(n - k)]);
        weights[pool[k]] = 1.0;
    }
    return weights;
}

namespace {

class GbmRegressor final : public Regressor {
public:
    GbmRegressor(double mean, double scale, double shrinkage, std::vector<RegressionTree> trees,
                 std::vector<double> trace)
        : mean_(mean), scale_(scale), shrinkage_(shrinkage), trees_(std::move(trees)), trace_(std::move(trace)) {}

    Vector predict(const Matrix& z) const override {
        Vector f = Vector::Zero(z.rows());
        for (const auto& t : trees_)
            for (Index i = 0; i < z.rows(); ++i)
                f[i] += shrinkage_ * t.predict(z, i);
        return (mean_ + scale_ * f.array()).matrix();
    }

    nlohmann::json parameters() const override {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_)
            trees.push_back(t.to_json());
        return {{"mean", mean_}, {"scale", scale_}, {"shrinkage", shrinkage_}, {"trees", trees},
                {"trace", trace_}};
    }

    std::vector<double> trace() const override { return trace_; }

private:
    double mean_;
    double scale_;
    double shrinkage_;
    std::vector<RegressionTree> trees_;
    std::vector<double> trace_;
};

} // namespace

// Each tree is grown on a subsample, then its leaf values are reset to the
// mean residual of all training rows in the leaf. With shrinkage in (0, 1]
// this makes every step a nonincreasing move in full-data SSE.
FitOutput fit_gbm(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const int n_trees = as_count(spec.param("n_trees"), "n_trees", 1);
    const double shrinkage = spec.param("shrinkage");
    const int depth = as_count(spec.param("depth"), "depth", 1);
    const double fraction = spec.param("subsample");
    const int min_leaf = as_count(spec.param("min_leaf"), "min_leaf", 1);
    if (!(shrinkage > 0.0 && shrinkage <= 1.0))
        throw ConfigError("gbm: shrinkage must be in (0, 1]");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("gbm: subsample must be in (0, 1]");

    const Index n = z.rows();
    const int p = static_cast<int>(z.cols());
    const double mu = mean(y);
    double scale = population_sd(y);
    if (scale == 0.0)
        scale = 1.0;
    Vector residual = (y.array() - mu) / scale;

    TreeParams params;
    params.max_depth = depth;
    params.min_leaf = min_leaf;
    params.min_split = 2.0 * min_leaf;

    const SortedColumns sorted(z);
    const std::uint64_t stream = boosting_stream(spec.seed);
    std::vector<RegressionTree> trees;
    trees.reserve(static_cast<std::size_t>(n_trees));
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(n_trees));
    FitOutput out;
    out.raw_importance.assign(static_cast<std::size_t>(p), 0.0);

    for (int j = 0; j < n_trees; ++j) {
        const auto weights = boosting_subsample(stream, static_cast<std::uint64_t>(j), static_cast<std::size_t>(n), fraction);
        RegressionTree tree = grow_tree(z, sorted, residual, weights, params, nullptr, out.raw_importance);
        refit_leaves(tree, z, residual);
        for (Index i = 0; i < n; ++i)
            residual[i] -= shrinkage * tree.predict(z, i);
        trace.push_back(scale * scale * residual.squaredNorm());
        trees.push_back(std::move(tree));
    }

    out.source = ImportanceSource::split_gain;
    out.model = std::make_unique<GbmRegressor>(mu, scale, shrinkage, std::move(trees), std::move(trace));
    return out;
}

std::unique_ptr<Regressor> load_gbm(const nlohmann::json& params) {
    std::vector<RegressionTree> trees;
    for (const auto& t : params.at("trees"))
        trees.push_back(RegressionTree::from_json(t));
    return std::make_unique<GbmRegressor>(params.at("mean").get<double>(), params.at("scale").get<double>(),
                                          params.at("shrinkage").get<double>(), std::move(trees),
                                          params.at("trace").get<std::vector<double>>());
}

} // namespace counterlens::detail
