#include "regressor_impl.hpp"

#include <algorithm>
#include <numeric>

namespace counterlens::detail {

namespace {

class KnnRegressor final : public Regressor {
public:
    KnnRegressor(Matrix train, Vector target, int k) : train_(std::move(train)), target_(std::move(target)), k_(k) {}

    Vector predict(const Matrix& z) const override {
        const Index n = train_.rows();
        const auto k = static_cast<std::size_t>(std::min<Index>(k_, n));
        Vector out(z.rows());
        std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
        for (Index q = 0; q < z.rows(); ++q) {
            for (Index i = 0; i < n; ++i)
                dist[static_cast<std::size_t>(i)] = {(train_.row(i) - z.row(q)).squaredNorm(), i};
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                sum += target_[dist[j].second];
            out[q] = sum / static_cast<double>(k);
        }
        return out;
    }

    nlohmann::json parameters() const override {
        return {{"k", k_}, {"train", matrix_to_json(train_)}, {"target", vector_to_json(target_)}};
    }

private:
    Matrix train_;
    Vector target_;
    int k_;
};

} // namespace

FitOutput fit_knn(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const int k = as_count(spec.param("k"), "k", 1);
    FitOutput out;
    out.model = std::make_unique<KnnRegressor>(z, y, k);
    out.source = ImportanceSource::filter_fallback;
    return out;
}

std::unique_ptr<Regressor> load_knn(const nlohmann::json& params) {
    return std::make_unique<KnnRegressor>(json_to_matrix(params.at("train")), json_to_vector(params.at("target")),
                                          params.at("k").get<int>());
}

} // namespace counterlens::detail
