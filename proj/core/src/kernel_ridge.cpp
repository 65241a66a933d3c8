#include "regressor_impl.hpp"

#include <algorithm>
#include <cmath>

namespace counterlens::detail {

namespace {

class KernelRidgeRegressor final : public Regressor {
public:
    KernelRidgeRegressor(Matrix train, Vector alpha, double offset, double bandwidth)
        : train_(std::move(train)), alpha_(std::move(alpha)), offset_(offset), bandwidth_(bandwidth) {}

    Vector predict(const Matrix& z) const override {
        const double gamma = 1.0 / (2.0 * bandwidth_ * bandwidth_);
        Vector out(z.rows());
        for (Index q = 0; q < z.rows(); ++q) {
            double s = 0.0;
            for (Index i = 0; i < train_.rows(); ++i)
                s += alpha_[i] * std::exp(-gamma * (train_.row(i) - z.row(q)).squaredNorm());
            out[q] = offset_ + s;
        }
        return out;
    }

    nlohmann::json parameters() const override {
        return {{"bandwidth", bandwidth_},
                {"offset", offset_},
                {"train", matrix_to_json(train_)},
                {"alpha", vector_to_json(alpha_)}};
    }

private:
    Matrix train_;
    Vector alpha_;
    double offset_;
    double bandwidth_;
};

double median_pairwise_distance(const Matrix& z) {
    std::vector<double> d;
    const Index n = z.rows();
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            d.push_back((z.row(i) - z.row(j)).norm());
    if (d.empty())
        return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double m = *mid;
    if (d.size() % 2 == 0) {
        double lower = *std::max_element(d.begin(), mid);
        m = 0.5 * (m + lower);
    }
    return m > 0.0 ? m : 1.0;
}

} // namespace

// Kernel ridge regression with a Gaussian kernel; the fitted function equals
// the posterior mean of a zero-mean GP on the centered target.
FitOutput fit_kernel_rbf(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const double lambda = spec.param("lambda");
    if (!(lambda > 0.0))
        throw ConfigError("kernel_rbf: lambda must be positive");
    double bandwidth = spec.param("bandwidth");
    if (bandwidth < 0.0)
        throw ConfigError("kernel_rbf: bandwidth must be nonnegative");
    if (bandwidth == 0.0)
        bandwidth = median_pairwise_distance(z);

    const Index n = z.rows();
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
        k(i, i) = 1.0 + lambda;
        for (Index j = i + 1; j < n; ++j) {
            const double v = std::exp(-gamma * (z.row(i) - z.row(j)).squaredNorm());
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    const double offset = y.mean();
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success)
        throw NumericalError("kernel_rbf: kernel matrix is not positive definite");
    Vector alpha = llt.solve((y.array() - offset).matrix());

    FitOutput out;
    out.model = std::make_unique<KernelRidgeRegressor>(z, std::move(alpha), offset, bandwidth);
    out.source = ImportanceSource::filter_fallback;
    return out;
}

std::unique_ptr<Regressor> load_kernel_rbf(const nlohmann::json& params) {
    return std::make_unique<KernelRidgeRegressor>(json_to_matrix(params.at("train")),
                                                  json_to_vector(params.at("alpha")),
                                                  params.at("offset").get<double>(),
                                                  params.at("bandwidth").get<double>());
}

} // namespace counterlens::detail
