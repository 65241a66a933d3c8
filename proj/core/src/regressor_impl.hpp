#pragma once

#include "counterlens/regressors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace counterlens::detail {

/// A fitted method operating on standardized predictors.
class Regressor {
public:
    virtual ~Regressor() = default;

    virtual Vector predict(const Matrix& z) const = 0;
    virtual nlohmann::json parameters() const = 0;

    /// (intercept, coefficients) in standardized predictor space.
    virtual std::optional<std::pair<double, Vector>> standardized_linear() const { return std::nullopt; }
    virtual std::vector<double> trace() const { return {}; }
};

struct FitOutput {
    std::unique_ptr<Regressor> model;
    std::vector<double> raw_importance;
    ImportanceSource source = ImportanceSource::coefficients;
};

FitOutput fit_linear(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_linear(const nlohmann::json& params);

FitOutput fit_knn(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_knn(const nlohmann::json& params);

FitOutput fit_kernel_rbf(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_kernel_rbf(const nlohmann::json& params);

FitOutput fit_mars(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_mars(const nlohmann::json& params);

FitOutput fit_forest(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_forest(const nlohmann::json& params);

FitOutput fit_gbm(const ModelSpec& spec, const Matrix& z, const Vector& y);
std::unique_ptr<Regressor> load_gbm(const nlohmann::json& params);

Vector json_to_vector(const nlohmann::json& array);
nlohmann::json vector_to_json(const Vector& v);
Matrix json_to_matrix(const nlohmann::json& rows);
nlohmann::json matrix_to_json(const Matrix& m);

int as_count(double value, const char* name, int minimum);

/// Rows drawn without replacement for boosting iteration `index` as 0/1
/// weights: floor(fraction * n) rows, at least one.
std::vector<double> boosting_subsample(std::uint64_t stream, std::uint64_t index, std::size_t n, double fraction);

} // namespace counterlens::detail
