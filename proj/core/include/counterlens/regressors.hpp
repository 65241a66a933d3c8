#pragma once

#include "counterlens/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace counterlens {

enum class Method {
    ridge,
    elastic_net,
    pcr,
    pls,
    knn,
    kernel_rbf,
    mars,
    random_forest,
    gbm,
    bagged_cart,
};

enum class Family { linear, nonlinear, tree };

std::string_view to_string(Method method);
std::string_view to_string(Family family);
/// Throws ConfigError for unknown tags.
Method parse_method(std::string_view tag);
Family family_of(Method method);
/// The ten methods, three or more per family.
std::vector<Method> required_methods();

using Hyperparameters = std::map<std::string, double, std::less<>>;

/// Documented defaults per method:
///   ridge          lambda=0.01
///   elastic_net    alpha=0.5 lambda=0.01 max_iter=10000 tol=1e-10
///   pcr, pls       ncomp=0 (0 selects 1..min(p,n-1) by 5-fold CV)
///   knn            k=5
///   kernel_rbf     lambda=0.05 bandwidth=0 (0 = median pairwise distance)
///   mars           max_terms=0 (0 = 2p) penalty=2 max_knots=20 threshold=0.001
///   random_forest  n_trees=200 mtry=0 (0 = max(1, p/3)) min_node_size=5
///                  max_depth=0 bootstrap=1
///   bagged_cart    n_trees=25 min_node_size=2 max_depth=0
///   gbm            n_trees=1000 shrinkage=0.01 depth=3 subsample=0.5 min_leaf=10
/// Regularization strengths act on standardized predictors, and for
/// elastic_net on the target scaled to unit variance, so they are unit-free.
Hyperparameters default_hyperparameters(Method method);

struct ModelSpec {
    Method method = Method::ridge;
    Hyperparameters hyperparameters;  // overrides; unknown names are rejected at fit
    std::uint64_t seed = 3456;
    std::string label;  // empty = method tag

    Family family() const { return family_of(method); }
    std::string display_label() const;
    /// Override if present, else the method default.
    double param(std::string_view name) const;
    void validate() const;

    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& doc);
};

enum class ImportanceSource { coefficients, split_gain, term_gain, filter_fallback, blend_aggregate };

std::string_view to_string(ImportanceSource source);

struct ImportanceVector {
    std::vector<std::string> predictors;
    std::vector<double> scores;  // max 100 unless all zero
    ImportanceSource source = ImportanceSource::coefficients;
};

/// Rescales nonnegative scores so the maximum is 100 (all-zero stays zero).
ImportanceVector scaled_importance(std::vector<std::string> predictors, std::vector<double> raw,
                                   ImportanceSource source);

/// Model-free importance: per-predictor R^2 of a univariate quadratic fit
/// y ~ 1 + x + x^2, scaled to max 100. Used by methods without an internal
/// importance measure (knn, kernel_rbf), which therefore rank identically.
ImportanceVector filter_importance(const FeatureMatrix& x, const Vector& y);

/// Per-predictor mean and population standard deviation captured at fit time.
/// Constant columns get sd = 1 so they map to zero.
struct Standardization {
    std::vector<std::string> names;
    Vector mean;
    Vector sd;

    static Standardization fit(const FeatureMatrix& x);
    /// Aligns columns by name, then centers and scales.
    Matrix apply(const FeatureMatrix& x) const;
    nlohmann::json to_json() const;
    static Standardization from_json(const nlohmann::json& doc);
};

namespace detail {
class Regressor;
}

/// A trained regressor. Immutable and cheap to copy; safe to share across
/// threads.
class FittedModel {
public:
    static constexpr int kFormatVersion = 1;

    const ModelSpec& spec() const;
    std::string label() const { return spec().display_label(); }

    /// One prediction per row. Columns are matched by name.
    Vector predict(const FeatureMatrix& x) const;
    const ImportanceVector& importance() const;
    double train_rmse() const;
    const Standardization& standardization() const;
    const std::vector<std::string>& predictors() const { return standardization().names; }

    /// Natural-unit coefficients for the linear family, nullopt otherwise.
    struct Linear {
        double intercept;
        Vector coefficients;
    };
    std::optional<Linear> linear_coefficients() const;

    /// Per-iteration training SSE for boosted models, natural units.
    const std::vector<double>& training_trace() const;

    nlohmann::json to_json() const;
    /// Throws FormatError on a missing or mismatched format version.
    static FittedModel from_json(const nlohmann::json& doc);

private:
    struct State;
    explicit FittedModel(std::shared_ptr<const State> state) : state_(std::move(state)) {}
    friend FittedModel fit(const ModelSpec&, const FeatureMatrix&, const Vector&);

    std::shared_ptr<const State> state_;
};

FittedModel fit(const ModelSpec& spec, const FeatureMatrix& x, const Vector& y);
inline Vector predict(const FittedModel& model, const FeatureMatrix& x) { return model.predict(x); }
inline const ImportanceVector& importance(const FittedModel& model) { return model.importance(); }

/// Stream seed shared by the gbm regressor and multivariate boosting so that
/// matched seeds give matched subsamples.
std::uint64_t boosting_stream(std::uint64_t seed);

} // namespace counterlens
