#include "regressor_impl.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace counterlens {

namespace {

struct MethodInfo {
    Method method;
    std::string_view tag;
    Family family;
};

constexpr std::array<MethodInfo, 10> kMethods{{
    {Method::ridge, "ridge", Family::linear},
    {Method::elastic_net, "elastic_net", Family::linear},
    {Method::pcr, "pcr", Family::linear},
    {Method::pls, "pls", Family::linear},
    {Method::knn, "knn", Family::nonlinear},
    {Method::kernel_rbf, "kernel_rbf", Family::nonlinear},
    {Method::mars, "mars", Family::nonlinear},
    {Method::random_forest, "random_forest", Family::tree},
    {Method::gbm, "gbm", Family::tree},
    {Method::bagged_cart, "bagged_cart", Family::tree},
}};

const MethodInfo& info(Method method) {
    for (const auto& m : kMethods)
        if (m.method == method)
            return m;
    throw ConfigError("unknown method");
}

} // namespace

std::string_view to_string(Method method) { return info(method).tag; }

std::string_view to_string(Family family) {
    switch (family) {
    case Family::linear: return "linear";
    case Family::nonlinear: return "nonlinear";
    case Family::tree: return "tree";
    }
    return "unknown";
}

Method parse_method(std::string_view tag) {
    for (const auto& m : kMethods)
        if (m.tag == tag)
            return m.method;
    throw ConfigError("unknown method '" + std::string(tag) + "'");
}

Family family_of(Method method) { return info(method).family; }

std::vector<Method> required_methods() {
    std::vector<Method> out;
    for (const auto& m : kMethods)
        out.push_back(m.method);
    return out;
}

Hyperparameters default_hyperparameters(Method method) {
    switch (method) {
    case Method::ridge: return {{"lambda", 0.01}};
    case Method::elastic_net: return {{"alpha", 0.5}, {"lambda", 0.01}, {"max_iter", 10000}, {"tol", 1e-10}};
    case Method::pcr:
    case Method::pls: return {{"ncomp", 0}};
    case Method::knn: return {{"k", 5}};
    case Method::kernel_rbf: return {{"lambda", 0.05}, {"bandwidth", 0}};
    case Method::mars: return {{"max_terms", 0}, {"penalty", 2}, {"max_knots", 20}, {"threshold", 0.001}};
    case Method::random_forest:
        return {{"n_trees", 200}, {"mtry", 0}, {"min_node_size", 5}, {"max_depth", 0}, {"bootstrap", 1}};
    case Method::bagged_cart: return {{"n_trees", 25}, {"min_node_size", 2}, {"max_depth", 0}};
    case Method::gbm:
        return {{"n_trees", 1000}, {"shrinkage", 0.01}, {"depth", 3}, {"subsample", 0.5}, {"min_leaf", 10}};
    }
    throw ConfigError("unknown method");
}

std::string ModelSpec::display_label() const { return label.empty() ? std::string(to_string(method)) : label; }

double ModelSpec::param(std::string_view name) const {
    if (auto it = hyperparameters.find(name); it != hyperparameters.end())
        return it->second;
    const auto defaults = default_hyperparameters(method);
    if (auto it = defaults.find(name); it != defaults.end())
        return it->second;
    throw ConfigError(std::string(to_string(method)) + " has no hyperparameter '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    const auto defaults = default_hyperparameters(method);
    for (const auto& [name, value] : hyperparameters) {
        if (!defaults.contains(name))
            throw ConfigError(std::string(to_string(method)) + " has no hyperparameter '" + name + "'");
        if (!std::isfinite(value))
            throw ConfigError(std::string(to_string(method)) + ": hyperparameter '" + name + "' is not finite");
    }
}

nlohmann::json ModelSpec::to_json() const {
    nlohmann::json hp = nlohmann::json::object();
    for (const auto& [name, value] : hyperparameters)
        hp[name] = value;
    nlohmann::json doc = {{"method", to_string(method)}, {"hyperparameters", hp}, {"seed", seed}};
    if (!label.empty())
        doc["label"] = label;
    return doc;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& doc) {
    if (doc.is_string()) {
        ModelSpec spec;
        spec.method = parse_method(doc.get<std::string>());
        return spec;
    }
    if (!doc.is_object() || !doc.contains("method"))
        throw ConfigError("model entry needs a 'method'");
    ModelSpec spec;
    for (const auto& [key, value] : doc.items()) {
        if (key == "method")
            spec.method = parse_method(value.get<std::string>());
        else if (key == "hyperparameters")
            for (const auto& [name, v] : value.items()) {
                if (!v.is_number())
                    throw ConfigError("hyperparameter '" + name + "' must be a number");
                spec.hyperparameters[name] = v.get<double>();
            }
        else if (key == "seed")
            spec.seed = value.get<std::uint64_t>();
        else if (key == "label")
            spec.label = value.get<std::string>();
        else
            throw ConfigError("unknown model field '" + key + "'");
    }
    spec.validate();
    return spec;
}

std::string_view to_string(ImportanceSource source) {
    switch (source) {
    case ImportanceSource::coefficients: return "coefficients";
    case ImportanceSource::split_gain: return "split_gain";
    case ImportanceSource::term_gain: return "term_gain";
    case ImportanceSource::filter_fallback: return "filter_fallback";
    case ImportanceSource::blend_aggregate: return "blend_aggregate";
    }
    return "unknown";
}

namespace {

ImportanceSource parse_source(std::string_view tag) {
    for (auto s : {ImportanceSource::coefficients, ImportanceSource::split_gain, ImportanceSource::term_gain,
                   ImportanceSource::filter_fallback, ImportanceSource::blend_aggregate})
        if (to_string(s) == tag)
            return s;
    throw FormatError("unknown importance source '" + std::string(tag) + "'");
}

} // namespace

ImportanceVector scaled_importance(std::vector<std::string> predictors, std::vector<double> raw,
                                   ImportanceSource source) {
    if (predictors.size() != raw.size())
        throw SizeError("importance scores and predictor names differ in length");
    double top = 0.0;
    for (double& v : raw) {
        if (!std::isfinite(v) || v < 0.0)
            v = 0.0;
        top = std::max(top, v);
    }
    if (top > 0.0)
        for (double& v : raw)
            v = 100.0 * v / top;
    return {std::move(predictors), std::move(raw), source};
}

ImportanceVector filter_importance(const FeatureMatrix& x, const Vector& y) {
    if (x.rows() != y.size())
        throw SizeError("filter importance: rows and target differ in length");
    const Index n = x.rows();
    std::vector<double> raw(static_cast<std::size_t>(x.cols()), 0.0);
    const Vector yc = y.array() - y.mean();
    const double sst = yc.squaredNorm();
    if (sst > 0.0 && n >= 3) {
        for (Index j = 0; j < x.cols(); ++j) {
            const Vector col = x.values.col(j);
            const double sd = population_sd(col);
            if (sd == 0.0)
                continue;
            Matrix design(n, 3);
            design.col(0).setOnes();
            design.col(1) = (col.array() - col.mean()) / sd;
            design.col(2) = design.col(1).array().square();
            Eigen::ColPivHouseholderQR<Matrix> qr(design);
            const Vector fitted = design * qr.solve(y);
            const double sse = (y - fitted).squaredNorm();
            raw[static_cast<std::size_t>(j)] = std::clamp(1.0 - sse / sst, 0.0, 1.0);
        }
    }
    return scaled_importance(x.names, std::move(raw), ImportanceSource::filter_fallback);
}

Standardization Standardization::fit(const FeatureMatrix& x) {
    Standardization s;
    s.names = x.names;
    s.mean.resize(x.cols());
    s.sd.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        const Vector col = x.values.col(j);
        s.mean[j] = col.mean();
        const double sd = std::sqrt((col.array() - s.mean[j]).square().mean());
        s.sd[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

Matrix Standardization::apply(const FeatureMatrix& x) const {
    const FeatureMatrix aligned = x.aligned_to(names);
    Matrix z = aligned.values;
    for (Index j = 0; j < z.cols(); ++j)
        z.col(j) = (z.col(j).array() - mean[j]) / sd[j];
    return z;
}

nlohmann::json Standardization::to_json() const {
    return {{"names", names}, {"mean", detail::vector_to_json(mean)}, {"sd", detail::vector_to_json(sd)}};
}

Standardization Standardization::from_json(const nlohmann::json& doc) {
    Standardization s;
    s.names = doc.at("names").get<std::vector<std::string>>();
    s.mean = detail::json_to_vector(doc.at("mean"));
    s.sd = detail::json_to_vector(doc.at("sd"));
    if (s.mean.size() != static_cast<Index>(s.names.size()) || s.sd.size() != s.mean.size())
        throw FormatError("standardization arrays differ in length");
    return s;
}

struct FittedModel::State {
    ModelSpec spec;
    Standardization standardization;
    std::shared_ptr<const detail::Regressor> regressor;
    ImportanceVector importance;
    double train_rmse = 0.0;
    std::vector<double> trace;
};

const ModelSpec& FittedModel::spec() const { return state_->spec; }
const ImportanceVector& FittedModel::importance() const { return state_->importance; }
double FittedModel::train_rmse() const { return state_->train_rmse; }
const Standardization& FittedModel::standardization() const { return state_->standardization; }
const std::vector<double>& FittedModel::training_trace() const { return state_->trace; }

Vector FittedModel::predict(const FeatureMatrix& x) const {
    return state_->regressor->predict(state_->standardization.apply(x));
}

std::optional<FittedModel::Linear> FittedModel::linear_coefficients() const {
    const auto lin = state_->regressor->standardized_linear();
    if (!lin)
        return std::nullopt;
    const auto& s = state_->standardization;
    Linear out{lin->first, Vector(lin->second.size())};
    for (Index j = 0; j < lin->second.size(); ++j) {
        out.coefficients[j] = lin->second[j] / s.sd[j];
        out.intercept -= out.coefficients[j] * s.mean[j];
    }
    return out;
}

namespace {

detail::FitOutput dispatch_fit(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    switch (spec.method) {
    case Method::ridge:
    case Method::elastic_net:
    case Method::pcr:
    case Method::pls: return detail::fit_linear(spec, z, y);
    case Method::knn: return detail::fit_knn(spec, z, y);
    case Method::kernel_rbf: return detail::fit_kernel_rbf(spec, z, y);
    case Method::mars: return detail::fit_mars(spec, z, y);
    case Method::random_forest:
    case Method::bagged_cart: return detail::fit_forest(spec, z, y);
    case Method::gbm: return detail::fit_gbm(spec, z, y);
    }
    throw ConfigError("unknown method");
}

std::unique_ptr<detail::Regressor> dispatch_load(Method method, const nlohmann::json& params) {
    switch (method) {
    case Method::ridge:
    case Method::elastic_net:
    case Method::pcr:
    case Method::pls: return detail::load_linear(params);
    case Method::knn: return detail::load_knn(params);
    case Method::kernel_rbf: return detail::load_kernel_rbf(params);
    case Method::mars: return detail::load_mars(params);
    case Method::random_forest:
    case Method::bagged_cart: return detail::load_forest(params);
    case Method::gbm: return detail::load_gbm(params);
    }
    throw FormatError("unknown method");
}

} // namespace

FittedModel fit(const ModelSpec& spec, const FeatureMatrix& x, const Vector& y) {
    spec.validate();
    if (x.rows() != y.size())
        throw SizeError("predictor rows and target length differ");
    if (x.rows() < 2 || x.cols() < 1)
        throw SizeError(std::string(to_string(spec.method)) + ": needs at least 2 rows and 1 predictor");
    require_finite(x.values, "predictors");
    require_finite(y, "target");

    auto state = std::make_shared<FittedModel::State>();
    state->spec = spec;
    state->standardization = Standardization::fit(x);
    const Matrix z = state->standardization.apply(x);
    auto out = dispatch_fit(spec, z, y);
    const Vector fitted = out.model->predict(z);
    if (!fitted.allFinite())
        throw NumericalError(std::string(to_string(spec.method)) + ": fitted values are not finite");
    state->train_rmse = rmse(y, fitted);
    state->trace = out.model->trace();
    state->importance = out.source == ImportanceSource::filter_fallback
                            ? filter_importance(x, y)
                            : scaled_importance(x.names, std::move(out.raw_importance), out.source);
    state->regressor = std::move(out.model);
    return FittedModel(std::move(state));
}

nlohmann::json FittedModel::to_json() const {
    const auto& s = *state_;
    return {{"format_version", kFormatVersion},
            {"spec", s.spec.to_json()},
            {"standardization", s.standardization.to_json()},
            {"importance", {{"source", to_string(s.importance.source)}, {"scores", s.importance.scores}}},
            {"train_rmse", s.train_rmse},
            {"parameters", s.regressor->parameters()}};
}

FittedModel FittedModel::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("format_version"))
        throw FormatError("model document has no format_version");
    if (doc.at("format_version") != kFormatVersion)
        throw FormatError("model format version " + doc.at("format_version").dump() + " is not supported (expected " +
                          std::to_string(kFormatVersion) + ")");
    try {
        auto state = std::make_shared<State>();
        state->spec = ModelSpec::from_json(doc.at("spec"));
        state->standardization = Standardization::from_json(doc.at("standardization"));
        const auto& imp = doc.at("importance");
        state->importance.predictors = state->standardization.names;
        state->importance.scores = imp.at("scores").get<std::vector<double>>();
        state->importance.source = parse_source(imp.at("source").get<std::string>());
        state->train_rmse = doc.at("train_rmse").get<double>();
        auto regressor = dispatch_load(state->spec.method, doc.at("parameters"));
        state->trace = regressor->trace();
        state->regressor = std::move(regressor);
        return FittedModel(std::move(state));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model document: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed model document: ") + e.what());
    }
}

std::uint64_t boosting_stream(std::uint64_t seed) { return stream_seed(seed, "gbm"); }

namespace detail {

Vector json_to_vector(const nlohmann::json& array) {
    const auto values = array.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Matrix json_to_matrix(const nlohmann::json& rows) {
    const auto n = static_cast<Index>(rows.size());
    const Index p = n > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
    Matrix m(n, p);
    for (Index i = 0; i < n; ++i) {
        const auto& row = rows.at(static_cast<std::size_t>(i));
        if (static_cast<Index>(row.size()) != p)
            throw FormatError("ragged matrix");
        for (Index j = 0; j < p; ++j)
            m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j)
            row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(std::move(row));
    }
    return rows;
}

int as_count(double value, const char* name, int minimum) {
    if (!(value >= minimum) || value > std::numeric_limits<int>::max() || value != std::floor(value))
        throw ConfigError(std::string(name) + " must be an integer >= " + std::to_string(minimum));
    return static_cast<int>(value);
}

} // namespace detail

} // namespace counterlens
