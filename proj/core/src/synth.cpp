#include "counterlens/synth.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace counterlens {

namespace {

constexpr double kRateLow = 0.01;   // scaled rates are log-uniform on [kRateLow, 1]
constexpr double kKnee = 0.1;       // hinge and split point on the scaled rate
constexpr double kCyclesLow = 1e9;
constexpr double kCyclesHigh = 1e11;
constexpr std::array<double, 3> kRateUpper = {1.0, 0.5, 0.25};

double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
}

} // namespace

std::string_view to_string(Construction c) {
    switch (c) {
    case Construction::linear: return "linear";
    case Construction::hinge: return "hinge";
    case Construction::tree: return "tree";
    }
    return "unknown";
}

Construction parse_construction(std::string_view text) {
    if (text == "linear")
        return Construction::linear;
    if (text == "hinge")
        return Construction::hinge;
    if (text == "tree")
        return Construction::tree;
    throw ConfigError("unknown construction '" + std::string(text) + "'");
}

void SynthRecipe::validate() const {
    if (n_rows < 10)
        throw ConfigError("synth needs at least 10 rows");
    const auto names = CounterSchema::standard().predictor_names();
    if (planted.empty()) {
        if (planted_count < 1 || planted_count > names.size())
            throw ConfigError("planted_count must lie in [1, 25]");
    } else {
        for (std::size_t i = 0; i < planted.size(); ++i) {
            if (std::find(names.begin(), names.end(), planted[i]) == names.end())
                throw ConfigError("planted counter '" + planted[i] + "' is not a predictor");
            if (std::find(planted.begin(), planted.begin() + static_cast<std::ptrdiff_t>(i), planted[i]) !=
                planted.begin() + static_cast<std::ptrdiff_t>(i))
                throw ConfigError("planted counter '" + planted[i] + "' listed twice");
        }
    }
    if (effects.empty() || std::any_of(effects.begin(), effects.end(), [](double e) { return !std::isfinite(e); }))
        throw ConfigError("effects must be a nonempty list of finite numbers");
    if (!(noise >= 0.0) || !std::isfinite(noise))
        throw ConfigError("noise must be finite and nonnegative");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw ConfigError("rho must lie in [-1, 1]");
    if (rho < 0.0)
        throw ConfigError("rho < 0 is infeasible: a shared latent signal cannot make four outcomes pairwise "
                          "negatively correlated; use rho in [0, 1]");
    for (const auto& m : metrics)
        if (!std::isfinite(m.offset) || !std::isfinite(m.scale))
            throw ConfigError("metric offset and scale must be finite");
}

SynthRecipe SynthRecipe::with_construction(Construction c) const {
    SynthRecipe r = *this;
    for (auto& m : r.metrics)
        m.construction = c;
    return r;
}

nlohmann::json SynthRecipe::to_json() const {
    nlohmann::json ms = nlohmann::json::object();
    for (std::size_t m = 0; m < metrics.size(); ++m)
        ms[std::string(kMetricNames[m])] = {{"construction", to_string(metrics[m].construction)},
                                            {"offset", metrics[m].offset},
                                            {"scale", metrics[m].scale}};
    return {{"n_rows", n_rows}, {"planted", planted}, {"planted_count", planted_count}, {"effects", effects},
            {"noise", noise},   {"rho", rho},         {"metrics", ms},                  {"seed", seed}};
}

SynthRecipe SynthRecipe::from_json(const nlohmann::json& doc) {
    if (!doc.is_object())
        throw ConfigError("synth recipe must be an object");
    SynthRecipe r;
    try {
        // A global construction applies first so per-metric entries override it.
        if (doc.contains("construction"))
            r = r.with_construction(parse_construction(doc.at("construction").get<std::string>()));
        for (const auto& [key, value] : doc.items()) {
            if (key == "n_rows")
                r.n_rows = value.get<std::size_t>();
            else if (key == "planted")
                r.planted = value.get<std::vector<std::string>>();
            else if (key == "planted_count")
                r.planted_count = value.get<std::size_t>();
            else if (key == "effects")
                r.effects = value.get<std::vector<double>>();
            else if (key == "noise")
                r.noise = value.get<double>();
            else if (key == "rho")
                r.rho = value.get<double>();
            else if (key == "seed")
                r.seed = value.get<std::uint64_t>();
            else if (key == "construction")
                continue;
            else if (key == "metrics") {
                for (const auto& [name, m] : value.items()) {
                    const auto it = std::find(kMetricNames.begin(), kMetricNames.end(), name);
                    if (it == kMetricNames.end())
                        throw ConfigError("unknown metric '" + name + "' in synth recipe");
                    auto& target = r.metrics[static_cast<std::size_t>(it - kMetricNames.begin())];
                    if (m.contains("construction"))
                        target.construction = parse_construction(m.at("construction").get<std::string>());
                    target.offset = m.value("offset", target.offset);
                    target.scale = m.value("scale", target.scale);
                }
            } else
                throw ConfigError("unknown synth field '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed synth recipe: ") + e.what());
    }
    r.validate();
    return r;
}

double GroundTruth::component_value(const Component& c, std::span<const double> rates) const {
    double value = 0.0;
    auto scaled = [&](std::size_t k) {
        const std::size_t j = planted_index_[k];
        return rates[j] / rate_upper_[j];
    };
    for (std::size_t k = 0; k < planted_index_.size(); ++k) {
        const double v = scaled(k);
        switch (c.construction) {
        case Construction::linear: value += c.effects[k] * v; break;
        case Construction::hinge: value += c.effects[k] * std::max(0.0, v - kKnee); break;
        case Construction::tree: value += c.effects[k] * (v > kKnee ? 1.0 : 0.0); break;
        }
    }
    if (c.construction == Construction::tree && planted_index_.size() >= 2)
        value += c.effects[0] * ((scaled(0) > kKnee && scaled(1) > kKnee) ? 1.0 : 0.0);
    return (value - c.center) / c.spread;
}

double GroundTruth::signal(std::size_t metric, std::span<const double> rates) const {
    if (metric >= metrics_.size())
        throw ArgumentError("metric index out of range");
    if (rates.size() != predictor_names_.size())
        throw SizeError("signal needs one rate per predictor");
    const auto& m = metrics_[metric];
    const double mixed =
        std::sqrt(rho_) * component_value(m.shared, rates) + std::sqrt(1.0 - rho_) * component_value(m.own, rates);
    return m.recipe.offset + m.recipe.scale * mixed;
}

std::pair<double, Vector> GroundTruth::linear_coefficients(std::size_t metric) const {
    if (metric >= metrics_.size())
        throw ArgumentError("metric index out of range");
    const auto& m = metrics_[metric];
    if (m.recipe.construction != Construction::linear)
        throw ConfigError("metric " + std::string(kMetricNames[metric]) + " is not linear");
    Vector beta = Vector::Zero(static_cast<Index>(predictor_names_.size()));
    double intercept = m.recipe.offset;
    for (const auto* c : {&m.shared, &m.own}) {
        const double weight = m.recipe.scale * (c == &m.shared ? std::sqrt(rho_) : std::sqrt(1.0 - rho_)) / c->spread;
        intercept -= weight * c->center;
        for (std::size_t k = 0; k < planted_index_.size(); ++k) {
            const std::size_t j = planted_index_[k];
            beta[static_cast<Index>(j)] += weight * c->effects[k] / rate_upper_[j];
        }
    }
    return {intercept, beta};
}

nlohmann::json GroundTruth::to_json() const {
    auto component = [](const Component& c) {
        return nlohmann::json{{"construction", to_string(c.construction)},
                              {"effects", c.effects},
                              {"center", c.center},
                              {"spread", c.spread}};
    };
    nlohmann::json metrics = nlohmann::json::object();
    for (std::size_t m = 0; m < metrics_.size(); ++m)
        metrics[std::string(kMetricNames[m])] = {{"construction", to_string(metrics_[m].recipe.construction)},
                                                 {"offset", metrics_[m].recipe.offset},
                                                 {"scale", metrics_[m].recipe.scale},
                                                 {"shared", component(metrics_[m].shared)},
                                                 {"own", component(metrics_[m].own)}};
    nlohmann::json noise = nlohmann::json::array();
    for (Index i = 0; i < noise_.rows(); ++i)
        noise.push_back({noise_(i, 0), noise_(i, 1), noise_(i, 2), noise_(i, 3)});
    return {{"planted", planted_},
            {"predictors", predictor_names_},
            {"rate_upper", rate_upper_},
            {"rho", rho_},
            {"knee", kKnee},
            {"metrics", metrics},
            {"noise", noise}};
}

struct SynthBuilder {
    static SynthResult run(const SynthRecipe& recipe) {
        recipe.validate();
        const auto schema = CounterSchema::standard();
        const auto names = schema.predictor_names();
        const std::size_t p = names.size();
        const auto n = static_cast<Index>(recipe.n_rows);

        GroundTruth truth;
        truth.predictor_names_ = names;
        truth.rho_ = recipe.rho;
        for (std::size_t j = 0; j < p; ++j)
            truth.rate_upper_.push_back(kRateUpper[j % kRateUpper.size()]);

        if (recipe.planted.empty()) {
            Rng pick(stream_seed(recipe.seed, "planted"));
            auto order = pick.permutation(p);
            order.resize(recipe.planted_count);
            truth.planted_index_ = order;
        } else {
            for (const auto& name : recipe.planted)
                truth.planted_index_.push_back(
                    static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin()));
        }
        for (std::size_t j : truth.planted_index_)
            truth.planted_.push_back(names[j]);
        const std::size_t k = truth.planted_index_.size();

        // Counters: cycles log-uniform, rates log-uniform below their upper bound.
        Rng rates_rng(stream_seed(recipe.seed, "rates"));
        Matrix raw(n, 26);
        for (Index i = 0; i < n; ++i) {
            const double cycles = std::round(log_uniform(rates_rng, kCyclesLow, kCyclesHigh));
            raw(i, 0) = cycles;
            for (std::size_t j = 0; j < p; ++j) {
                const double rate = truth.rate_upper_[j] * log_uniform(rates_rng, kRateLow, 1.0);
                raw(i, static_cast<Index>(j + 1)) = std::round(rate * cycles);
            }
        }

        std::vector<std::vector<std::string>> metadata;
        Rng meta_rng(stream_seed(recipe.seed, "metadata"));
        constexpr std::array<int, 4> kNodes = {1, 2, 4, 8};
        constexpr std::array<int, 4> kBatch = {32, 64, 128, 256};
        for (Index i = 0; i < n; ++i)
            metadata.push_back({std::to_string(i + 1), std::to_string(kNodes[meta_rng.index(kNodes.size())]),
                                std::to_string(kBatch[meta_rng.index(kBatch.size())])});

        // Provisional dataset to obtain the exact rates the ingest path computes.
        Matrix placeholder = Matrix::Ones(n, 4);
        const Dataset probe =
            Dataset::from_columns(schema, {"config_id", "nodes", "batch_size"}, metadata, raw, placeholder);
        const Matrix& rates = probe.normalized();

        auto effects_for = [&](std::size_t rotation) {
            std::vector<double> e(k);
            for (std::size_t q = 0; q < k; ++q)
                e[q] = recipe.effects[(q + rotation) % recipe.effects.size()];
            return e;
        };
        auto row_span = [&](Index i, std::vector<double>& buf) {
            for (Index j = 0; j < rates.cols(); ++j)
                buf[static_cast<std::size_t>(j)] = rates(i, j);
            return std::span<const double>(buf);
        };
        std::vector<double> buf(p);
        auto calibrate = [&](GroundTruth::Component& c) {
            c.center = 0.0;
            c.spread = 1.0;
            Vector v(n);
            for (Index i = 0; i < n; ++i)
                v[i] = truth.component_value(c, row_span(i, buf));
            c.center = mean(v);
            const double sd = population_sd(v);
            c.spread = sd > 0.0 ? sd : 1.0;
        };

        for (std::size_t m = 0; m < 4; ++m) {
            auto& mt = truth.metrics_[m];
            mt.recipe = recipe.metrics[m];
            mt.shared = {mt.recipe.construction, effects_for(0), 0.0, 1.0};
            mt.own = {mt.recipe.construction, effects_for(m + 1), 0.0, 1.0};
            calibrate(mt.shared);
            calibrate(mt.own);
        }

        Rng noise_rng(stream_seed(recipe.seed, "noise"));
        Matrix eps(n, 5);
        for (Index i = 0; i < n; ++i)
            for (Index c = 0; c < 5; ++c)
                eps(i, c) = noise_rng.normal();

        Matrix metrics(n, 4);
        truth.noise_.resize(n, 4);
        for (std::size_t m = 0; m < 4; ++m) {
            const auto mi = static_cast<Index>(m);
            Vector signal(n);
            for (Index i = 0; i < n; ++i)
                signal[i] = truth.signal(m, row_span(i, buf));
            const double sd = population_sd(signal);
            for (Index i = 0; i < n; ++i) {
                const double e = std::sqrt(recipe.rho) * eps(i, 0) + std::sqrt(1.0 - recipe.rho) * eps(i, mi + 1);
                truth.noise_(i, mi) = recipe.noise * sd * e;
                metrics(i, mi) = signal[i] + truth.noise_(i, mi);
                if (!(metrics(i, mi) > 0.0))
                    throw ConfigError("metric " + std::string(kMetricNames[m]) + " would be nonpositive in row " +
                                      std::to_string(i + 1) + "; raise its offset or lower its scale");
            }
        }

        Dataset dataset =
            Dataset::from_columns(schema, {"config_id", "nodes", "batch_size"}, std::move(metadata), raw, metrics);
        return {std::move(dataset), std::move(truth)};
    }
};

SynthResult generate(const SynthRecipe& recipe) { return SynthBuilder::run(recipe); }

void write_synth(const SynthResult& result, const std::filesystem::path& csv_path,
                 const std::filesystem::path& truth_path) {
    emit_csv(result.dataset, csv_path);
    std::ofstream out(truth_path);
    if (!out)
        throw Error("cannot write " + truth_path.string());
    out << result.truth.to_json().dump(1) << '\n';
}

} // namespace counterlens
