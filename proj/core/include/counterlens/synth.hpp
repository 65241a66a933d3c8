#pragma once

#include "counterlens/common.hpp"
#include "counterlens/dataset.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace counterlens {

enum class Construction { linear, hinge, tree };

std::string_view to_string(Construction c);
Construction parse_construction(std::string_view text);

struct MetricRecipe {
    Construction construction = Construction::linear;
    double offset = 0.0;  // natural-unit level
    double scale = 1.0;   // natural units per unit of standardized signal
};

struct SynthRecipe {
    std::size_t n_rows = 500;
    /// Explicit planted counters; when empty, `planted_count` are drawn.
    std::vector<std::string> planted;
    std::size_t planted_count = 5;
    /// Relative effect sizes of the planted counters, cycled if shorter.
    std::vector<double> effects = {1.0, 0.85, 0.7, 0.6, 0.5};
    /// Noise standard deviation relative to the signal standard deviation.
    double noise = 0.2;
    /// Correlation level induced between outcomes via a shared latent signal.
    double rho = 0.5;
    std::array<MetricRecipe, 4> metrics = {{
        {Construction::linear, 400.0, 60.0},
        {Construction::linear, 250.0, 20.0},
        {Construction::linear, 160.0, 15.0},
        {Construction::linear, 40.0, 4.0},
    }};
    std::uint64_t seed = 3456;

    void validate() const;
    /// Sets every metric to the same construction.
    SynthRecipe with_construction(Construction c) const;

    nlohmann::json to_json() const;
    static SynthRecipe from_json(const nlohmann::json& doc);
};

/// Planted structure of a generated dataset. metric(i) == signal(i) + noise(i)
/// holds bit-exactly for every generated row.
class GroundTruth {
public:
    const std::vector<std::string>& planted() const { return planted_; }
    double rho() const { return rho_; }

    /// Noise-free metric value for one row of counter rates (predictor order).
    double signal(std::size_t metric, std::span<const double> rates) const;
    const Matrix& noise() const { return noise_; }  // n x 4

    /// Natural-unit coefficients per predictor (intercept first) for a
    /// linear-construction metric; throws ConfigError otherwise.
    std::pair<double, Vector> linear_coefficients(std::size_t metric) const;

    nlohmann::json to_json() const;

private:
    friend struct SynthBuilder;

    struct Component {
        Construction construction = Construction::linear;
        std::vector<double> effects;  // aligned with planted_index_
        double center = 0.0;
        double spread = 1.0;
    };
    struct MetricTruth {
        MetricRecipe recipe;
        Component shared;
        Component own;
    };

    double component_value(const Component& c, std::span<const double> rates) const;

    std::vector<std::string> predictor_names_;
    std::vector<std::string> planted_;
    std::vector<std::size_t> planted_index_;
    std::vector<double> rate_upper_;  // per predictor
    double rho_ = 0.0;
    std::array<MetricTruth, 4> metrics_{};
    Matrix noise_;
};

struct SynthResult {
    Dataset dataset;
    GroundTruth truth;
};

SynthResult generate(const SynthRecipe& recipe);

/// Writes <stem>.csv and <stem>.truth.json sidecar.
void write_synth(const SynthResult& result, const std::filesystem::path& csv_path,
                 const std::filesystem::path& truth_path);

} // namespace counterlens
