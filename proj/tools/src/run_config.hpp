#pragma once

#include "counterlens/featsel.hpp"
#include "counterlens/mvtb.hpp"
#include "counterlens/regressors.hpp"
#include "counterlens/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace counterlens::cli {

struct CvSettings {
    int folds = 5;
    int repeats = 5;
};

struct SelectionSettings {
    std::vector<std::string> selectors = {"rfe", "ga", "sa", "sbf", "stepwise"};
    ModelSpec estimator{Method::bagged_cart, {}, 3456, {}};
    bool estimator_seed_explicit = false;  // otherwise the master seed applies
    CvSettings cv{5, 1};
    std::vector<int> rfe_sizes;  // empty = 1..p
    int ga_population = 20;
    int ga_generations = 10;
    int sa_iterations = 200;
    double sbf_threshold = 0.05;
    StepDirection stepwise_direction = StepDirection::both;
    std::size_t reference_k = 8;
};

struct MvtbSettings {
    int n_trees = 1000;
    double shrinkage = 0.01;
    int depth = 3;
    double subsample = 0.5;
    double min_leaf = 10.0;
    double time_budget_seconds = 60.0;
    std::vector<std::string> outcomes = {"runtime", "node_power", "cpu_power", "mem_power"};
};

/// Parsed and defaulted JSON configuration shared by every subcommand.
struct RunConfig {
    std::filesystem::path dataset;  // resolved against the config directory
    std::optional<std::filesystem::path> schema;
    std::vector<std::string> targets = {"runtime", "node_power"};
    std::uint64_t seed = 3456;
    double split = 0.8;
    std::vector<ModelSpec> models;  // empty = every required method
    std::vector<bool> model_seed_explicit;
    CvSettings cv;
    bool drop_failed_members = true;
    std::size_t topk = 6;
    SelectionSettings selection;
    MvtbSettings mvtb;
    SynthRecipe synth;
    bool synth_seed_explicit = false;
    unsigned workers = 0;  // 0 = hardware concurrency; never affects output
    std::filesystem::path out = "reports";

    /// Unknown keys are rejected with ConfigError. Relative paths resolve
    /// against `base_dir`.
    static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    /// Canonical form with every default filled in; excludes workers and out.
    nlohmann::json canonical() const;
    /// SHA-256 over canonical().dump() plus the dataset bytes when present.
    std::string hash() const;

    /// Ensemble members with the master seed applied where none was given.
    std::vector<ModelSpec> member_specs() const;
    ModelSpec selection_estimator() const;
};

} // namespace counterlens::cli
