#include "run_config.hpp"

#include "counterlens/dataset.hpp"
#include "counterlens/report.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace counterlens::cli {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object())
        throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

CvSettings parse_cv(const json& doc, CvSettings defaults, const std::string& where) {
    reject_unknown(doc, {"folds", "repeats"}, where);
    defaults.folds = doc.value("folds", defaults.folds);
    defaults.repeats = doc.value("repeats", defaults.repeats);
    if (defaults.folds < 2 || defaults.repeats < 1)
        throw ConfigError(where + ": need folds >= 2 and repeats >= 1");
    return defaults;
}

json spec_json(const ModelSpec& spec, bool seed_explicit) {
    json doc = spec.to_json();
    if (!seed_explicit)
        doc.erase("seed");
    return doc;
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

RunConfig RunConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
    reject_unknown(doc,
                   {"dataset", "schema", "targets", "seed", "split", "models", "cv", "drop_failed_members", "topk",
                    "selection", "mvtb", "synth", "workers", "out"},
                   "config");
    RunConfig c;
    try {
        if (doc.contains("dataset")) {
            std::filesystem::path p = doc.at("dataset").get<std::string>();
            c.dataset = p.is_absolute() ? p : base_dir / p;
        }
        if (doc.contains("schema")) {
            std::filesystem::path p = doc.at("schema").get<std::string>();
            c.schema = p.is_absolute() ? p : base_dir / p;
        }
        if (doc.contains("targets")) {
            c.targets = doc.at("targets").get<std::vector<std::string>>();
            if (c.targets.empty())
                throw ConfigError("targets must not be empty");
        }
        c.seed = doc.value("seed", c.seed);
        c.split = doc.value("split", c.split);
        if (!(c.split > 0.0 && c.split < 1.0))
            throw ConfigError("split must lie in (0, 1)");
        if (doc.contains("models")) {
            for (const auto& entry : doc.at("models")) {
                c.models.push_back(ModelSpec::from_json(entry));
                c.model_seed_explicit.push_back(entry.is_object() && entry.contains("seed"));
            }
            if (c.models.size() < 2)
                throw ConfigError("an ensemble needs at least two models");
        }
        if (doc.contains("cv"))
            c.cv = parse_cv(doc.at("cv"), c.cv, "cv");
        c.drop_failed_members = doc.value("drop_failed_members", c.drop_failed_members);
        c.topk = doc.value("topk", c.topk);
        if (c.topk < 1)
            throw ConfigError("topk must be at least 1");

        if (doc.contains("selection")) {
            const auto& s = doc.at("selection");
            reject_unknown(s,
                           {"selectors", "estimator", "cv", "rfe_sizes", "ga", "sa", "sbf_threshold",
                            "stepwise_direction", "reference_k"},
                           "selection");
            auto& sel = c.selection;
            if (s.contains("selectors")) {
                sel.selectors = s.at("selectors").get<std::vector<std::string>>();
                if (sel.selectors.empty())
                    throw ConfigError("selection.selectors is empty; name at least one of rfe, ga, sa, sbf, stepwise");
                for (const auto& name : sel.selectors)
                    if (name != "rfe" && name != "ga" && name != "sa" && name != "sbf" && name != "stepwise")
                        throw ConfigError("unknown selector '" + name + "'");
            }
            if (s.contains("estimator")) {
                sel.estimator = ModelSpec::from_json(s.at("estimator"));
                sel.estimator_seed_explicit = s.at("estimator").is_object() && s.at("estimator").contains("seed");
            }
            if (s.contains("cv"))
                sel.cv = parse_cv(s.at("cv"), sel.cv, "selection.cv");
            if (s.contains("rfe_sizes"))
                sel.rfe_sizes = s.at("rfe_sizes").get<std::vector<int>>();
            if (s.contains("ga")) {
                reject_unknown(s.at("ga"), {"population", "generations"}, "selection.ga");
                sel.ga_population = s.at("ga").value("population", sel.ga_population);
                sel.ga_generations = s.at("ga").value("generations", sel.ga_generations);
            }
            if (s.contains("sa")) {
                reject_unknown(s.at("sa"), {"iterations"}, "selection.sa");
                sel.sa_iterations = s.at("sa").value("iterations", sel.sa_iterations);
            }
            sel.sbf_threshold = s.value("sbf_threshold", sel.sbf_threshold);
            if (s.contains("stepwise_direction"))
                sel.stepwise_direction = parse_direction(s.at("stepwise_direction").get<std::string>());
            sel.reference_k = s.value("reference_k", sel.reference_k);
        }

        if (doc.contains("mvtb")) {
            const auto& m = doc.at("mvtb");
            reject_unknown(m, {"n_trees", "shrinkage", "depth", "subsample", "min_leaf", "time_budget_seconds", "outcomes"},
                           "mvtb");
            auto& mv = c.mvtb;
            mv.n_trees = m.value("n_trees", mv.n_trees);
            mv.shrinkage = m.value("shrinkage", mv.shrinkage);
            mv.depth = m.value("depth", mv.depth);
            mv.subsample = m.value("subsample", mv.subsample);
            mv.min_leaf = m.value("min_leaf", mv.min_leaf);
            mv.time_budget_seconds = m.value("time_budget_seconds", mv.time_budget_seconds);
            if (m.contains("outcomes"))
                mv.outcomes = m.at("outcomes").get<std::vector<std::string>>();
            if (mv.outcomes.empty())
                throw ConfigError("mvtb.outcomes must not be empty");
        }

        if (doc.contains("synth")) {
            c.synth = SynthRecipe::from_json(doc.at("synth"));
            c.synth_seed_explicit = doc.at("synth").contains("seed");
        }
        c.workers = doc.value("workers", c.workers);
        if (doc.contains("out")) {
            std::filesystem::path p = doc.at("out").get<std::string>();
            c.out = p.is_absolute() ? p : base_dir / p;
        } else {
            c.out = base_dir / "reports";
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    const auto base = std::filesystem::absolute(path).parent_path();
    return from_json(doc, base);
}

json RunConfig::canonical() const {
    json models_doc = json::array();
    for (std::size_t k = 0; k < models.size(); ++k)
        models_doc.push_back(spec_json(models[k], model_seed_explicit[k]));
    json sizes = selection.rfe_sizes;
    json doc = {
        {"dataset", dataset.empty() ? "" : dataset.filename().string()},
        {"schema", schema ? schema->filename().string() : ""},
        {"targets", targets},
        {"seed", seed},
        {"split", split},
        {"models", models_doc},
        {"cv", {{"folds", cv.folds}, {"repeats", cv.repeats}}},
        {"drop_failed_members", drop_failed_members},
        {"topk", topk},
        {"selection",
         {{"selectors", selection.selectors},
          {"estimator", spec_json(selection.estimator, selection.estimator_seed_explicit)},
          {"cv", {{"folds", selection.cv.folds}, {"repeats", selection.cv.repeats}}},
          {"rfe_sizes", sizes},
          {"ga", {{"population", selection.ga_population}, {"generations", selection.ga_generations}}},
          {"sa", {{"iterations", selection.sa_iterations}}},
          {"sbf_threshold", selection.sbf_threshold},
          {"stepwise_direction", selection.stepwise_direction == StepDirection::forward    ? "forward"
                                 : selection.stepwise_direction == StepDirection::backward ? "backward"
                                                                                           : "both"},
          {"reference_k", selection.reference_k}}},
        {"mvtb",
         {{"n_trees", mvtb.n_trees},
          {"shrinkage", mvtb.shrinkage},
          {"depth", mvtb.depth},
          {"subsample", mvtb.subsample},
          {"min_leaf", mvtb.min_leaf},
          {"outcomes", mvtb.outcomes}}},
    };
    json synth_doc = synth.to_json();
    if (!synth_seed_explicit)
        synth_doc.erase("seed");
    doc["synth"] = synth_doc;
    return doc;
}

std::string RunConfig::hash() const {
    std::string material = canonical().dump();
    if (!dataset.empty() && std::filesystem::exists(dataset))
        material += "\n" + sha256_hex(read_bytes(dataset));
    if (schema && std::filesystem::exists(*schema))
        material += "\n" + sha256_hex(read_bytes(*schema));
    return sha256_hex(material);
}

std::vector<ModelSpec> RunConfig::member_specs() const {
    std::vector<ModelSpec> out;
    if (models.empty()) {
        for (Method m : required_methods())
            out.push_back({m, {}, seed, {}});
        return out;
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
        ModelSpec s = models[k];
        if (!model_seed_explicit[k])
            s.seed = seed;
        out.push_back(std::move(s));
    }
    return out;
}

ModelSpec RunConfig::selection_estimator() const {
    ModelSpec s = selection.estimator;
    if (!selection.estimator_seed_explicit)
        s.seed = seed;
    return s;
}

} // namespace counterlens::cli
