#include "commands.hpp"

#include "counterlens/dataset.hpp"
#include "counterlens/ensemble.hpp"
#include "counterlens/metrics.hpp"
#include "counterlens/parallel.hpp"
#include "counterlens/report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>

namespace counterlens::cli {

namespace {

struct RunContext {
    RunMetadata meta;
    std::filesystem::path dir;
    std::vector<Report> reports;
    std::vector<std::string> warnings;
};

RunContext start(const RunConfig& config, const std::string& command) {
    set_worker_count(config.workers);
    RunContext ctx;
    ctx.meta.seed = config.seed;
    ctx.meta.config_hash = config.hash();
    ctx.meta.decisions = default_decisions();
    ctx.meta.plan = {{"command", command}};
    ctx.dir = config.out / (command + "-" + ctx.meta.config_hash.substr(0, 12));
    std::filesystem::remove_all(ctx.dir);
    std::filesystem::create_directories(ctx.dir);
    return ctx;
}

CommandResult guarded(RunContext& ctx, const std::function<void()>& body) {
    try {
        body();
        write_reports(ctx.dir, ctx.reports, ctx.meta);
    } catch (const std::exception& e) {
        write_incomplete_manifest(ctx.dir, ctx.meta, e.what());
        throw;
    }
    return {ctx.dir, ctx.warnings};
}

Dataset load_dataset(const RunConfig& config) {
    if (config.dataset.empty())
        throw ConfigError("config needs a 'dataset' path");
    const auto schema = config.schema ? CounterSchema::load(*config.schema) : CounterSchema::standard();
    return ingest(config.dataset, schema);
}

struct SplitData {
    Split split;
    FeatureMatrix x_train, x_test;
};

SplitData split_predictors(const Dataset& data, const RunConfig& config) {
    SplitData s;
    s.split = counterlens::split(data, config.seed, config.split);
    const auto x = data.predictors();
    s.x_train = x.take_rows(s.split.train_indices);
    s.x_test = x.take_rows(s.split.test_indices);
    return s;
}

nlohmann::json split_json(const Split& s) {
    return {{"seed", s.seed},
            {"fraction", s.fraction},
            {"train_rows", s.train_indices.size()},
            {"test_rows", s.test_indices.size()}};
}

Index require_metric(const Dataset& data, const std::string& name) {
    const Index m = data.metric_index(name);
    if (m < 0)
        throw ConfigError("target '" + name + "' is not a metric column");
    return m;
}

void add_dataset_warnings(RunContext& ctx, const Dataset& data) {
    for (const auto& w : data.warnings())
        ctx.warnings.push_back(w);
}

} // namespace

CommandResult cmd_correlate(const RunConfig& config) {
    RunContext ctx = start(config, "correlate");
    return guarded(ctx, [&] {
        const Dataset data = load_dataset(config);
        add_dataset_warnings(ctx, data);
        const auto x = data.predictors();
        ctx.reports.push_back(correlation_report(correlate(x.values, x.names), ctx.meta, "correlation_matrix-counters"));
        ctx.reports.push_back(correlation_report(correlate(data.metrics(), data.schema().metric_names), ctx.meta,
                                                 "correlation_matrix-objects"));
        ctx.reports.back().payload["excluded_counters"] = data.excluded_predictors();
    });
}

CommandResult cmd_model(const RunConfig& config) {
    RunContext ctx = start(config, "model");
    return guarded(ctx, [&] {
        const Dataset data = load_dataset(config);
        add_dataset_warnings(ctx, data);
        const auto sd = split_predictors(data, config);
        const CvPlan plan(sd.split.train_indices.size(), config.cv.folds, config.cv.repeats, config.seed);
        ctx.meta.plan["split"] = split_json(sd.split);
        ctx.meta.plan["cv"] = plan.to_json();
        const auto specs = config.member_specs();

        for (const auto& target : config.targets) {
            const Index m = require_metric(data, target);
            const Vector y = data.metrics().col(m);
            const Vector y_train = take(y, sd.split.train_indices);
            const Vector y_test = take(y, sd.split.test_indices);

            const auto ensemble =
                blend(specs, sd.x_train, y_train, plan, target, BlendOptions{config.drop_failed_members});
            std::vector<RmseRow> rows;
            for (const auto& member : ensemble.members())
                rows.push_back({member.model.label(), member.cv_rmse, rmse(y_test, member.model.predict(sd.x_test)),
                                false});
            rows.push_back({"ensemble", rmse(y_train, ensemble.oof_predictions()),
                            rmse(y_test, ensemble.predict(sd.x_test)), true});

            Report table = rmse_table(rows, ctx.meta, "rmse_table-" + target);
            nlohmann::json weights = nlohmann::json::object();
            for (const auto& member : ensemble.members())
                weights[member.model.label()] = member.weight;
            table.payload["blend"] = {{"intercept", ensemble.intercept()}, {"weights", weights}};
            table.payload["warnings"] = ensemble.warnings();
            ctx.reports.push_back(std::move(table));
            for (const auto& w : ensemble.warnings())
                ctx.warnings.push_back(target + ": " + w);

            std::vector<RankingTable> tables{ensemble_importance(ensemble)};
            for (auto& t : member_rankings(ensemble))
                tables.push_back(std::move(t));
            ctx.reports.push_back(ranking_report(tables, ctx.meta, "ranking_table-" + target));
            ctx.reports.push_back(topk_comparison(tables, config.topk, ctx.meta, "topk_comparison-" + target));
            try {
                ctx.reports.push_back(
                    correlation_report(model_correlation(ensemble, sd.x_test), ctx.meta, "correlation_matrix-models-" + target));
            } catch (const DegenerateError& e) {
                ctx.warnings.push_back(target + ": model correlation skipped: " + e.what());
            }
            ensemble.save(ctx.dir / "models" / target);
        }
    });
}

CommandResult cmd_select(const RunConfig& config) {
    RunContext ctx = start(config, "select");
    return guarded(ctx, [&] {
        const auto& sel = config.selection;
        if (sel.selectors.empty())
            throw ConfigError("selection.selectors is empty");
        const Dataset data = load_dataset(config);
        add_dataset_warnings(ctx, data);
        const auto sd = split_predictors(data, config);
        const auto n_train = sd.split.train_indices.size();
        const CvPlan blend_plan(n_train, config.cv.folds, config.cv.repeats, config.seed);
        const CvPlan plan(n_train, sel.cv.folds, sel.cv.repeats, config.seed);
        const ModelSpec estimator = config.selection_estimator();
        ctx.meta.plan["split"] = split_json(sd.split);
        ctx.meta.plan["cv"] = blend_plan.to_json();
        ctx.meta.plan["selection_cv"] = plan.to_json();

        for (const auto& target : config.targets) {
            const Index m = require_metric(data, target);
            const Vector y_train = take(Vector(data.metrics().col(m)), sd.split.train_indices);
            const auto ensemble = blend(config.member_specs(), sd.x_train, y_train, blend_plan, target,
                                        BlendOptions{config.drop_failed_members});
            const auto reference = ensemble_importance(ensemble).top(sel.reference_k);

            std::vector<SelectorAgreement> rows;
            nlohmann::json errors = nlohmann::json::array();
            for (const auto& name : sel.selectors) {
                try {
                    SelectionResult r;
                    if (name == "rfe") {
                        auto sizes = sel.rfe_sizes;
                        if (sizes.empty()) {
                            sizes.resize(static_cast<std::size_t>(sd.x_train.cols()));
                            std::iota(sizes.begin(), sizes.end(), 1);
                        }
                        r = rfe(estimator, sd.x_train, y_train, sizes, plan);
                    } else if (name == "ga") {
                        GaOptions o;
                        o.population = sel.ga_population;
                        o.generations = sel.ga_generations;
                        o.seed = config.seed;
                        r = ga_select(estimator, sd.x_train, y_train, plan, o);
                    } else if (name == "sa") {
                        SaOptions o;
                        o.iterations = sel.sa_iterations;
                        o.seed = config.seed;
                        r = sa_select(estimator, sd.x_train, y_train, plan, o);
                    } else if (name == "sbf") {
                        r = sbf(estimator, sd.x_train, y_train, plan, sel.sbf_threshold);
                    } else {
                        r = stepwise(sd.x_train, y_train, sel.stepwise_direction);
                        r.seed = config.seed;
                    }
                    ctx.reports.push_back(selection_trace(r, ctx.meta, "selection-" + name + "-" + target));
                    const auto agree = overlap(r.selected, reference);
                    rows.push_back({std::move(r), agree, reference.size()});
                } catch (const Error& e) {
                    errors.push_back({{"selector", name}, {"error", e.what()}});
                    ctx.warnings.push_back(target + ": selector " + name + " failed: " + e.what());
                }
            }
            Report summary = selection_summary(rows, reference, ctx.meta, "selection_summary-" + target);
            summary.payload["errors"] = errors;
            ctx.reports.push_back(std::move(summary));
        }
    });
}

CommandResult cmd_mvtb(const RunConfig& config, std::ostream* progress) {
    RunContext ctx = start(config, "mvtb");
    return guarded(ctx, [&] {
        const Dataset data = load_dataset(config);
        add_dataset_warnings(ctx, data);
        const auto sd = split_predictors(data, config);
        ctx.meta.plan["split"] = split_json(sd.split);
        const auto& mv = config.mvtb;

        Matrix y_train(static_cast<Index>(sd.split.train_indices.size()), static_cast<Index>(mv.outcomes.size()));
        Matrix y_test(static_cast<Index>(sd.split.test_indices.size()), static_cast<Index>(mv.outcomes.size()));
        for (std::size_t k = 0; k < mv.outcomes.size(); ++k) {
            const Vector col = data.metrics().col(require_metric(data, mv.outcomes[k]));
            y_train.col(static_cast<Index>(k)) = take(col, sd.split.train_indices);
            y_test.col(static_cast<Index>(k)) = take(col, sd.split.test_indices);
        }
        MvtbOptions options;
        options.n_trees = mv.n_trees;
        options.shrinkage = mv.shrinkage;
        options.depth = mv.depth;
        options.subsample = mv.subsample;
        options.min_leaf = mv.min_leaf;
        options.seed = config.seed;
        options.time_budget_seconds = mv.time_budget_seconds;
        if (progress != nullptr)
            options.progress = [progress](int it, int total) {
                *progress << "mvtb: " << it << " of " << total << " trees\n";
            };
        const auto model = fit_mvtb(sd.x_train, y_train, mv.outcomes, options);

        Report summary = mvtb_summary(model, ctx.meta);
        const Matrix pred = model.predict(sd.x_test);
        nlohmann::json test = nlohmann::json::object();
        for (std::size_t k = 0; k < mv.outcomes.size(); ++k)
            test[mv.outcomes[k]] = rmse(y_test.col(static_cast<Index>(k)), pred.col(static_cast<Index>(k)));
        summary.payload["test_rmse"] = test;
        ctx.reports.push_back(std::move(summary));
        ctx.reports.push_back(mvtb_selection_log(model, ctx.meta, "mvtb_selection_log"));
        ctx.reports.push_back(ranking_report({mvtb_ranking(model)}, ctx.meta, "ranking_table-mvtb"));
        std::ofstream(ctx.dir / "mvtb_model.json") << model.to_json().dump(1) << '\n';
    });
}

CommandResult cmd_synth(const RunConfig& config) {
    RunContext ctx = start(config, "synth");
    return guarded(ctx, [&] {
        SynthRecipe recipe = config.synth;
        if (!config.synth_seed_explicit)
            recipe.seed = config.seed;
        ctx.meta.plan["recipe"] = recipe.to_json();
        const auto result = generate(recipe);
        write_synth(result, ctx.dir / "synth.csv", ctx.dir / "synth.truth.json");
    });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"counterlens: performance-counter ranking with ensemble and multivariate boosted models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(COUNTERLENS_VERSION));

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"correlate", "counter and objective correlation matrices"},
        {"model", "fit members, blend, evaluate and rank counters"},
        {"select", "feature selection cross-check against the ensemble ranking"},
        {"mvtb", "multivariate boosted trees over all objectives"},
        {"synth", "generate a synthetic dataset with planted counters"},
    };
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (default: reports/ next to the config)");
        seed_opts.push_back(sub->add_option("--seed", seed, "master seed override"));
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    std::size_t which = 0;
    while (!subs[which]->parsed())
        ++which;
    const std::string command = commands[which].first;

    try {
        RunConfig config = RunConfig::load(config_path);
        if (!out_dir.empty())
            config.out = out_dir;
        if (seed_opts[which]->count() > 0)
            config.seed = seed;

        CommandResult result;
        if (command == "correlate")
            result = cmd_correlate(config);
        else if (command == "model")
            result = cmd_model(config);
        else if (command == "select")
            result = cmd_select(config);
        else if (command == "mvtb")
            result = cmd_mvtb(config, &err);
        else
            result = cmd_synth(config);
        for (const auto& w : result.warnings)
            err << "warning: " << w << '\n';
        out << result.run_dir.string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        err << "counterlens " << command << ": configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "counterlens " << command << ": " << e.what() << '\n';
        return 1;
    }
}

} // namespace counterlens::cli
