#include "commands.hpp"
#include "counterlens/report.hpp"
#include "run_config.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace counterlens;
using counterlens::cli::run_cli;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "counterlens");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::filesystem::path run_dir_of(const Run& r) {
    auto s = r.out;
    while (!s.empty() && s.back() == '\n')
        s.pop_back();
    return s;
}

// A small synthetic dataset plus a config that keeps every command quick.
class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        SynthRecipe recipe;
        recipe.n_rows = 120;
        recipe.seed = 17;
        const auto data = generate(recipe.with_construction(Construction::hinge));
        emit_csv(data.dataset, dir_ / "data.csv");
    }

    nlohmann::json base_config() const {
        return {{"dataset", "data.csv"},
                {"targets", {"runtime"}},
                {"seed", 5},
                {"models", {"ridge", "mars", {{"method", "random_forest"}, {"hyperparameters", {{"n_trees", 20}}}}, "knn"}},
                {"cv", {{"folds", 3}, {"repeats", 1}}},
                {"selection",
                 {{"selectors", {"rfe", "ga", "sa", "sbf", "stepwise"}},
                  {"estimator", "ridge"},
                  {"cv", {{"folds", 3}, {"repeats", 1}}},
                  {"rfe_sizes", {2, 5, 10}},
                  {"ga", {{"population", 4}, {"generations", 2}}},
                  {"sa", {{"iterations", 10}}}}},
                {"mvtb", {{"n_trees", 100}, {"shrinkage", 0.05}}},
                {"synth", {{"n_rows", 60}}}};
    }

    std::filesystem::path write_config(const nlohmann::json& doc, const std::string& name = "config.json") const {
        const auto path = dir_ / name;
        fixtures::spit(path, doc.dump(2));
        return path;
    }

    fixtures::TempDir dir_{"cli"};
};

} // namespace

TEST_F(CliTest, UsageErrorsExitWithTwo) {
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"frobnicate"}).code, 2);
    EXPECT_EQ(invoke({"model"}).code, 2);
    EXPECT_EQ(invoke({"model", "--config", (dir_ / "missing.json").string()}).code, 2);
    EXPECT_EQ(invoke({"--version"}).code, 0);
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
    auto doc = base_config();
    doc["selection"]["selectors"] = nlohmann::json::array();
    auto r = invoke({"select", "--config", write_config(doc).string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("selectors is empty"), std::string::npos) << r.err;

    doc = base_config();
    doc["colour"] = "red";
    EXPECT_EQ(invoke({"model", "--config", write_config(doc).string()}).code, 2);

    doc = base_config();
    doc["synth"]["rho"] = -0.5;
    EXPECT_EQ(invoke({"synth", "--config", write_config(doc).string()}).code, 2);
}

TEST_F(CliTest, BadDatasetFailsWithIncompleteManifest) {
    fixtures::spit(dir_ / "broken.csv", "config_id,TOT_CYC\n1,2\n");
    auto doc = base_config();
    doc["dataset"] = "broken.csv";
    const auto out = dir_ / "out";
    const auto r = invoke({"correlate", "--config", write_config(doc).string(), "--out", out.string()});
    EXPECT_EQ(r.code, 1);
    bool found = false;
    for (const auto& e : std::filesystem::directory_iterator(out)) {
        const auto m = nlohmann::json::parse(fixtures::slurp(e.path() / "manifest.json"));
        EXPECT_EQ(m.at("status"), "incomplete");
        found = true;
    }
    EXPECT_TRUE(found);
}

TEST_F(CliTest, EveryCommandSucceedsAndWritesManifest) {
    const auto config = write_config(base_config());
    for (const std::string cmd : {"correlate", "model", "select", "mvtb", "synth"}) {
        const auto r = invoke({cmd, "--config", config.string(), "--out", (dir_ / "runs").string()});
        ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
        const auto run = run_dir_of(r);
        EXPECT_EQ(run.filename().string().substr(0, cmd.size() + 1), cmd + "-");
        const auto m = nlohmann::json::parse(fixtures::slurp(run / "manifest.json"));
        EXPECT_EQ(m.at("status"), "complete") << cmd;
        for (const auto& f : m.at("files"))
            EXPECT_EQ(f.at("sha256"), sha256_hex(fixtures::slurp(run / f.at("path").get<std::string>())));
    }
}

TEST_F(CliTest, ModelWritesExpectedReports) {
    const auto r = invoke({"model", "--config", write_config(base_config()).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto run = run_dir_of(r);
    EXPECT_EQ(run.parent_path().filename(), "reports");
    for (const char* name : {"rmse_table-runtime", "ranking_table-runtime", "topk_comparison-runtime",
                             "correlation_matrix-models-runtime"}) {
        EXPECT_TRUE(std::filesystem::exists(run / (std::string(name) + ".csv"))) << name;
        EXPECT_TRUE(std::filesystem::exists(run / (std::string(name) + ".json"))) << name;
    }
    const auto rmse = nlohmann::json::parse(fixtures::slurp(run / "rmse_table-runtime.json"));
    EXPECT_EQ(rmse.at("payload").at("rows").size(), 5u);
    const auto loaded = EnsembleModel::load(run / "models" / "runtime");
    EXPECT_EQ(loaded.members().size(), 4u);
}

TEST_F(CliTest, SeedOverrideChangesRunDirectory) {
    const auto config = write_config(base_config());
    const auto a = invoke({"synth", "--config", config.string()});
    const auto b = invoke({"synth", "--config", config.string(), "--seed", "6"});
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    EXPECT_NE(run_dir_of(a), run_dir_of(b));
    EXPECT_NE(fixtures::slurp(run_dir_of(a) / "synth.csv"), fixtures::slurp(run_dir_of(b) / "synth.csv"));
}

TEST_F(CliTest, RerunsAreByteIdenticalAcrossWorkerCounts) {
    auto one = base_config();
    one["workers"] = 1;
    auto four = base_config();
    four["workers"] = 4;
    const auto c1 = write_config(one, "one.json");
    const auto c4 = write_config(four, "four.json");
    for (const std::string cmd : {"correlate", "model", "select", "mvtb", "synth"}) {
        const auto a = invoke({cmd, "--config", c1.string(), "--out", (dir_ / "a").string()});
        const auto b = invoke({cmd, "--config", c4.string(), "--out", (dir_ / "b").string()});
        const auto c = invoke({cmd, "--config", c1.string(), "--out", (dir_ / "a").string()});
        ASSERT_EQ(a.code, 0) << a.err;
        ASSERT_EQ(b.code, 0) << b.err;
        ASSERT_EQ(c.code, 0) << c.err;
        EXPECT_EQ(run_dir_of(a).filename(), run_dir_of(b).filename());
        const auto bytes_a = fixtures::tree_bytes(run_dir_of(a));
        EXPECT_EQ(bytes_a, fixtures::tree_bytes(run_dir_of(b))) << cmd;
        EXPECT_EQ(bytes_a, fixtures::tree_bytes(run_dir_of(c))) << cmd;
    }
}

TEST(RunConfig, HashIgnoresWorkersAndOut) {
    const auto a = cli::RunConfig::from_json({{"workers", 1}, {"out", "x"}}, "/tmp");
    const auto b = cli::RunConfig::from_json({{"workers", 8}, {"out", "y"}}, "/tmp");
    const auto c = cli::RunConfig::from_json({{"seed", 1}}, "/tmp");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
}

TEST(RunConfig, MasterSeedAppliesWhereNoneGiven) {
    const auto cfg = cli::RunConfig::from_json(
        {{"seed", 42}, {"models", {"ridge", {{"method", "gbm"}, {"seed", 7}}}}}, "/tmp");
    const auto specs = cfg.member_specs();
    EXPECT_EQ(specs[0].seed, 42u);
    EXPECT_EQ(specs[1].seed, 7u);
    EXPECT_EQ(cfg.selection_estimator().seed, 42u);
    EXPECT_EQ(cli::RunConfig::from_json(nlohmann::json::object(), "/tmp").member_specs().size(), 10u);
}

TEST(RunConfig, RejectsMalformedValues) {
    EXPECT_THROW(cli::RunConfig::from_json({{"split", 1.5}}, "/tmp"), ConfigError);
    EXPECT_THROW(cli::RunConfig::from_json({{"models", {"ridge"}}}, "/tmp"), ConfigError);
    EXPECT_THROW(cli::RunConfig::from_json({{"selection", {{"selectors", {"lasso"}}}}}, "/tmp"), ConfigError);
    EXPECT_THROW(cli::RunConfig::from_json({{"cv", {{"folds", 1}}}}, "/tmp"), ConfigError);
    EXPECT_THROW(cli::RunConfig::from_json({{"seed", "abc"}}, "/tmp"), ConfigError);
}
