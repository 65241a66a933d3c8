// Acceptance checks. Prints one PASS/FAIL line per criterion; detail lines
// are indented. Run with --criterion N for a single check.

#include "commands.hpp"
#include "counterlens/ensemble.hpp"
#include "counterlens/metrics.hpp"
#include "counterlens/mvtb.hpp"
#include "counterlens/parallel.hpp"
#include "counterlens/report.hpp"
#include "counterlens/synth.hpp"
#include "run_config.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

using namespace counterlens;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
    bool pass = false;
    std::string summary;
};

void detail(const std::string& line) { std::cout << "  - " << line << '\n' << std::flush; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// A synthetic dataset on disk plus a config next to it.
struct Workspace {
    fixtures::TempDir dir{"accept"};
    SynthResult data;

    Workspace(std::uint64_t seed, Construction c, std::size_t n = 500) {
        SynthRecipe r;
        r.seed = seed;
        r.n_rows = n;
        data = generate(r.with_construction(c));
        emit_csv(data.dataset, dir / "data.csv");
    }

    cli::RunConfig config(std::uint64_t seed, json extra = json::object()) const {
        json doc = {{"dataset", "data.csv"}, {"seed", seed}, {"targets", {"runtime"}}};
        doc.update(extra);
        return cli::RunConfig::from_json(doc, dir.path());
    }

    const std::vector<std::string>& planted() const { return data.truth.planted(); }
};

json read_json(const fs::path& p) { return json::parse(fixtures::slurp(p)); }

std::vector<std::string> top_counters(const json& table, std::size_t k) {
    std::vector<std::string> out;
    for (const auto& e : table.at("entries")) {
        if (out.size() == k)
            break;
        out.push_back(e.at("counter"));
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v)
        s += (s.empty() ? "" : ",") + x;
    return s;
}

// ---------------------------------------------------------------------------

long double ref_rmse(const Vector& a, const Vector& b) {
    long double s = 0;
    for (Index i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<long double>(a.size()));
}

long double ref_r2(const Vector& a, const Vector& b) {
    long double ma = 0, mb = 0;
    for (Index i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    long double sab = 0, saa = 0, sbb = 0;
    for (Index i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab * sab / (saa * sbb);
}

Outcome criterion_1() {
    double worst = 0;
    Vector y(3), f(3);
    y << 1, 2, 3;
    f << 1, 3, 5;
    worst = std::max(worst, std::abs(rmse(y, f) - std::sqrt(5.0 / 3.0)));
    Vector a(4), b(4);
    a << 1, 2, 3, 4;
    b << 1, 3, 2, 4;
    worst = std::max(worst, std::abs(r_squared(a, b) - 0.64));
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const std::size_t n = 3 + seed % 97;
        const Vector o = fixtures::gaussian_vector(n, seed) * (1.0 + static_cast<double>(seed % 7));
        const Vector p = o + fixtures::gaussian_vector(n, seed + 1000);
        worst = std::max(worst, std::abs(rmse(o, p) - static_cast<double>(ref_rmse(o, p))));
        worst = std::max(worst, std::abs(r_squared(o, p) - static_cast<double>(ref_r2(o, p))));
    }
    return {worst <= 1e-12, "rmse and r_squared match reference formulas, max error " + fmt("%.3g", worst)};
}

Outcome criterion_2() {
    using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    double worst = 0;
    for (std::uint64_t seed : kSeeds) {
        SynthRecipe r;
        r.seed = seed;
        r.n_rows = 200;
        const auto data = generate(r);
        const auto x = data.dataset.predictors();
        if (x.cols() != 25)
            return {false, "expected 25 predictors"};
        for (std::size_t m = 0; m < 4; ++m) {
            const Vector y = data.dataset.metrics().col(static_cast<Index>(m));
            LMatrix a(200, 26);
            a.col(0).setOnes();
            a.rightCols(25) = x.values.cast<long double>();
            const LVector ly = y.cast<long double>();
            const LVector beta = (a.transpose() * a).ldlt().solve(a.transpose() * ly);
            const double scale = std::max(1.0L, beta.cwiseAbs().maxCoeff());
            const std::vector<ModelSpec> specs = {{Method::ridge, {{"lambda", 0.0}}, seed, {}},
                                                  {Method::ridge, {{"lambda", 1e-13}}, seed, {}},
                                                  {Method::pcr, {{"ncomp", 25}}, seed, {}}};
            for (const auto& spec : specs) {
                const auto lin = fit(spec, x, y).linear_coefficients();
                double err = std::abs(lin->intercept - static_cast<double>(beta[0]));
                for (Index j = 0; j < 25; ++j)
                    err = std::max(err, std::abs(lin->coefficients[j] - static_cast<double>(beta[j + 1])));
                worst = std::max(worst, err / scale);
            }
        }
    }
    return {worst <= 1e-8, "ridge(lambda 0, 1e-13) and pcr(25) vs normal equations, max relative error " +
                               fmt("%.3g", worst)};
}

Outcome criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = fixtures::planted_data(1, Construction::hinge, 500);
    const auto x = data.dataset.predictors();
    std::size_t increases = 0, checked = 0;
    const ModelSpec gbm{Method::gbm, {{"n_trees", 1000}, {"shrinkage", 0.01}, {"depth", 3}}, 1, {}};
    for (std::size_t m = 0; m < 4; ++m) {
        const auto model = fit(gbm, x, data.dataset.metrics().col(static_cast<Index>(m)));
        const auto& trace = model.training_trace();
        for (std::size_t t = 1; t < trace.size(); ++t, ++checked)
            increases += trace[t] > trace[t - 1];
        detail("gbm " + std::string(kMetricNames[m]) + ": " + std::to_string(trace.size()) + " trees, SSE " +
               fmt("%.6g", trace.front()) + " -> " + fmt("%.6g", trace.back()));
    }
    MvtbOptions o;
    o.n_trees = 1000;
    o.shrinkage = 0.01;
    o.depth = 3;
    o.seed = 1;
    const auto mv = fit_mvtb(x, data.dataset.metrics(), {kMetricNames.begin(), kMetricNames.end()}, o);
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& trace = mv.sse_trace()[k];
        for (std::size_t t = 1; t < trace.size(); ++t, ++checked)
            increases += trace[t] > trace[t - 1];
        detail("mvtb " + std::string(kMetricNames[k]) + ": " + std::to_string(trace.size() - 1) + " trees");
    }
    const double elapsed = seconds_since(t0);
    return {increases == 0 && elapsed < 60.0,
            std::to_string(increases) + " SSE increases in " + std::to_string(checked) + " steps, " +
                fmt("%.1f", elapsed) + " s (limit 60 s)"};
}

Outcome criterion_4() {
    bool pass = true;
    std::string summary;
    for (auto c : {Construction::linear, Construction::hinge, Construction::tree}) {
        const auto t0 = std::chrono::steady_clock::now();
        int ok = 0;
        for (std::uint64_t seed : kSeeds) {
            Workspace ws(seed, c);
            const auto run = cli::cmd_model(ws.config(seed));
            const auto rows = read_json(run.run_dir / "rmse_table-runtime.json").at("payload").at("rows");
            double ens = 0;
            std::vector<double> members;
            for (const auto& r : rows) {
                if (r.at("ensemble").get<bool>())
                    ens = r.at("test_rmse");
                else
                    members.push_back(r.at("test_rmse"));
            }
            std::sort(members.begin(), members.end());
            const std::size_t k = members.size();
            const double median = k % 2 ? members[k / 2] : 0.5 * (members[k / 2 - 1] + members[k / 2]);
            const bool good = ens <= 1.05 * members.front() && ens <= median;
            ok += good;
            detail(std::string(to_string(c)) + " seed " + std::to_string(seed) + ": ensemble " + fmt("%.5g", ens) +
                   ", best member " + fmt("%.5g", members.front()) + ", median " + fmt("%.5g", median) +
                   (good ? "" : "  <- miss"));
        }
        const double elapsed = seconds_since(t0);
        pass = pass && ok >= 4 && elapsed < 300.0;
        summary += std::string(summary.empty() ? "" : ", ") + std::string(to_string(c)) + " " + std::to_string(ok) + "/5 in " +
                   fmt("%.0f", elapsed) + " s";
    }
    return {pass, "ensemble <= 1.05 x best and <= median member: " + summary};
}

Outcome criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    int ens_ok = 0, mv_ok = 0;
    for (std::uint64_t seed : kSeeds) {
        Workspace ws(seed, Construction::linear);
        const auto model = cli::cmd_model(ws.config(seed));
        const auto mvtb = cli::cmd_mvtb(ws.config(seed));
        const auto tables = read_json(model.run_dir / "ranking_table-runtime.json").at("payload").at("tables");
        const auto ens_top = top_counters(tables.at(0), 8);
        const auto mv_top = top_counters(
            read_json(mvtb.run_dir / "ranking_table-mvtb.json").at("payload").at("tables").at(0), 8);
        const auto eh = fixtures::planted_hits(ens_top, ws.planted());
        const auto mh = fixtures::planted_hits(mv_top, ws.planted());
        ens_ok += eh >= 4;
        mv_ok += mh >= 4;
        detail("seed " + std::to_string(seed) + ": planted " + join(ws.planted()) + "; ensemble top-8 hits " +
               std::to_string(eh) + ", mvtb top-8 hits " + std::to_string(mh));
    }
    const double elapsed = seconds_since(t0);
    return {ens_ok >= 4 && mv_ok >= 4 && elapsed < 300.0,
            "seeds with >= 4 planted in top 8: ensemble " + std::to_string(ens_ok) + "/5, mvtb " +
                std::to_string(mv_ok) + "/5, " + fmt("%.0f", elapsed) + " s"};
}

Outcome criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> selectors = {"rfe", "ga", "sa", "sbf", "stepwise"};
    std::map<std::string, int> recovered, agreed;
    for (std::uint64_t seed : kSeeds) {
        Workspace ws(seed, Construction::linear);
        const auto run = cli::cmd_select(ws.config(seed));
        const auto payload = read_json(run.run_dir / "selection_summary-runtime.json").at("payload");
        std::string line = "seed " + std::to_string(seed) + ":";
        for (const auto& r : payload.at("results")) {
            const std::string name = r.at("method");
            const auto selected = r.at("selected").get<std::vector<std::string>>();
            const auto hits = fixtures::planted_hits(selected, ws.planted());
            const std::size_t agree = r.at("overlap");
            recovered[name] += hits >= 3;
            agreed[name] += agree >= 3;
            line += " " + name + " " + std::to_string(hits) + "/5 planted, overlap " + std::to_string(agree) + ";";
        }
        for (const auto& e : payload.at("errors"))
            line += " " + e.at("selector").get<std::string>() + " errored";
        detail(line);
    }
    const double elapsed = seconds_since(t0);
    bool pass = elapsed < 600.0;
    std::string summary;
    for (const auto& s : selectors) {
        pass = pass && recovered[s] >= 4 && agreed[s] == 5;
        summary += s + " " + std::to_string(recovered[s]) + "/" + std::to_string(agreed[s]) + " ";
    }
    return {pass, "recovery>=3 seeds / overlap>=3 seeds: " + summary + fmt("(%.0f s)", elapsed)};
}

Outcome criterion_7() {
    int compared = 0, identical = 0;
    for (std::uint64_t seed : kSeeds) {
        const auto data = fixtures::planted_data(seed, seed % 2 ? Construction::hinge : Construction::tree, 300);
        const auto x = data.dataset.predictors();
        for (std::size_t m = 0; m < 4; ++m) {
            const Vector y = data.dataset.metrics().col(static_cast<Index>(m));
            const auto knn = fit({Method::knn, {{"k", 3 + static_cast<double>(m)}}, seed, {}}, x, y);
            const auto rbf = fit({Method::kernel_rbf, {{"lambda", 0.1 * static_cast<double>(m + 1)}}, seed, {}}, x, y);
            const auto a = make_ranking(knn.importance().predictors, knn.importance().scores, "knn", "t");
            const auto b = make_ranking(rbf.importance().predictors, rbf.importance().scores, "kernel_rbf", "t");
            bool same = a.entries.size() == b.entries.size();
            for (std::size_t k = 0; same && k < a.entries.size(); ++k)
                same = a.entries[k].counter == b.entries[k].counter && a.entries[k].percentage == b.entries[k].percentage;
            same = same && knn.importance().source == ImportanceSource::filter_fallback &&
                   rbf.importance().source == ImportanceSource::filter_fallback;
            ++compared;
            identical += same;
        }
    }
    return {identical == compared, std::to_string(identical) + "/" + std::to_string(compared) +
                                       " knn vs kernel_rbf rankings identical"};
}

Outcome criterion_8() {
    Workspace ws(8, Construction::hinge, 300);
    const json two_targets = {{"targets", {"runtime", "node_power"}}};
    int same = 0, total = 0;
    using Command = std::function<cli::CommandResult(const cli::RunConfig&)>;
    const std::vector<std::pair<std::string, Command>> commands = {
        {"correlate", cli::cmd_correlate},
        {"model", cli::cmd_model},
        {"select", cli::cmd_select},
        {"mvtb", [](const cli::RunConfig& c) { return cli::cmd_mvtb(c); }},
        {"synth", cli::cmd_synth}};
    for (const auto& [name, run] : commands) {
        std::vector<std::map<std::string, std::string>> outputs;
        for (auto [workers, out] : {std::pair{1u, "w1a"}, std::pair{1u, "w1b"}, std::pair{4u, "w4"}}) {
            auto cfg = ws.config(8, two_targets);
            cfg.workers = workers;
            cfg.out = ws.dir / out;
            outputs.push_back(fixtures::tree_bytes(run(cfg).run_dir));
        }
        set_worker_count(0);
        const bool ok = outputs[0] == outputs[1] && outputs[0] == outputs[2] && !outputs[0].empty();
        detail(name + ": " + std::to_string(outputs[0].size()) + " files, " + (ok ? "identical" : "differ"));
        same += ok;
        ++total;
    }
    return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                               " commands byte-identical across reruns and 1 vs 4 workers"};
}

double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    return es.eigenvalues().minCoeff();
}

Outcome criterion_9() {
    std::vector<std::string> failures;
    auto check_table = [&](const RankingTable& t, const std::string& what) {
        double s = 0;
        for (const auto& e : t.entries)
            s += e.percentage;
        if (std::abs(s - 100.0) > 1e-9)
            failures.push_back(what + " sums to " + fmt("%.15g", s));
    };
    auto check_corr = [&](const CorrelationMatrix& c, const std::string& what) {
        const Matrix& v = c.values;
        if (v != v.transpose())
            failures.push_back(what + " not symmetric");
        if (!(v.diagonal().array() == 1.0).all())
            failures.push_back(what + " diagonal not 1");
        if (min_eigenvalue(v) < -1e-8)
            failures.push_back(what + " not PSD");
    };
    std::size_t tables = 0, matrices = 0, splits = 0, perturbations = 0;

    for (std::size_t n : {5u, 6u, 13u, 100u, 499u, 500u, 1001u})
        for (double f : {0.5, 0.7, 0.8, 0.9})
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                if (static_cast<std::size_t>(std::floor(f * static_cast<double>(n))) == n)
                    continue;
                const auto s = split(n, seed, f);
                std::vector<std::size_t> all = s.train_indices;
                all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
                std::sort(all.begin(), all.end());
                std::vector<std::size_t> want(n);
                std::iota(want.begin(), want.end(), 0);
                if (all != want || s.train_indices.empty() || s.test_indices.empty())
                    failures.push_back("split n=" + std::to_string(n) + " is not a partition");
                ++splits;
            }

    Rng rng(9);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<std::string> names;
        std::vector<double> scores;
        for (std::size_t j = 0; j < 25; ++j) {
            names.push_back("c" + std::to_string(j));
            scores.push_back(rng.bernoulli(0.2) ? 0.0 : std::pow(10.0, rng.uniform(-12, 12)));
        }
        check_table(make_ranking(names, scores, "random", "t"), "random ranking");
        ++tables;
    }

    for (std::uint64_t seed : {1, 2, 3}) {
        const auto data = fixtures::planted_data(seed, seed == 1 ? Construction::linear : Construction::tree, 400);
        const auto x = data.dataset.predictors();
        check_corr(correlate(x.values, x.names), "counter correlation");
        check_corr(correlate(data.dataset.metrics(), {kMetricNames.begin(), kMetricNames.end()}), "objective correlation");
        matrices += 2;

        const Vector y = data.dataset.metric("runtime");
        std::vector<ModelSpec> specs;
        for (Method m : required_methods())
            specs.push_back({m, {}, seed, {}});
        const auto e = blend(specs, x, y, CvPlan(400, 5, 5, seed), "runtime");
        check_table(ensemble_importance(e), "ensemble ranking");
        for (const auto& t : member_rankings(e))
            check_table(t, "member ranking " + t.method);
        tables += 1 + e.members().size();
        check_corr(model_correlation(e, x), "model correlation");
        ++matrices;

        const Vector w = e.weights();
        if ((w.array() < 0.0).any())
            failures.push_back("negative blend weight");
        const Matrix centered = e.oof_design().rowwise() - e.oof_design().colwise().mean();
        const Vector yc = y.array() - y.mean();
        const double base = (yc - centered * w).squaredNorm();
        for (Index k = 0; k < w.size(); ++k)
            for (double step : {1e-3, -1e-3}) {
                Vector t = w;
                t[k] = std::max(0.0, t[k] + step);
                if ((yc - centered * t).squaredNorm() < base * (1 - 1e-12))
                    failures.push_back("blend weight " + std::to_string(k) + " improvable");
                ++perturbations;
            }

        MvtbOptions o;
        o.n_trees = 300;
        o.seed = seed;
        const auto mv = fit_mvtb(x, data.dataset.metrics(), {kMetricNames.begin(), kMetricNames.end()}, o);
        check_table(mvtb_ranking(mv), "mvtb ranking");
        ++tables;
    }
    for (const auto& f : failures)
        detail(f);
    return {failures.empty(), std::to_string(tables) + " rankings, " + std::to_string(matrices) +
                                  " correlation matrices, " + std::to_string(splits) + " splits, " +
                                  std::to_string(perturbations) + " weight perturbations; " +
                                  std::to_string(failures.size()) + " violations"};
}

Outcome criterion_10() {
    double worst = 0;
    int cases = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto data = fixtures::planted_data(seed, Construction::tree, 500);
        const auto s = split(500, seed, 0.8);
        const auto x = data.dataset.predictors();
        const auto x_train = x.take_rows(s.train_indices);
        const auto x_test = x.take_rows(s.test_indices);
        for (std::size_t m = 0; m < 4; ++m) {
            const Vector y = take(Vector(data.dataset.metrics().col(static_cast<Index>(m))), s.train_indices);
            MvtbOptions o;
            o.seed = seed;
            const auto mv = fit_mvtb(x_train, y, {std::string(kMetricNames[m])}, o);
            const auto gbm = fit({Method::gbm, {}, seed, {}}, x_train, y);
            worst = std::max(worst, (mv.predict(x_test).col(0) - gbm.predict(x_test)).cwiseAbs().maxCoeff());
            ++cases;
        }
    }
    return {worst <= 1e-9, std::to_string(cases) + " outcome fits, max |mvtb - gbm| on test rows " + fmt("%.3g", worst)};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {"metric oracles", criterion_1},
    {"linear methods vs normal equations", criterion_2},
    {"boosting SSE monotone", criterion_3},
    {"ensemble vs members", criterion_4},
    {"planted counters in rankings", criterion_5},
    {"selectors recover planted counters", criterion_6},
    {"filter fallback rankings identical", criterion_7},
    {"byte-identical reruns", criterion_8},
    {"structural invariants", criterion_9},
    {"single-outcome mvtb equals gbm", criterion_10},
};

} // namespace

int main(int argc, char** argv) {
    std::vector<std::size_t> which;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            const int c = std::atoi(argv[++i]);
            if (c < 1 || c > static_cast<int>(kCriteria.size())) {
                std::cerr << "criterion must be 1.." << kCriteria.size() << '\n';
                return 2;
            }
            which.push_back(static_cast<std::size_t>(c));
        } else {
            std::cerr << "usage: counterlens_acceptance [--criterion N]...\n";
            return 2;
        }
    }
    if (which.empty())
        for (std::size_t c = 1; c <= kCriteria.size(); ++c)
            which.push_back(c);

    bool all = true;
    for (std::size_t c : which) {
        const auto& [title, run] = kCriteria[c - 1];
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << "criterion " << c << " [" << title << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.summary
                  << '\n'
                  << std::flush;
    }
    return all ? 0 : 1;
}
