#include "counterlens/featsel.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/parallel.hpp"
#include "counterlens/random.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace counterlens {

nlohmann::json SelectionResult::to_json() const {
    nlohmann::json doc = {{"method", method},       {"estimator", estimator}, {"selected", selected},
                          {"criterion", criterion}, {"seed", seed},           {"trace", trace},
                          {"trace_index", trace_index}, {"path", path},       {"notes", notes}};
    doc["best_score"] = std::isfinite(best_score) ? nlohmann::json(best_score) : nlohmann::json(nullptr);
    return doc;
}

std::string SelectionResult::trace_csv() const {
    static const std::map<std::string, std::string, std::less<>> index_names = {
        {"rfe", "size"}, {"ga", "generation"}, {"sa", "iteration"}, {"sbf", "fold"}, {"stepwise", "step"}};
    const auto it = index_names.find(method);
    std::ostringstream out;
    out << (it == index_names.end() ? "index" : it->second) << ',' << criterion << '\n';
    for (std::size_t i = 0; i < trace.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", trace[i]);
        out << (i < trace_index.size() ? trace_index[i] : static_cast<int>(i)) << ',' << buf << '\n';
    }
    return out.str();
}

std::size_t overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t count = 0;
    for (const auto& s : a)
        if (std::find(b.begin(), b.end(), s) != b.end())
            ++count;
    return count;
}

double subset_cv_rmse(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, const CvPlan& plan,
                      const std::vector<std::string>& subset) {
    if (subset.empty())
        throw ArgumentError("cannot score an empty subset");
    return out_of_fold(estimator, x.select_columns(subset), y, plan).cv_rmse;
}

namespace {

using Genome = std::vector<bool>;

std::vector<std::string> names_of(const FeatureMatrix& x, const Genome& g) {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < g.size(); ++j)
        if (g[j])
            out.push_back(x.names[j]);
    return out;
}

std::string key_of(const Genome& g) {
    std::string k(g.size(), '0');
    for (std::size_t j = 0; j < g.size(); ++j)
        if (g[j])
            k[j] = '1';
    return k;
}

bool repair(Genome& g, Rng& rng) {
    if (std::find(g.begin(), g.end(), true) != g.end())
        return false;
    g[rng.index(g.size())] = true;
    return true;
}

/// Memoized subset scoring shared by the stochastic searches.
class FitnessCache {
public:
    FitnessCache(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, const CvPlan& plan)
        : estimator_(estimator), x_(x), y_(y), plan_(plan) {}

    /// Scores every genome not yet seen; evaluations may run concurrently.
    void evaluate(const std::vector<Genome>& genomes) {
        std::vector<std::string> pending;
        for (const auto& g : genomes) {
            auto k = key_of(g);
            if (!scores_.contains(k) && std::find(pending.begin(), pending.end(), k) == pending.end())
                pending.push_back(std::move(k));
        }
        std::vector<double> out(pending.size());
        parallel_for(pending.size(), [&](std::size_t i) {
            Genome g(pending[i].size());
            for (std::size_t j = 0; j < g.size(); ++j)
                g[j] = pending[i][j] == '1';
            out[i] = subset_cv_rmse(estimator_, x_, y_, plan_, names_of(x_, g));
        });
        for (std::size_t i = 0; i < pending.size(); ++i)
            scores_[pending[i]] = out[i];
    }

    double operator()(const Genome& g) {
        auto k = key_of(g);
        if (auto it = scores_.find(k); it != scores_.end())
            return it->second;
        evaluate({g});
        return scores_.at(k);
    }

private:
    const ModelSpec& estimator_;
    const FeatureMatrix& x_;
    const Vector& y_;
    const CvPlan& plan_;
    std::map<std::string, double> scores_;
};

Genome random_genome(std::size_t p, Rng& rng) {
    Genome g(p);
    for (std::size_t j = 0; j < p; ++j)
        g[j] = rng.bernoulli(0.5);
    return g;
}

std::vector<std::size_t> top_by_importance(const ImportanceVector& imp, const FeatureMatrix& x) {
    std::vector<std::size_t> order(imp.scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return imp.scores[a] > imp.scores[b]; });
    // Importance is reported in the model's own column order, which matches x.
    if (imp.predictors != x.names)
        throw ArgumentError("importance columns do not match the predictors");
    return order;
}

std::vector<std::string> canonical(const FeatureMatrix& x, std::vector<std::string> subset) {
    std::vector<std::string> out;
    for (const auto& name : x.names)
        if (std::find(subset.begin(), subset.end(), name) != subset.end())
            out.push_back(name);
    return out;
}

} // namespace

SelectionResult rfe(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, std::vector<int> sizes,
                    const CvPlan& plan) {
    if (estimator.method != Method::random_forest && estimator.method != Method::bagged_cart &&
        estimator.method != Method::ridge)
        throw ConfigError("rfe supports random_forest, bagged_cart and ridge estimators, not " +
                          std::string(to_string(estimator.method)));
    const int p = static_cast<int>(x.cols());
    if (sizes.empty())
        throw ArgumentError("rfe needs at least one subset size");
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    if (sizes.front() < 1 || sizes.back() > p)
        throw ArgumentError("rfe subset sizes must lie in [1, " + std::to_string(p) + "]");
    if (plan.rows() != static_cast<std::size_t>(x.rows()))
        throw ArgumentError("cross-validation plan does not match the data");

    const int folds = plan.n_folds();
    const auto tasks = static_cast<std::size_t>(plan.n_repeats() * folds);
    std::vector<std::vector<double>> fold_rmse(tasks);
    parallel_for(tasks, [&](std::size_t t) {
        const int repeat = static_cast<int>(t) / folds;
        const int fold = static_cast<int>(t) % folds;
        const auto train = plan.train_rows(repeat, fold);
        const auto test = plan.test_rows(repeat, fold);
        const FeatureMatrix xtr = x.take_rows(train);
        const FeatureMatrix xte = x.take_rows(test);
        const Vector ytr = take(y, train);
        const Vector yte = take(y, test);
        ModelSpec spec = estimator;
        spec.seed = stream_seed(estimator.seed, "fold", t);
        const auto order = top_by_importance(fit(spec, xtr, ytr).importance(), xtr);
        for (int s : sizes) {
            std::vector<std::string> keep;
            for (int k = 0; k < s; ++k)
                keep.push_back(x.names[order[static_cast<std::size_t>(k)]]);
            const auto model = fit(spec, xtr.select_columns(keep), ytr);
            fold_rmse[t].push_back(rmse(yte, model.predict(xte.select_columns(keep))));
        }
    });

    SelectionResult result;
    result.method = "rfe";
    result.estimator = estimator.display_label();
    result.seed = plan.seed();
    std::size_t best = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        double sum = 0.0;
        for (const auto& f : fold_rmse)
            sum += f[k];
        result.trace.push_back(sum / static_cast<double>(tasks));
        result.trace_index.push_back(sizes[k]);
    }
    // Smallest size within a rounding margin of the minimum.
    const double min_rmse = *std::min_element(result.trace.begin(), result.trace.end());
    while (result.trace[best] > min_rmse * (1.0 + 1e-9) + 1e-12)
        ++best;
    result.best_score = result.trace[best];

    const auto order = top_by_importance(fit(estimator, x, y).importance(), x);
    std::vector<std::string> keep;
    for (int k = 0; k < sizes[best]; ++k)
        keep.push_back(x.names[order[static_cast<std::size_t>(k)]]);
    result.selected = canonical(x, keep);
    return result;
}

SelectionResult ga_select(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, const CvPlan& plan,
                          const GaOptions& options) {
    if (options.population < 4 || options.population % 2 != 0)
        throw ConfigError("ga population must be even and at least 4");
    if (options.generations < 1)
        throw ConfigError("ga needs at least one generation");
    if (options.crossover_rate < 0.0 || options.crossover_rate > 1.0 || options.mutation_rate < 0.0 ||
        options.mutation_rate > 1.0)
        throw ConfigError("ga rates must lie in [0, 1]");
    const auto p = static_cast<std::size_t>(x.cols());
    const double mutation = options.mutation_rate > 0.0 ? options.mutation_rate : 1.0 / static_cast<double>(p);
    Rng rng(stream_seed(options.seed, "ga"));
    FitnessCache fitness(estimator, x, y, plan);

    SelectionResult result;
    result.method = "ga";
    result.estimator = estimator.display_label();
    result.seed = options.seed;

    std::vector<Genome> pop;
    for (const auto& g : options.initial) {
        if (g.size() != p)
            throw ArgumentError("initial genome length differs from the number of predictors");
        if (pop.size() < static_cast<std::size_t>(options.population))
            pop.push_back(g);
    }
    for (auto& g : pop)
        if (repair(g, rng))
            result.notes.push_back("generation 0: repaired an empty initial genome");
    while (pop.size() < static_cast<std::size_t>(options.population)) {
        Genome g = random_genome(p, rng);
        if (repair(g, rng))
            result.notes.push_back("generation 0: repaired an empty genome");
        pop.push_back(std::move(g));
    }

    Genome best;
    double best_score = std::numeric_limits<double>::infinity();
    auto score_population = [&](int generation) {
        fitness.evaluate(pop);
        for (const auto& g : pop) {
            const double s = fitness(g);
            if (s < best_score) {
                best_score = s;
                best = g;
            }
        }
        result.trace.push_back(best_score);
        result.trace_index.push_back(generation);
    };
    score_population(0);

    for (int gen = 1; gen <= options.generations; ++gen) {
        std::vector<double> scores;
        for (const auto& g : pop)
            scores.push_back(fitness(g));
        const auto elite = static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
        auto tournament = [&]() -> const Genome& {
            const std::size_t a = rng.index(pop.size());
            const std::size_t b = rng.index(pop.size());
            return scores[b] < scores[a] ? pop[b] : pop[a];
        };
        std::vector<Genome> next{pop[elite]};
        while (next.size() < pop.size()) {
            Genome c1 = tournament();
            Genome c2 = tournament();
            if (rng.uniform() < options.crossover_rate)
                for (std::size_t j = 0; j < p; ++j)
                    if (rng.bernoulli(0.5)) {
                        const bool tmp = c1[j];
                        c1[j] = c2[j];
                        c2[j] = tmp;
                    }
            for (Genome* c : {&c1, &c2}) {
                for (std::size_t j = 0; j < p; ++j)
                    if (rng.uniform() < mutation)
                        (*c)[j] = !(*c)[j];
                if (repair(*c, rng))
                    result.notes.push_back("generation " + std::to_string(gen) + ": repaired an empty genome");
                if (next.size() < pop.size())
                    next.push_back(*c);
            }
        }
        pop = std::move(next);
        score_population(gen);
    }

    result.selected = names_of(x, best);
    result.best_score = best_score;
    return result;
}

SelectionResult sa_select(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, const CvPlan& plan,
                          const SaOptions& options) {
    if (options.iterations < 1)
        throw ConfigError("sa needs at least one iteration");
    if (!(options.cooling > 0.0 && options.cooling <= 1.0))
        throw ConfigError("sa cooling factor must be in (0, 1]");
    const auto p = static_cast<std::size_t>(x.cols());
    Rng rng(stream_seed(options.seed, "sa"));
    FitnessCache fitness(estimator, x, y, plan);

    SelectionResult result;
    result.method = "sa";
    result.estimator = estimator.display_label();
    result.seed = options.seed;

    Genome current = random_genome(p, rng);
    if (repair(current, rng))
        result.notes.push_back("iteration 0: repaired an empty subset");
    double current_score = fitness(current);
    Genome best = current;
    double best_score = current_score;
    const double t0 = options.initial_temperature < 0.0 ? 0.1 * current_score : options.initial_temperature;
    result.trace.push_back(best_score);
    result.trace_index.push_back(0);

    double temperature = t0;
    for (int it = 1; it <= options.iterations; ++it) {
        Genome candidate = current;
        const std::size_t flips = std::min<std::size_t>(1 + rng.index(3), p);
        std::vector<std::size_t> pool(p);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t k = 0; k < flips; ++k) {
            std::swap(pool[k], pool[k + rng.index(p - k)]);
            candidate[pool[k]] = !candidate[pool[k]];
        }
        if (repair(candidate, rng))
            result.notes.push_back("iteration " + std::to_string(it) + ": repaired an empty subset");
        const double score = fitness(candidate);
        const double delta = score - current_score;
        bool accept = delta < 0.0;
        if (!accept && temperature > 0.0)
            accept = rng.uniform() < std::exp(-delta / temperature);
        if (accept) {
            current = std::move(candidate);
            current_score = score;
            if (current_score < best_score) {
                best_score = current_score;
                best = current;
            }
        }
        result.trace.push_back(best_score);
        result.trace_index.push_back(it);
        temperature *= options.cooling;
    }

    result.selected = names_of(x, best);
    result.best_score = best_score;
    return result;
}

double slope_p_value(const Vector& x, const Vector& y) {
    if (x.size() != y.size())
        throw SizeError("slope test: lengths differ");
    const Index n = x.size();
    if (n < 3)
        throw SizeError("slope test needs at least 3 points");
    const Vector xc = x.array() - x.mean();
    const Vector yc = y.array() - y.mean();
    const double sxx = xc.squaredNorm();
    if (sxx == 0.0)
        return 1.0;
    const double sxy = xc.dot(yc);
    const double slope = sxy / sxx;
    const double sse = std::max(0.0, (yc - slope * xc).squaredNorm());
    const double df = static_cast<double>(n - 2);
    const double se = std::sqrt(sse / df / sxx);
    if (se == 0.0)
        return slope != 0.0 ? 0.0 : 1.0;
    const double t = std::abs(slope / se);
    const boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

SelectionResult sbf(const ModelSpec& estimator, const FeatureMatrix& x, const Vector& y, const CvPlan& plan,
                    double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("sbf threshold must lie in (0, 1)");
    if (plan.rows() != static_cast<std::size_t>(x.rows()))
        throw ArgumentError("cross-validation plan does not match the data");
    const auto p = static_cast<std::size_t>(x.cols());
    const int folds = plan.n_folds();
    const auto tasks = static_cast<std::size_t>(plan.n_repeats() * folds);
    std::vector<std::vector<char>> passed(tasks, std::vector<char>(p, 0));
    std::vector<double> fold_rmse(tasks);

    parallel_for(tasks, [&](std::size_t t) {
        const int repeat = static_cast<int>(t) / folds;
        const int fold = static_cast<int>(t) % folds;
        const auto train = plan.train_rows(repeat, fold);
        const auto test = plan.test_rows(repeat, fold);
        const FeatureMatrix xtr = x.take_rows(train);
        const Vector ytr = take(y, train);
        const Vector yte = take(y, test);
        std::vector<std::string> keep;
        for (std::size_t j = 0; j < p; ++j)
            if (slope_p_value(xtr.values.col(static_cast<Index>(j)), ytr) <= threshold) {
                passed[t][j] = 1;
                keep.push_back(x.names[j]);
            }
        if (keep.empty()) {
            fold_rmse[t] = rmse(yte, Vector::Constant(yte.size(), ytr.mean()));
            return;
        }
        ModelSpec spec = estimator;
        spec.seed = stream_seed(estimator.seed, "fold", t);
        const auto model = fit(spec, xtr.select_columns(keep), ytr);
        fold_rmse[t] = rmse(yte, model.predict(x.take_rows(test).select_columns(keep)));
    });

    SelectionResult result;
    result.method = "sbf";
    result.estimator = estimator.display_label();
    result.seed = plan.seed();
    bool any = false;
    for (std::size_t j = 0; j < p; ++j) {
        std::size_t count = 0;
        for (const auto& f : passed)
            count += static_cast<std::size_t>(f[j]);
        any = any || count > 0;
        if (2 * count >= tasks)
            result.selected.push_back(x.names[j]);
    }
    if (!any)
        throw DegenerateError("no counter passed the filter in any fold; raise the threshold");
    if (result.selected.empty())
        throw DegenerateError("no counter passed the filter in half of the folds; raise the threshold");
    for (std::size_t t = 0; t < tasks; ++t) {
        result.trace.push_back(fold_rmse[t]);
        result.trace_index.push_back(static_cast<int>(t));
    }
    result.best_score = subset_cv_rmse(estimator, x, y, plan, result.selected);
    return result;
}

StepDirection parse_direction(std::string_view text) {
    if (text == "forward")
        return StepDirection::forward;
    if (text == "backward")
        return StepDirection::backward;
    if (text == "both")
        return StepDirection::both;
    throw ConfigError("unknown stepwise direction '" + std::string(text) + "'");
}

namespace {

struct OlsFit {
    double sse = 0.0;
    Index rank = 0;
};

OlsFit ols(const Matrix& x, const Vector& y, const std::vector<char>& in) {
    Index k = 1;
    for (char c : in)
        k += c;
    Matrix design(x.rows(), k);
    design.col(0).setOnes();
    Index c = 1;
    for (std::size_t j = 0; j < in.size(); ++j)
        if (in[j])
            design.col(c++) = x.col(static_cast<Index>(j));
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(1e-10);
    const Vector beta = qr.solve(y);
    return {(y - design * beta).squaredNorm(), qr.rank()};
}

double aic(double sse, Index n, Index k) {
    const double nd = static_cast<double>(n);
    return nd * std::log(std::max(sse, 1e-300) / nd) + 2.0 * static_cast<double>(k);
}

} // namespace

SelectionResult stepwise(const FeatureMatrix& x, const Vector& y, StepDirection direction,
                         const std::vector<std::string>* start) {
    const auto p = static_cast<std::size_t>(x.cols());
    const Index n = x.rows();
    if (n != y.size())
        throw SizeError("stepwise: rows and target differ in length");
    require_finite(x.values, "predictors");
    require_finite(y, "target");

    std::vector<char> in(p, direction == StepDirection::backward && start == nullptr ? 1 : 0);
    if (start != nullptr) {
        for (const auto& name : *start) {
            const Index j = x.column_index(name);
            if (j < 0)
                throw ArgumentError("stepwise start counter '" + name + "' is not a predictor");
            in[static_cast<std::size_t>(j)] = 1;
        }
    }
    auto size = [&]() { return static_cast<Index>(std::count(in.begin(), in.end(), 1)); };
    if (direction == StepDirection::backward) {
        if (n <= size() + 2)
            throw NumericalError("stepwise backward start needs more rows than predictors + 2; use forward");
        if (ols(x.values, y, in).rank < size() + 1)
            throw NumericalError("stepwise backward start is rank deficient; use the forward direction");
    }

    SelectionResult result;
    result.method = "stepwise";
    result.estimator = "glm";
    result.criterion = "aic";
    double current = aic(ols(x.values, y, in).sse, n, size() + 1);
    result.trace.push_back(current);
    result.trace_index.push_back(0);

    const bool may_add = direction != StepDirection::backward;
    const bool may_drop = direction != StepDirection::forward;
    for (int step = 1;; ++step) {
        double best = current;
        std::size_t move = p;
        for (std::size_t j = 0; j < p; ++j) {
            if ((in[j] && !may_drop) || (!in[j] && !may_add))
                continue;
            if (!in[j] && size() + 2 >= n)
                continue;
            in[j] = !in[j];
            const OlsFit f = ols(x.values, y, in);
            const double score = aic(f.sse, n, size() + 1);
            const bool full_rank = f.rank == size() + 1;
            in[j] = !in[j];
            if (full_rank && score < best) {
                best = score;
                move = j;
            }
        }
        if (move == p)
            break;
        in[move] = !in[move];
        current = best;
        result.path.push_back((in[move] ? "+" : "-") + x.names[move]);
        result.trace.push_back(current);
        result.trace_index.push_back(step);
    }
    for (std::size_t j = 0; j < p; ++j)
        if (in[j])
            result.selected.push_back(x.names[j]);
    result.best_score = current;
    if (result.selected.empty())
        result.notes.push_back("no counter improves on the intercept-only model");
    return result;
}

} // namespace counterlens
