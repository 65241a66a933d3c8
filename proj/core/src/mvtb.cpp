#include "counterlens/mvtb.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/parallel.hpp"
#include "regressor_impl.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

namespace counterlens {

std::vector<int> MvtbModel::trees_per_outcome() const {
    std::vector<int> out;
    for (const auto& t : trees_)
        out.push_back(static_cast<int>(t.size()));
    return out;
}

Matrix MvtbModel::predict(const FeatureMatrix& x) const {
    const Matrix z = standardization_.apply(x);
    Matrix out(z.rows(), static_cast<Index>(outcomes_.size()));
    for (std::size_t k = 0; k < outcomes_.size(); ++k) {
        Vector f = Vector::Zero(z.rows());
        for (const auto& t : trees_[k])
            for (Index i = 0; i < z.rows(); ++i)
                f[i] += options_.shrinkage * t.predict(z, i);
        out.col(static_cast<Index>(k)) = (outcome_mean_[static_cast<Index>(k)] +
                                          outcome_sd_[static_cast<Index>(k)] * f.array()).matrix();
    }
    return out;
}

namespace {

void check_options(const MvtbOptions& o) {
    if (o.n_trees < 1)
        throw ConfigError("mvtb: n_trees must be at least 1");
    if (!(o.shrinkage > 0.0 && o.shrinkage <= 1.0))
        throw ConfigError("mvtb: shrinkage must be in (0, 1]");
    if (o.depth < 1)
        throw ConfigError("mvtb: depth must be at least 1");
    if (!(o.subsample > 0.0 && o.subsample <= 1.0))
        throw ConfigError("mvtb: subsample must be in (0, 1]");
    if (!(o.min_leaf >= 1.0))
        throw ConfigError("mvtb: min_leaf must be at least 1");
}

struct Candidate {
    bool valid = false;
    RegressionTree tree;
    std::vector<double> gain;
    Vector step;  // shrinkage * leaf value per training row
    double reduction = 0.0;
};

std::string format6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

MvtbModel fit_mvtb(const FeatureMatrix& x, const Matrix& y, std::vector<std::string> outcomes,
                   const MvtbOptions& options) {
    check_options(options);
    if (y.rows() != x.rows())
        throw SizeError("mvtb: predictor and outcome rows differ");
    if (y.cols() < 1 || static_cast<std::size_t>(y.cols()) != outcomes.size())
        throw SizeError("mvtb: outcome names do not match outcome columns");
    if (x.rows() < 2 || x.cols() < 1)
        throw SizeError("mvtb: needs at least 2 rows and 1 predictor");
    require_finite(x.values, "predictors");
    require_finite(y, "outcomes");

    const Index n = x.rows();
    const auto K = static_cast<std::size_t>(y.cols());
    const int p = static_cast<int>(x.cols());

    MvtbModel model;
    model.outcomes_ = std::move(outcomes);
    model.options_ = options;
    model.options_.progress = nullptr;
    model.standardization_ = Standardization::fit(x);
    const Matrix z = model.standardization_.apply(x);
    const SortedColumns sorted(z);

    model.outcome_mean_.resize(static_cast<Index>(K));
    model.outcome_sd_.resize(static_cast<Index>(K));
    std::vector<Vector> residual(K);
    std::vector<double> sse(K);
    model.sse_trace_.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const Vector col = y.col(static_cast<Index>(k));
        const double mu = mean(col);
        double sd = population_sd(col);
        if (sd == 0.0)
            sd = 1.0;
        model.outcome_mean_[static_cast<Index>(k)] = mu;
        model.outcome_sd_[static_cast<Index>(k)] = sd;
        residual[k] = (col.array() - mu) / sd;
        sse[k] = residual[k].squaredNorm();
        model.sse_trace_[k].push_back(sse[k]);
    }
    model.trees_.resize(K);
    model.influence_ = Matrix::Zero(p, static_cast<Index>(K));

    TreeParams params;
    params.max_depth = options.depth;
    params.min_leaf = options.min_leaf;
    params.min_split = 2.0 * options.min_leaf;
    const std::uint64_t stream = boosting_stream(options.seed);

    std::vector<Candidate> cand(K);
    auto build = [&](std::size_t k) {
        Candidate& c = cand[k];
        const auto weights = detail::boosting_subsample(stream, model.trees_[k].size(), static_cast<std::size_t>(n),
                                                        options.subsample);
        c.gain.assign(static_cast<std::size_t>(p), 0.0);
        c.tree = grow_tree(z, sorted, residual[k], weights, params, nullptr, c.gain);
        refit_leaves(c.tree, z, residual[k]);
        c.step.resize(n);
        double after = 0.0;
        for (Index i = 0; i < n; ++i) {
            c.step[i] = options.shrinkage * c.tree.predict(z, i);
            const double r = residual[k][i] - c.step[i];
            after += r * r;
        }
        c.reduction = sse[k] - after;
        c.valid = true;
    };

    const auto start = std::chrono::steady_clock::now();
    for (int it = 0; it < options.n_trees; ++it) {
        std::vector<std::size_t> stale;
        for (std::size_t k = 0; k < K; ++k)
            if (!cand[k].valid)
                stale.push_back(k);
        parallel_for(stale.size(), [&](std::size_t s) { build(stale[s]); });

        std::size_t chosen = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (cand[k].reduction > cand[chosen].reduction)
                chosen = k;

        Candidate& c = cand[chosen];
        residual[chosen] -= c.step;
        sse[chosen] = residual[chosen].squaredNorm();
        model.sse_trace_[chosen].push_back(sse[chosen]);
        for (int j = 0; j < p; ++j)
            model.influence_(j, static_cast<Index>(chosen)) += c.gain[static_cast<std::size_t>(j)];
        model.trees_[chosen].push_back(std::move(c.tree));
        model.selection_log_.push_back(static_cast<int>(chosen));
        c.valid = false;

        if (options.progress && (it + 1) % 50 == 0) {
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            if (elapsed.count() > options.time_budget_seconds)
                options.progress(it + 1, options.n_trees);
        }
    }
    return model;
}

RankingTable mvtb_ranking(const MvtbModel& model) {
    const Vector total = model.influence().rowwise().sum();
    return make_ranking(model.predictors(), std::vector<double>(total.data(), total.data() + total.size()), "mvtb",
                        "joint");
}

std::string MvtbModel::influence_csv() const {
    std::ostringstream out;
    out << "counter";
    for (const auto& o : outcomes_)
        out << ',' << o;
    out << '\n';
    for (Index j = 0; j < influence_.rows(); ++j) {
        out << standardization_.names[static_cast<std::size_t>(j)];
        for (Index k = 0; k < influence_.cols(); ++k)
            out << ',' << format6(influence_(j, k));
        out << '\n';
    }
    return out.str();
}

std::string MvtbModel::selection_log_csv() const {
    std::ostringstream out;
    out << "iteration,outcome\n";
    for (std::size_t i = 0; i < selection_log_.size(); ++i)
        out << i + 1 << ',' << outcomes_[static_cast<std::size_t>(selection_log_[i])] << '\n';
    return out.str();
}

nlohmann::json MvtbModel::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& seq : trees_) {
        nlohmann::json s = nlohmann::json::array();
        for (const auto& t : seq)
            s.push_back(t.to_json());
        trees.push_back(std::move(s));
    }
    return {{"format_version", FittedModel::kFormatVersion},
            {"outcomes", outcomes_},
            {"standardization", standardization_.to_json()},
            {"options",
             {{"n_trees", options_.n_trees},
              {"shrinkage", options_.shrinkage},
              {"depth", options_.depth},
              {"subsample", options_.subsample},
              {"min_leaf", options_.min_leaf},
              {"seed", options_.seed}}},
            {"outcome_mean", detail::vector_to_json(outcome_mean_)},
            {"outcome_sd", detail::vector_to_json(outcome_sd_)},
            {"trees", trees},
            {"influence", detail::matrix_to_json(influence_)},
            {"selection_log", selection_log_},
            {"sse_trace", sse_trace_}};
}

MvtbModel MvtbModel::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format_version", -1) != FittedModel::kFormatVersion)
        throw FormatError("mvtb format version is missing or unsupported");
    MvtbModel m;
    try {
        m.outcomes_ = doc.at("outcomes").get<std::vector<std::string>>();
        m.standardization_ = Standardization::from_json(doc.at("standardization"));
        const auto& o = doc.at("options");
        m.options_.n_trees = o.at("n_trees").get<int>();
        m.options_.shrinkage = o.at("shrinkage").get<double>();
        m.options_.depth = o.at("depth").get<int>();
        m.options_.subsample = o.at("subsample").get<double>();
        m.options_.min_leaf = o.at("min_leaf").get<double>();
        m.options_.seed = o.at("seed").get<std::uint64_t>();
        m.outcome_mean_ = detail::json_to_vector(doc.at("outcome_mean"));
        m.outcome_sd_ = detail::json_to_vector(doc.at("outcome_sd"));
        for (const auto& seq : doc.at("trees")) {
            std::vector<RegressionTree> s;
            for (const auto& t : seq)
                s.push_back(RegressionTree::from_json(t));
            m.trees_.push_back(std::move(s));
        }
        m.influence_ = detail::json_to_matrix(doc.at("influence"));
        m.selection_log_ = doc.at("selection_log").get<std::vector<int>>();
        m.sse_trace_ = doc.at("sse_trace").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed mvtb document: ") + e.what());
    }
    const auto K = m.outcomes_.size();
    if (m.trees_.size() != K || static_cast<std::size_t>(m.outcome_mean_.size()) != K ||
        static_cast<std::size_t>(m.outcome_sd_.size()) != K)
        throw FormatError("mvtb document: outcome arrays differ in length");
    return m;
}

} // namespace counterlens
