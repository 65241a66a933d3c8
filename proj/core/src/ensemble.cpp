#include "counterlens/ensemble.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>

namespace counterlens {

std::vector<std::string> RankingTable::top(std::size_t k) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, entries.size()); ++i)
        out.push_back(entries[i].counter);
    return out;
}

double RankingTable::percentage_of(std::string_view counter) const {
    for (const auto& e : entries)
        if (e.counter == counter)
            return e.percentage;
    return 0.0;
}

RankingTable make_ranking(const std::vector<std::string>& counters, const std::vector<double>& scores,
                          std::string method, std::string objective) {
    if (counters.size() != scores.size())
        throw SizeError("ranking: counters and scores differ in length");
    if (counters.empty())
        throw SizeError("ranking: no counters");
    double total = 0.0;
    for (double s : scores) {
        if (!std::isfinite(s) || s < 0.0)
            throw ArgumentError("ranking: scores must be finite and nonnegative");
        total += s;
    }
    RankingTable table;
    table.method = std::move(method);
    table.objective = std::move(objective);
    for (std::size_t j = 0; j < counters.size(); ++j) {
        const double pct = total > 0.0 ? 100.0 * scores[j] / total : 100.0 / static_cast<double>(counters.size());
        table.entries.push_back({counters[j], pct});
    }
    std::sort(table.entries.begin(), table.entries.end(), [](const RankingEntry& a, const RankingEntry& b) {
        if (a.percentage != b.percentage)
            return a.percentage > b.percentage;
        return a.counter < b.counter;
    });
    return table;
}

Vector nnls(const Matrix& a, const Vector& b, double tolerance) {
    const Index m = a.cols();
    if (a.rows() != b.size())
        throw SizeError("nnls: dimensions differ");
    Vector w = Vector::Zero(m);
    std::vector<char> passive(static_cast<std::size_t>(m), 0);
    const double scale = std::max(1.0, a.norm() * b.norm());
    const double tol = tolerance * scale;

    auto solve_passive = [&]() {
        std::vector<Index> cols;
        for (Index j = 0; j < m; ++j)
            if (passive[static_cast<std::size_t>(j)])
                cols.push_back(j);
        Matrix sub(a.rows(), static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k)
            sub.col(static_cast<Index>(k)) = a.col(cols[k]);
        const Vector s = sub.colPivHouseholderQr().solve(b);
        Vector z = Vector::Zero(m);
        for (std::size_t k = 0; k < cols.size(); ++k)
            z[cols[k]] = s[static_cast<Index>(k)];
        return z;
    };

    for (Index outer = 0; outer < 3 * m + 10; ++outer) {
        const Vector grad = a.transpose() * (b - a * w);
        Index best = -1;
        for (Index j = 0; j < m; ++j)
            if (!passive[static_cast<std::size_t>(j)] && grad[j] > tol && (best < 0 || grad[j] > grad[best]))
                best = j;
        if (best < 0)
            break;
        passive[static_cast<std::size_t>(best)] = 1;
        for (Index inner = 0; inner < 3 * m + 10; ++inner) {
            const Vector z = solve_passive();
            bool feasible = true;
            for (Index j = 0; j < m; ++j)
                if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0)
                    feasible = false;
            if (feasible) {
                w = z;
                break;
            }
            double alpha = 1.0;
            for (Index j = 0; j < m; ++j)
                if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0)
                    alpha = std::min(alpha, w[j] / (w[j] - z[j]));
            w += alpha * (z - w);
            for (Index j = 0; j < m; ++j)
                if (passive[static_cast<std::size_t>(j)] && w[j] <= 1e-15) {
                    passive[static_cast<std::size_t>(j)] = 0;
                    w[j] = 0.0;
                }
        }
    }
    return w;
}

Vector EnsembleModel::weights() const {
    Vector w(static_cast<Index>(members_.size()));
    for (std::size_t k = 0; k < members_.size(); ++k)
        w[static_cast<Index>(k)] = members_[k].weight;
    return w;
}

Vector EnsembleModel::predict(const FeatureMatrix& x) const {
    Vector out = Vector::Constant(x.rows(), intercept_);
    for (const auto& m : members_)
        if (m.active())
            out += m.weight * m.model.predict(x);
    return out;
}

Vector EnsembleModel::oof_predictions() const {
    return (oof_design_ * weights()).array() + intercept_;
}

namespace {

std::string file_stem(const std::string& label) {
    std::string out;
    for (char c : label)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

std::vector<std::string> unique_labels(const std::vector<ModelSpec>& specs) {
    std::map<std::string, int> seen;
    std::vector<std::string> out;
    for (const auto& s : specs) {
        const std::string base = s.display_label();
        const int count = ++seen[base];
        out.push_back(count == 1 ? base : base + "-" + std::to_string(count));
    }
    return out;
}

} // namespace

void EnsembleModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : members_) {
        const std::string file = file_stem(m.model.label()) + ".model.json";
        std::ofstream(dir / file) << m.model.to_json().dump(1) << '\n';
        members.push_back({{"label", m.model.label()},
                           {"file", file},
                           {"weight", m.weight},
                           {"cv_rmse", m.cv_rmse},
                           {"oof", std::vector<double>(m.oof.data(), m.oof.data() + m.oof.size())}});
    }
    nlohmann::json doc = {{"format_version", FittedModel::kFormatVersion},
                          {"metric", metric_name_},
                          {"intercept", intercept_},
                          {"members", members},
                          {"warnings", warnings_}};
    std::ofstream out(dir / "ensemble.json");
    if (!out)
        throw Error("cannot write " + (dir / "ensemble.json").string());
    out << doc.dump(1) << '\n';
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "ensemble.json");
    if (!in)
        throw FormatError("cannot read " + (dir / "ensemble.json").string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed ensemble.json: ") + e.what());
    }
    if (doc.value("format_version", -1) != FittedModel::kFormatVersion)
        throw FormatError("ensemble format version is missing or unsupported");
    EnsembleModel e;
    try {
        e.metric_name_ = doc.at("metric").get<std::string>();
        e.intercept_ = doc.at("intercept").get<double>();
        e.warnings_ = doc.at("warnings").get<std::vector<std::string>>();
        const auto& members = doc.at("members");
        for (const auto& m : members) {
            std::ifstream mf(dir / m.at("file").get<std::string>());
            if (!mf)
                throw FormatError("missing member file " + m.at("file").get<std::string>());
            const auto oof = m.at("oof").get<std::vector<double>>();
            e.members_.push_back({FittedModel::from_json(nlohmann::json::parse(mf)),
                                  Eigen::Map<const Vector>(oof.data(), static_cast<Index>(oof.size())),
                                  m.at("cv_rmse").get<double>(), m.at("weight").get<double>()});
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("malformed ensemble: ") + ex.what());
    }
    if (e.members_.empty())
        throw FormatError("ensemble has no members");
    e.oof_design_.resize(e.members_.front().oof.size(), static_cast<Index>(e.members_.size()));
    for (std::size_t k = 0; k < e.members_.size(); ++k) {
        if (e.members_[k].oof.size() != e.oof_design_.rows())
            throw FormatError("member out-of-fold vectors differ in length");
        e.oof_design_.col(static_cast<Index>(k)) = e.members_[k].oof;
    }
    return e;
}

EnsembleModel blend(const std::vector<ModelSpec>& specs, const FeatureMatrix& x, const Vector& y,
                    const CvPlan& plan, std::string metric_name, const BlendOptions& options) {
    if (specs.empty())
        throw ArgumentError("ensemble needs at least one member");
    if (plan.rows() != static_cast<std::size_t>(x.rows()) || x.rows() != y.size())
        throw ArgumentError("cross-validation plan does not match the data");

    const auto labels = unique_labels(specs);
    EnsembleModel e;
    e.metric_name_ = std::move(metric_name);

    std::vector<ModelSpec> kept;
    std::vector<OutOfFold> oofs;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        ModelSpec spec = specs[k];
        spec.label = labels[k];
        try {
            oofs.push_back(out_of_fold(spec, x, y, plan));
            kept.push_back(spec);
        } catch (const Error& err) {
            if (!options.drop_failed_members)
                throw;
            e.warnings_.push_back("dropped member " + labels[k] + ": " + err.what());
        }
    }
    if (options.drop_failed_members && kept.size() < 2)
        throw Error("fewer than two ensemble members survived cross-validation");

    const auto m = static_cast<Index>(kept.size());
    Matrix design(y.size(), m);
    for (Index k = 0; k < m; ++k)
        design.col(k) = oofs[static_cast<std::size_t>(k)].predictions;
    const Vector means = design.colwise().mean().transpose();
    const Matrix centered = design.rowwise() - means.transpose();
    const double ybar = y.mean();
    Vector w = nnls(centered, (y.array() - ybar).matrix());
    double intercept = ybar - means.dot(w);
    if (!(w.array() > 0.0).any()) {
        Index best = 0;
        for (Index k = 1; k < m; ++k)
            if (oofs[static_cast<std::size_t>(k)].cv_rmse < oofs[static_cast<std::size_t>(best)].cv_rmse)
                best = k;
        w.setZero();
        w[best] = 1.0;
        intercept = 0.0;
        e.warnings_.push_back("all blend weights were zero; using " + kept[static_cast<std::size_t>(best)].label +
                              " alone");
    }

    std::vector<std::optional<FittedModel>> refits(kept.size());
    parallel_for(kept.size(), [&](std::size_t k) { refits[k] = fit(kept[k], x, y); });

    for (std::size_t k = 0; k < kept.size(); ++k)
        e.members_.push_back({std::move(*refits[k]), oofs[k].predictions, oofs[k].cv_rmse, w[static_cast<Index>(k)]});
    e.intercept_ = intercept;
    e.oof_design_ = std::move(design);
    return e;
}

namespace {

std::vector<double> shares(const ImportanceVector& imp) {
    const double total = std::accumulate(imp.scores.begin(), imp.scores.end(), 0.0);
    std::vector<double> out(imp.scores.size(), 0.0);
    if (total > 0.0)
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = imp.scores[j] / total;
    return out;
}

} // namespace

RankingTable ensemble_importance(const EnsembleModel& ensemble, bool weighted) {
    const auto& members = ensemble.members();
    const auto& names = members.front().model.predictors();
    std::vector<double> total(names.size(), 0.0);
    for (const auto& m : members) {
        if (!m.active())
            continue;
        const auto s = shares(m.model.importance());
        const double factor = weighted ? m.weight : 1.0;
        for (std::size_t j = 0; j < total.size(); ++j)
            total[j] += factor * s[j];
    }
    return make_ranking(names, total, "ensemble", ensemble.metric_name());
}

std::vector<RankingTable> member_rankings(const EnsembleModel& ensemble) {
    std::vector<RankingTable> out;
    for (const auto& m : ensemble.members()) {
        const auto& imp = m.model.importance();
        auto table = make_ranking(imp.predictors, imp.scores, m.model.label(), ensemble.metric_name());
        table.active = m.active();
        out.push_back(std::move(table));
    }
    return out;
}

CorrelationMatrix model_correlation(const EnsembleModel& ensemble, const FeatureMatrix& x) {
    const auto& members = ensemble.members();
    Matrix preds(x.rows(), static_cast<Index>(members.size()));
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < members.size(); ++k) {
        preds.col(static_cast<Index>(k)) = members[k].model.predict(x);
        labels.push_back(members[k].model.label());
    }
    return correlate(preds, std::move(labels));
}

} // namespace counterlens
