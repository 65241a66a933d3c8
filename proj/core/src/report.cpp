#include "counterlens/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace counterlens {

std::string_view to_string(ReportKind kind) {
    switch (kind) {
    case ReportKind::rmse_table: return "rmse_table";
    case ReportKind::ranking_table: return "ranking_table";
    case ReportKind::topk_comparison: return "topk_comparison";
    case ReportKind::correlation_matrix: return "correlation_matrix";
    case ReportKind::selection_summary: return "selection_summary";
    case ReportKind::mvtb_summary: return "mvtb_summary";
    }
    return "unknown";
}

nlohmann::json RunMetadata::to_json() const {
    return {{"seed", seed}, {"config_hash", config_hash}, {"plan", plan}, {"decisions", decisions},
            {"tool_version", tool_version}};
}

nlohmann::json default_decisions() {
    return {{"rates", "raw counter / TOT_CYC"},
            {"predictor_scaling", "standardized with training mean and population sd"},
            {"importance_scale", "max 100 per model; percentages sum to 100 per table"},
            {"filter_fallback", "univariate quadratic R^2 for knn and kernel_rbf"},
            {"blend", "nonnegative least squares on out-of-fold predictions with free intercept"},
            {"ensemble_importance", "blend-weighted sum of member importance shares"},
            {"mvtb_selection", "largest standardized residual SSE reduction"},
            {"stepwise_criterion", "AIC = n ln(SSE/n) + 2k"},
            {"r_squared", "squared Pearson correlation"}};
}

std::string Report::json_text() const {
    const nlohmann::json doc = {{"kind", to_string(kind)}, {"name", name}, {"metadata", metadata}, {"payload", payload}};
    return doc.dump(2) + "\n";
}

std::string format_number(double value) {
    if (std::isnan(value))
        return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return buf;
}

namespace {

std::string csv_cell(const std::string& text) {
    if (text.find_first_of(",\"\n\r") == std::string::npos)
        return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json table_json(const RankingTable& t) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t r = 0; r < t.entries.size(); ++r)
        entries.push_back({{"rank", r + 1}, {"counter", t.entries[r].counter}, {"percentage", t.entries[r].percentage}});
    return {{"method", t.method}, {"objective", t.objective}, {"active", t.active}, {"entries", entries}};
}

Report make(ReportKind kind, std::string name, const RunMetadata& meta) {
    Report r;
    r.kind = kind;
    r.name = std::move(name);
    r.metadata = meta.to_json();
    return r;
}

} // namespace

Report rmse_table(std::vector<RmseRow> rows, const RunMetadata& meta, std::string name) {
    if (rows.empty())
        throw ArgumentError("rmse table needs at least one row");
    std::stable_sort(rows.begin(), rows.end(), [](const RmseRow& a, const RmseRow& b) {
        if (a.test_rmse != b.test_rmse)
            return a.test_rmse < b.test_rmse;
        return a.label < b.label;
    });
    Report r = make(ReportKind::rmse_table, std::move(name), meta);
    std::ostringstream csv;
    csv << "label,cv_rmse,test_rmse,ensemble\n";
    r.payload["rows"] = nlohmann::json::array();
    for (const auto& row : rows) {
        csv << csv_cell(row.label) << ',' << format_number(row.cv_rmse) << ',' << format_number(row.test_rmse) << ','
            << (row.ensemble ? 1 : 0) << '\n';
        r.payload["rows"].push_back({{"label", row.label},
                                     {"cv_rmse", number_or_null(row.cv_rmse)},
                                     {"test_rmse", number_or_null(row.test_rmse)},
                                     {"ensemble", row.ensemble}});
    }
    r.csv = csv.str();
    return r;
}

Report ranking_report(const std::vector<RankingTable>& tables, const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::ranking_table, std::move(name), meta);
    std::ostringstream csv;
    csv << "method,objective,rank,counter,percentage,active\n";
    r.payload["tables"] = nlohmann::json::array();
    for (const auto& t : tables) {
        for (std::size_t k = 0; k < t.entries.size(); ++k)
            csv << csv_cell(t.method) << ',' << csv_cell(t.objective) << ',' << k + 1 << ','
                << csv_cell(t.entries[k].counter) << ',' << format_number(t.entries[k].percentage) << ','
                << (t.active ? 1 : 0) << '\n';
        r.payload["tables"].push_back(table_json(t));
    }
    r.csv = csv.str();
    return r;
}

Report topk_comparison(const std::vector<RankingTable>& tables, std::size_t k, const RunMetadata& meta,
                       std::string name) {
    if (k < 1)
        throw ArgumentError("top-k comparison needs k >= 1");
    if (tables.empty())
        throw ArgumentError("top-k comparison needs at least one ranking");
    std::size_t universe = 0;
    for (const auto& t : tables)
        universe = std::max(universe, t.entries.size());
    k = std::min(k, universe);

    // Counters that reach some top-k, ordered by their best rank, then name.
    std::map<std::string, std::size_t> best_rank;
    for (const auto& t : tables)
        for (std::size_t r = 0; r < std::min(k, t.entries.size()); ++r) {
            auto [it, inserted] = best_rank.emplace(t.entries[r].counter, r + 1);
            if (!inserted)
                it->second = std::min(it->second, r + 1);
        }
    std::vector<std::pair<std::size_t, std::string>> order;
    for (const auto& [counter, rank] : best_rank)
        order.emplace_back(rank, counter);
    std::sort(order.begin(), order.end());

    Report r = make(ReportKind::topk_comparison, std::move(name), meta);
    std::ostringstream csv;
    csv << "counter";
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& t : tables) {
        csv << ',' << csv_cell(t.method);
        methods.push_back(t.method);
    }
    csv << '\n';
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [rank, counter] : order) {
        csv << csv_cell(counter);
        nlohmann::json ranks = nlohmann::json::array();
        for (const auto& t : tables) {
            csv << ',';
            std::size_t pos = 0;
            for (std::size_t q = 0; q < std::min(k, t.entries.size()); ++q)
                if (t.entries[q].counter == counter)
                    pos = q + 1;
            if (pos > 0) {
                csv << pos;
                ranks.push_back(pos);
            } else {
                ranks.push_back(nullptr);
            }
        }
        csv << '\n';
        rows.push_back({{"counter", counter}, {"ranks", ranks}});
    }
    r.payload = {{"k", k}, {"methods", methods}, {"rows", rows}};
    r.csv = csv.str();
    return r;
}

Report correlation_report(const CorrelationMatrix& matrix, const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::correlation_matrix, std::move(name), meta);
    std::ostringstream csv;
    csv << "label";
    for (const auto& l : matrix.labels)
        csv << ',' << csv_cell(l);
    csv << '\n';
    nlohmann::json values = nlohmann::json::array();
    for (Index i = 0; i < matrix.values.rows(); ++i) {
        csv << csv_cell(matrix.labels[static_cast<std::size_t>(i)]);
        std::vector<double> row;
        for (Index j = 0; j < matrix.values.cols(); ++j) {
            csv << ',' << format_number(matrix.values(i, j));
            row.push_back(matrix.values(i, j));
        }
        csv << '\n';
        values.push_back(row);
    }
    r.payload = {{"labels", matrix.labels}, {"values", values}};
    r.csv = csv.str();
    return r;
}

Report selection_summary(const std::vector<SelectorAgreement>& rows, const std::vector<std::string>& reference,
                         const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::selection_summary, std::move(name), meta);
    std::ostringstream csv;
    csv << "method,estimator,criterion,size,best_score,overlap,reference_k,selected\n";
    nlohmann::json results = nlohmann::json::array();
    for (const auto& row : rows) {
        const auto& s = row.result;
        std::string joined;
        for (const auto& c : s.selected)
            joined += (joined.empty() ? "" : ";") + c;
        csv << csv_cell(s.method) << ',' << csv_cell(s.estimator) << ',' << s.criterion << ',' << s.selected.size()
            << ',' << format_number(s.best_score) << ',' << row.overlap << ',' << row.reference_k << ','
            << csv_cell(joined) << '\n';
        auto doc = s.to_json();
        doc["overlap"] = row.overlap;
        doc["reference_k"] = row.reference_k;
        results.push_back(std::move(doc));
    }
    r.payload = {{"reference", reference}, {"results", results}};
    r.csv = csv.str();
    return r;
}

Report selection_trace(const SelectionResult& result, const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::selection_summary, std::move(name), meta);
    r.payload = result.to_json();
    r.csv = result.trace_csv();
    return r;
}

Report mvtb_summary(const MvtbModel& model, const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::mvtb_summary, std::move(name), meta);
    nlohmann::json influence = nlohmann::json::object();
    for (std::size_t k = 0; k < model.outcomes().size(); ++k) {
        nlohmann::json col = nlohmann::json::object();
        for (std::size_t j = 0; j < model.predictors().size(); ++j)
            col[model.predictors()[j]] = model.influence()(static_cast<Index>(j), static_cast<Index>(k));
        influence[model.outcomes()[k]] = std::move(col);
    }
    nlohmann::json final_sse = nlohmann::json::object();
    for (std::size_t k = 0; k < model.outcomes().size(); ++k)
        final_sse[model.outcomes()[k]] = model.sse_trace()[k].back();
    const auto ranking = mvtb_ranking(model);
    r.payload = {{"outcomes", model.outcomes()},
                 {"trees_per_outcome", model.trees_per_outcome()},
                 {"final_standardized_sse", final_sse},
                 {"influence", influence},
                 {"ranking", table_json(ranking)},
                 {"options",
                  {{"n_trees", model.options().n_trees},
                   {"shrinkage", model.options().shrinkage},
                   {"depth", model.options().depth},
                   {"subsample", model.options().subsample},
                   {"min_leaf", model.options().min_leaf}}}};
    r.csv = model.influence_csv();
    return r;
}

Report mvtb_selection_log(const MvtbModel& model, const RunMetadata& meta, std::string name) {
    Report r = make(ReportKind::mvtb_summary, std::move(name), meta);
    nlohmann::json log = nlohmann::json::array();
    for (int k : model.selection_log())
        log.push_back(model.outcomes()[static_cast<std::size_t>(k)]);
    r.payload = {{"selection_log", log}, {"sse_trace", model.sse_trace()}};
    r.csv = model.selection_log_csv();
    return r;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << contents;
    if (!out)
        throw Error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json file_entries(const std::filesystem::path& dir) {
    std::vector<std::string> files;
    if (std::filesystem::exists(dir))
        for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
            if (e.is_regular_file()) {
                auto rel = std::filesystem::relative(e.path(), dir).generic_string();
                if (rel != "manifest.json")
                    files.push_back(std::move(rel));
            }
    std::sort(files.begin(), files.end());
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : files) {
        const auto contents = read_file(dir / f);
        out.push_back({{"path", f}, {"bytes", contents.size()}, {"sha256", sha256_hex(contents)}});
    }
    return out;
}

} // namespace

void write_reports(const std::filesystem::path& dir, const std::vector<Report>& reports, const RunMetadata& meta,
                   const std::vector<ExtraArtifact>& extras) {
    std::filesystem::create_directories(dir);
    nlohmann::json kinds = nlohmann::json::object();
    for (const auto& r : reports) {
        write_file(dir / (r.name + ".csv"), r.csv);
        write_file(dir / (r.name + ".json"), r.json_text());
        kinds[r.name] = to_string(r.kind);
    }
    for (const auto& e : extras)
        write_file(dir / e.relative_path, e.contents);
    const nlohmann::json manifest = {
        {"status", "complete"}, {"metadata", meta.to_json()}, {"reports", kinds}, {"files", file_entries(dir)}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_incomplete_manifest(const std::filesystem::path& dir, const RunMetadata& meta, const std::string& error) {
    std::filesystem::create_directories(dir);
    const nlohmann::json manifest = {
        {"status", "incomplete"}, {"error", error}, {"metadata", meta.to_json()}, {"files", file_entries(dir)}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace counterlens
