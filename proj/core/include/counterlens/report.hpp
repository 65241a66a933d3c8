#pragma once

#include "counterlens/dataset.hpp"
#include "counterlens/ensemble.hpp"
#include "counterlens/featsel.hpp"
#include "counterlens/mvtb.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace counterlens {

enum class ReportKind { rmse_table, ranking_table, topk_comparison, correlation_matrix, selection_summary, mvtb_summary };

std::string_view to_string(ReportKind kind);

/// Reproducibility metadata embedded in every report.
struct RunMetadata {
    std::uint64_t seed = 3456;
    std::string config_hash;
    nlohmann::json plan = nlohmann::json::object();
    nlohmann::json decisions = nlohmann::json::object();
    std::string tool_version = COUNTERLENS_VERSION;

    nlohmann::json to_json() const;
};

/// The modeling choices every report records alongside its payload.
nlohmann::json default_decisions();

struct Report {
    ReportKind kind = ReportKind::rmse_table;
    std::string name;  // file stem, e.g. "rmse_table-runtime"
    nlohmann::json payload;
    nlohmann::json metadata;
    std::string csv;

    std::string json_text() const;
};

/// Six significant digits, as every CSV cell.
std::string format_number(double value);

struct RmseRow {
    std::string label;
    double cv_rmse = 0.0;
    double test_rmse = 0.0;
    bool ensemble = false;
};

/// Sorted ascending by test RMSE, ties by label.
Report rmse_table(std::vector<RmseRow> rows, const RunMetadata& meta, std::string name = "rmse_table");

Report ranking_report(const std::vector<RankingTable>& tables, const RunMetadata& meta, std::string name);

/// Rank positions 1..k per method; counters outside a method's top-k stay
/// blank. k is clamped to the number of counters.
Report topk_comparison(const std::vector<RankingTable>& tables, std::size_t k, const RunMetadata& meta,
                       std::string name = "topk_comparison");

Report correlation_report(const CorrelationMatrix& matrix, const RunMetadata& meta, std::string name);

struct SelectorAgreement {
    SelectionResult result;
    std::size_t overlap = 0;      // with the reference top-k
    std::size_t reference_k = 0;
};

Report selection_summary(const std::vector<SelectorAgreement>& rows, const std::vector<std::string>& reference,
                         const RunMetadata& meta, std::string name = "selection_summary");
Report selection_trace(const SelectionResult& result, const RunMetadata& meta, std::string name);

Report mvtb_summary(const MvtbModel& model, const RunMetadata& meta, std::string name = "mvtb_summary");
Report mvtb_selection_log(const MvtbModel& model, const RunMetadata& meta, std::string name);

struct ExtraArtifact {
    std::filesystem::path relative_path;
    std::string contents;
};

/// Writes <dir>/<name>.csv and <name>.json for every report, any extra
/// artifacts, and manifest.json listing all files with SHA-256 digests.
void write_reports(const std::filesystem::path& dir, const std::vector<Report>& reports,
                   const RunMetadata& meta, const std::vector<ExtraArtifact>& extras = {});

/// Manifest for a run that failed: status "incomplete" plus the error.
void write_incomplete_manifest(const std::filesystem::path& dir, const RunMetadata& meta, const std::string& error);

std::string sha256_hex(std::string_view data);

} // namespace counterlens
