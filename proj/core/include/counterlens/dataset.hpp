#pragma once

#include "counterlens/common.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace counterlens {

/// The 26 raw counters in canonical order. TOT_CYC is the normalizer.
inline constexpr std::array<std::string_view, 26> kCounterNames = {
    "TOT_CYC", "TOT_INS", "BR_CN",   "BR_NTK",  "L1_TCM",  "L1_LDM",  "L1_DCM",
    "L1_ICA",  "L1_ICH",  "L1_ICM",  "L2_TCM",  "L2_TCA",  "L2_TCH",  "L2_LDM",
    "TLB_DM",  "BR_MSP",  "RES_STL", "SR_INS",  "LD_INS",  "BR_TKN",  "BR_INS",
    "L1_DCA",  "LST_INS", "REF_CYC", "STL_ICY", "BR_UCN"};

/// Target roles, in order: runtime (s), node, CPU and memory power (W).
inline constexpr std::array<std::string_view, 4> kMetricNames = {
    "runtime", "node_power", "cpu_power", "mem_power"};

inline constexpr std::string_view kNormalizer = "TOT_CYC";

struct CounterSchema {
    std::vector<std::string> counter_names;
    std::vector<std::string> metric_names;
    /// Metadata columns that must be present. Columns not named anywhere in the
    /// schema are passed through as metadata too.
    std::vector<std::string> metadata_names;

    static CounterSchema standard();
    /// Accepts {"counters": [...], "metrics": [...], "metadata": [...]}.
    /// Counters may be listed in any order; they are canonicalized.
    static CounterSchema from_json(const nlohmann::json& doc);
    static CounterSchema load(const std::filesystem::path& path);

    void validate() const;
    /// The 25 counter names other than TOT_CYC, canonical order.
    std::vector<std::string> predictor_names() const;
};

/// Immutable table of run configurations.
class Dataset {
public:
    /// Builds a dataset from already-parsed columns. raw is n x 26 in schema
    /// counter order, metrics n x 4. Validates every invariant and reports
    /// the 1-based row of the first violation.
    static Dataset from_columns(CounterSchema schema,
                                std::vector<std::string> metadata_columns,
                                std::vector<std::vector<std::string>> metadata,
                                Matrix raw, Matrix metrics);

    const CounterSchema& schema() const { return schema_; }
    std::size_t rows() const { return static_cast<std::size_t>(raw_.rows()); }

    const std::vector<std::string>& metadata_columns() const { return metadata_columns_; }
    /// metadata()[row][column]
    const std::vector<std::vector<std::string>>& metadata() const { return metadata_; }

    const Matrix& raw() const { return raw_; }
    const Matrix& metrics() const { return metrics_; }
    /// n x 25 counter rates, columns in predictor_names() order.
    const Matrix& normalized() const { return normalized_; }

    Vector metric(std::string_view name) const;
    Index metric_index(std::string_view name) const;

    /// Predictors used for modeling: all rates minus zero-variance columns.
    FeatureMatrix predictors() const;
    const std::vector<std::string>& excluded_predictors() const { return excluded_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    CounterSchema schema_;
    std::vector<std::string> metadata_columns_;
    std::vector<std::vector<std::string>> metadata_;
    Matrix raw_;
    Matrix metrics_;
    Matrix normalized_;
    std::vector<std::string> excluded_;
    std::vector<std::string> warnings_;
};

Dataset ingest(const std::filesystem::path& path,
               const CounterSchema& schema = CounterSchema::standard());
Dataset ingest(std::istream& in, const CounterSchema& schema = CounterSchema::standard());

/// Writes the ingest CSV layout: metadata columns, the 26 counters, then the 4
/// metrics. Numbers use 17 significant digits so ingest(emit(d)) is exact.
void emit_csv(const Dataset& dataset, std::ostream& out);
void emit_csv(const Dataset& dataset, const std::filesystem::path& path);

struct Split {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
    double fraction = 0.8;
};

/// Seeded shuffle of row indices; the first floor(fraction * n) are train.
Split split(std::size_t n, std::uint64_t seed, double fraction);
Split split(const Dataset& dataset, std::uint64_t seed, double fraction);

struct CorrelationMatrix {
    std::vector<std::string> labels;
    Matrix values;
};

/// Pearson correlations among the columns of `columns`.
CorrelationMatrix correlate(const Matrix& columns, std::vector<std::string> labels);

} // namespace counterlens
