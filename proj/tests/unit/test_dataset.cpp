#include "counterlens/dataset.hpp"
#include "counterlens/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

using namespace counterlens;

namespace {

std::string header_line(const std::string& meta = "config_id") {
    std::string h = meta;
    for (auto c : kCounterNames)
        h += "," + std::string(c);
    for (auto m : kMetricNames)
        h += "," + std::string(m);
    return h + "\n";
}

// Row i: TOT_CYC = 1000, counter c = (c + 1) * (i + 1), metrics 10 + i.
std::string data_line(int i, const std::string& id) {
    std::string line = id + ",1000";
    for (int c = 1; c < 26; ++c)
        line += "," + std::to_string((c + 1) * (i + 1) + (c == 3 ? i * i : 0));
    for (int m = 0; m < 4; ++m)
        line += "," + std::to_string(10 + i + m);
    return line + "\n";
}

std::string small_csv(int rows) {
    std::string s = header_line();
    for (int i = 0; i < rows; ++i)
        s += data_line(i, "cfg" + std::to_string(i));
    return s;
}

Dataset ingest_text(const std::string& text) {
    std::istringstream in(text);
    return ingest(in);
}

template <typename E>
std::size_t failing_row(const std::string& text) {
    try {
        ingest_text(text);
    } catch (const E& e) {
        return e.row();
    }
    ADD_FAILURE() << "expected a row error";
    return 0;
}

std::string replace_cell(std::string text, int row, int col, const std::string& value) {
    std::istringstream in(text);
    std::string line, out;
    int r = 0;
    while (std::getline(in, line)) {
        if (r == row) {
            std::vector<std::string> cells;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ','))
                cells.push_back(cell);
            cells[static_cast<std::size_t>(col)] = value;
            line.clear();
            for (std::size_t k = 0; k < cells.size(); ++k)
                line += (k ? "," : "") + cells[k];
        }
        out += line + "\n";
        ++r;
    }
    return out;
}

double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    return es.eigenvalues().minCoeff();
}

} // namespace

TEST(Dataset, NormalizesByTotalCycles) {
    const Dataset d = ingest_text(small_csv(6));
    ASSERT_EQ(d.rows(), 6u);
    EXPECT_EQ(d.metadata_columns(), std::vector<std::string>{"config_id"});
    EXPECT_EQ(d.metadata()[2][0], "cfg2");
    for (Index i = 0; i < 6; ++i)
        for (Index c = 1; c < 26; ++c)
            EXPECT_DOUBLE_EQ(d.normalized()(i, c - 1), d.raw()(i, c) / 1000.0);
    EXPECT_DOUBLE_EQ(d.metric("node_power")[3], 14.0);
    EXPECT_EQ(d.predictors().cols(), 25);
}

TEST(Dataset, ColumnOrderAndBomDoNotMatter) {
    const Dataset a = ingest_text(small_csv(5));
    // Move the metadata column to the end and prefix a byte-order mark.
    std::istringstream in(small_csv(5));
    std::string line, moved = "\xEF\xBB\xBF";
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        moved += line.substr(comma + 1) + "," + line.substr(0, comma) + "\n";
    }
    const Dataset b = ingest_text(moved);
    EXPECT_EQ(a.raw(), b.raw());
    EXPECT_EQ(a.metrics(), b.metrics());
    EXPECT_EQ(b.metadata_columns(), std::vector<std::string>{"config_id"});
}

TEST(Dataset, QuotedMetadataAndBlankLines) {
    std::string text = header_line();
    text += "\"a,b\"" + data_line(0, "").substr(0) + "\n";
    text += data_line(1, "\"x \"\"y\"\"\"");
    const Dataset d = ingest_text(text);
    ASSERT_EQ(d.rows(), 2u);
    EXPECT_EQ(d.metadata()[0][0], "a,b");
    EXPECT_EQ(d.metadata()[1][0], "x \"y\"");
}

TEST(Dataset, MissingColumnIsSchemaError) {
    std::string text = small_csv(4);
    const auto pos = text.find(",BR_CN");
    text.replace(pos, 6, ",BR_XX");
    EXPECT_THROW(ingest_text(text), SchemaError);
    EXPECT_THROW(ingest_text(""), SchemaError);
}

TEST(Dataset, DuplicateColumnIsSchemaError) {
    std::string text = small_csv(3);
    text.replace(0, 9, "TOT_INS");
    EXPECT_THROW(ingest_text(text), SchemaError);
}

TEST(Dataset, RowErrorsReportOneBasedRow) {
    const std::string base = small_csv(6);
    // column 1 is TOT_CYC, column 3 is BR_CN, column 27 is runtime
    EXPECT_EQ(failing_row<ParseError>(replace_cell(base, 3, 3, "abc")), 3u);
    EXPECT_EQ(failing_row<ParseError>(replace_cell(base, 2, 3, "")), 2u);
    EXPECT_EQ(failing_row<ParseError>(replace_cell(base, 5, 3, "-1")), 5u);
    EXPECT_EQ(failing_row<ParseError>(replace_cell(base, 4, 27, "0")), 4u);
    EXPECT_EQ(failing_row<ParseError>(replace_cell(base, 1, 3, "nan")), 1u);
    EXPECT_EQ(failing_row<NormalizationError>(replace_cell(base, 6, 1, "0")), 6u);
}

TEST(Dataset, ZeroVarianceCounterExcludedWithWarning) {
    std::string text = header_line();
    for (int i = 0; i < 5; ++i) {
        std::string line = data_line(i, "c" + std::to_string(i));
        text += line;
    }
    // BR_NTK (column 4) becomes constant in rate terms
    for (int i = 1; i <= 5; ++i)
        text = replace_cell(text, i, 4, "7");
    const Dataset d = ingest_text(text);
    ASSERT_EQ(d.excluded_predictors(), std::vector<std::string>{"BR_NTK"});
    ASSERT_EQ(d.warnings().size(), 1u);
    const auto x = d.predictors();
    EXPECT_EQ(x.cols(), 24);
    EXPECT_EQ(x.column_index("BR_NTK"), -1);
}

TEST(Dataset, EmitIngestRoundTripIsExact) {
    const auto synth = fixtures::planted_data(11, Construction::hinge, 60);
    std::ostringstream out;
    emit_csv(synth.dataset, out);
    const Dataset back = ingest_text(out.str());
    EXPECT_EQ(back.raw(), synth.dataset.raw());
    EXPECT_EQ(back.metrics(), synth.dataset.metrics());
    EXPECT_EQ(back.normalized(), synth.dataset.normalized());
    EXPECT_EQ(back.metadata(), synth.dataset.metadata());
    std::ostringstream again;
    emit_csv(back, again);
    EXPECT_EQ(again.str(), out.str());
}

TEST(Dataset, SchemaFromJson) {
    nlohmann::json doc;
    std::vector<std::string> counters(kCounterNames.begin(), kCounterNames.end());
    std::reverse(counters.begin(), counters.end());
    doc["counters"] = counters;
    doc["metrics"] = {"t", "p", "c", "m"};
    doc["metadata"] = {"config_id"};
    const auto s = CounterSchema::from_json(doc);
    EXPECT_EQ(s.counter_names.front(), "TOT_CYC");
    EXPECT_EQ(s.metric_names[0], "t");
    doc["counters"].push_back("BOGUS");
    EXPECT_THROW(CounterSchema::from_json(doc), SchemaError);
    EXPECT_THROW(CounterSchema::from_json(nlohmann::json::array()), SchemaError);
}

TEST(Split, PartitionsRowsForManySeeds) {
    for (std::size_t n : {5u, 7u, 10u, 101u, 500u}) {
        for (double f : {0.2, 0.5, 0.8}) {
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                if (static_cast<std::size_t>(f * static_cast<double>(n)) == 0)
                    continue;
                const auto s = split(n, seed, f);
                std::vector<std::size_t> all = s.train_indices;
                all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
                std::sort(all.begin(), all.end());
                std::vector<std::size_t> want(n);
                std::iota(want.begin(), want.end(), 0);
                EXPECT_EQ(all, want);
                EXPECT_EQ(s.train_indices.size(), static_cast<std::size_t>(std::floor(f * static_cast<double>(n))));
            }
        }
    }
}

TEST(Split, DeterministicAndSeedSensitive) {
    EXPECT_EQ(split(100, 4, 0.8).train_indices, split(100, 4, 0.8).train_indices);
    EXPECT_NE(split(100, 4, 0.8).train_indices, split(100, 5, 0.8).train_indices);
}

TEST(Split, RejectsBadArguments) {
    EXPECT_THROW(split(4, 1, 0.8), SizeError);
    EXPECT_THROW(split(100, 1, 1.0), ArgumentError);
    EXPECT_THROW(split(100, 1, 0.0), ArgumentError);
    EXPECT_THROW(split(5, 1, 0.1), SizeError);
}

TEST(Correlate, MatchesPairwisePearson) {
    const auto synth = fixtures::planted_data(3);
    const Matrix& m = synth.dataset.metrics();
    const auto c = correlate(m, {"a", "b", "c", "d"});
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j)
            EXPECT_NEAR(c.values(i, j), i == j ? 1.0 : pearson(m.col(i), m.col(j)), 1e-12);
}

TEST(Correlate, StructuralProperties) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto synth = fixtures::planted_data(seed, Construction::tree, 80);
        const auto x = synth.dataset.predictors();
        const auto c = correlate(x.values, x.names);
        EXPECT_EQ(c.values, c.values.transpose());
        EXPECT_TRUE((c.values.diagonal().array() == 1.0).all());
        EXPECT_LE(c.values.cwiseAbs().maxCoeff(), 1.0);
        EXPECT_GE(min_eigenvalue(c.values), -1e-8);
    }
}

TEST(Correlate, ConstantColumnIsDegenerate) {
    Matrix m(5, 2);
    m << 1, 3, 2, 3, 3, 3, 4, 3, 5, 3;
    EXPECT_THROW(correlate(m, {"a", "b"}), DegenerateError);
    EXPECT_THROW(correlate(m.leftCols(1), {"a"}), ArgumentError);
}

TEST(FeatureMatrix, AlignedToReportsMissing) {
    auto x = fixtures::gaussian_features(4, 3, 1);
    const std::vector<std::string> reordered = {"x2", "x0", "x1"};
    const auto y = x.aligned_to(reordered);
    EXPECT_EQ(y.values.col(0), x.values.col(2));
    const std::vector<std::string> other = {"x0", "x1", "x9"};
    EXPECT_THROW(x.aligned_to(other), SchemaError);
}
