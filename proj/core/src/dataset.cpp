#include "counterlens/dataset.hpp"

#include "counterlens/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace counterlens {

namespace {

// RFC 4180 style record reader: quoted fields may contain commas, doubled
// quotes and newlines. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n')
                    ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (!any)
        return false;
    fields.push_back(std::move(field));
    return true;
}

bool blank_record(const std::vector<std::string>& fields) {
    return fields.size() == 1 && fields[0].find_first_not_of(" \t") == std::string::npos;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

bool parse_double(std::string_view text, double& out) {
    std::string t = trim(text);
    if (t.empty())
        return false;
    const char* begin = t.data();
    const char* end = begin + t.size();
    if (*begin == '+')
        ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, out, std::chars_format::general);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out += c;
    }
    return out + "\"";
}

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

CounterSchema CounterSchema::standard() {
    CounterSchema schema;
    schema.counter_names.assign(kCounterNames.begin(), kCounterNames.end());
    schema.metric_names.assign(kMetricNames.begin(), kMetricNames.end());
    return schema;
}

CounterSchema CounterSchema::from_json(const nlohmann::json& doc) {
    if (!doc.is_object())
        throw SchemaError("schema must be a JSON object");
    auto strings = [&](const char* key, bool required) {
        std::vector<std::string> out;
        if (!doc.contains(key)) {
            if (required)
                throw SchemaError(std::string("schema is missing the \"") + key + "\" array");
            return out;
        }
        if (!doc.at(key).is_array())
            throw SchemaError(std::string("schema field \"") + key + "\" must be an array");
        for (const auto& v : doc.at(key)) {
            if (!v.is_string())
                throw SchemaError(std::string("schema field \"") + key + "\" must contain strings");
            out.push_back(v.get<std::string>());
        }
        return out;
    };

    CounterSchema schema;
    auto counters = strings("counters", true);
    std::set<std::string> given(counters.begin(), counters.end());
    if (given.size() != counters.size())
        throw SchemaError("schema lists a counter more than once");
    for (auto name : kCounterNames) {
        if (!given.count(std::string(name)))
            throw SchemaError("schema is missing counter " + std::string(name));
        schema.counter_names.emplace_back(name);
    }
    if (counters.size() != kCounterNames.size()) {
        for (const auto& c : counters)
            if (std::find(kCounterNames.begin(), kCounterNames.end(), c) == kCounterNames.end())
                throw SchemaError("schema lists unknown counter " + c);
    }
    schema.metric_names = strings("metrics", true);
    schema.metadata_names = strings("metadata", false);
    schema.validate();
    return schema;
}

CounterSchema CounterSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open schema file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("schema file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc);
}

void CounterSchema::validate() const {
    if (counter_names.size() != kCounterNames.size() ||
        !std::equal(counter_names.begin(), counter_names.end(), kCounterNames.begin()))
        throw SchemaError("schema counters must be the 26 canonical counters with TOT_CYC first");
    if (metric_names.size() != 4)
        throw SchemaError("schema must name exactly 4 metrics");
    std::set<std::string> seen(counter_names.begin(), counter_names.end());
    for (const auto& m : metric_names) {
        if (m.empty())
            throw SchemaError("metric names must be nonempty");
        if (!seen.insert(m).second)
            throw SchemaError("metric name " + m + " collides with another column");
    }
    for (const auto& m : metadata_names)
        if (!seen.insert(m).second)
            throw SchemaError("metadata name " + m + " collides with another column");
}

std::vector<std::string> CounterSchema::predictor_names() const {
    std::vector<std::string> out;
    for (const auto& c : counter_names)
        if (c != kNormalizer)
            out.push_back(c);
    return out;
}

Dataset Dataset::from_columns(CounterSchema schema, std::vector<std::string> metadata_columns,
                              std::vector<std::vector<std::string>> metadata, Matrix raw, Matrix metrics) {
    schema.validate();
    const Index n = raw.rows();
    if (raw.cols() != 26 || metrics.cols() != 4 || metrics.rows() != n)
        throw SizeError("dataset needs n x 26 counters and n x 4 metrics");
    if (metadata.size() != static_cast<std::size_t>(n))
        throw SizeError("metadata row count differs from counter rows");

    for (Index i = 0; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i + 1);
        if (metadata[static_cast<std::size_t>(i)].size() != metadata_columns.size())
            throw ParseError("row " + std::to_string(row) + ": metadata width mismatch", row);
        for (Index c = 0; c < 26; ++c) {
            double v = raw(i, c);
            if (!std::isfinite(v) || v < 0.0)
                throw ParseError("row " + std::to_string(row) + ": counter " + schema.counter_names[static_cast<std::size_t>(c)] +
                                     " must be a finite nonnegative number",
                                 row);
        }
        for (Index m = 0; m < 4; ++m) {
            double v = metrics(i, m);
            if (!std::isfinite(v) || v <= 0.0)
                throw ParseError("row " + std::to_string(row) + ": metric " + schema.metric_names[static_cast<std::size_t>(m)] +
                                     " must be a finite positive number",
                                 row);
        }
        if (raw(i, 0) <= 0.0)
            throw NormalizationError("row " + std::to_string(row) + ": TOT_CYC is zero; cannot normalize counters", row);
    }

    Dataset d;
    d.schema_ = std::move(schema);
    d.metadata_columns_ = std::move(metadata_columns);
    d.metadata_ = std::move(metadata);
    d.raw_ = std::move(raw);
    d.metrics_ = std::move(metrics);
    d.normalized_.resize(n, 25);
    for (Index i = 0; i < n; ++i)
        for (Index c = 1; c < 26; ++c)
            d.normalized_(i, c - 1) = d.raw_(i, c) / d.raw_(i, 0);

    const auto names = d.schema_.predictor_names();
    for (Index c = 0; c < 25; ++c) {
        if (n == 0)
            break;
        auto col = d.normalized_.col(c);
        if (col.maxCoeff() == col.minCoeff()) {
            d.excluded_.push_back(names[static_cast<std::size_t>(c)]);
            d.warnings_.push_back("counter " + names[static_cast<std::size_t>(c)] +
                                  " has zero variance after normalization; excluded from modeling");
        }
    }
    return d;
}

Index Dataset::metric_index(std::string_view name) const {
    for (std::size_t m = 0; m < schema_.metric_names.size(); ++m)
        if (schema_.metric_names[m] == name || kMetricNames[m] == name)
            return static_cast<Index>(m);
    throw ArgumentError("unknown metric " + std::string(name));
}

Vector Dataset::metric(std::string_view name) const { return metrics_.col(metric_index(name)); }

FeatureMatrix Dataset::predictors() const {
    FeatureMatrix fm;
    const auto names = schema_.predictor_names();
    std::vector<Index> keep;
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (std::find(excluded_.begin(), excluded_.end(), names[c]) != excluded_.end())
            continue;
        keep.push_back(static_cast<Index>(c));
        fm.names.push_back(names[c]);
    }
    fm.values.resize(normalized_.rows(), static_cast<Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
        fm.values.col(static_cast<Index>(j)) = normalized_.col(keep[j]);
    return fm;
}

Dataset ingest(std::istream& in, const CounterSchema& schema) {
    schema.validate();
    std::size_t line = 1;
    std::vector<std::string> header;
    if (!read_record(in, header, line) || blank_record(header))
        throw SchemaError("input has no header row");
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0)
        header[0].erase(0, 3);
    for (auto& h : header)
        h = trim(h);

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (!position.emplace(header[i], i).second)
            throw SchemaError("duplicate column " + header[i]);

    auto locate = [&](const std::string& name) {
        auto it = position.find(name);
        if (it == position.end())
            throw SchemaError("missing column " + name);
        return it->second;
    };
    std::vector<std::size_t> counter_pos, metric_pos;
    for (const auto& c : schema.counter_names)
        counter_pos.push_back(locate(c));
    for (const auto& m : schema.metric_names)
        metric_pos.push_back(locate(m));
    for (const auto& m : schema.metadata_names)
        locate(m);

    std::set<std::size_t> modeled(counter_pos.begin(), counter_pos.end());
    modeled.insert(metric_pos.begin(), metric_pos.end());
    std::vector<std::string> metadata_columns;
    std::vector<std::size_t> metadata_pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!modeled.count(i)) {
            metadata_columns.push_back(header[i]);
            metadata_pos.push_back(i);
        }
    }

    std::vector<std::vector<double>> raw_rows, metric_rows;
    std::vector<std::vector<std::string>> metadata;
    std::vector<std::string> fields;
    std::size_t row = 0;
    while (read_record(in, fields, line)) {
        if (blank_record(fields))
            continue;
        ++row;
        const std::string where = "row " + std::to_string(row);
        if (fields.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                                 std::to_string(fields.size()),
                             row);
        auto numeric = [&](std::size_t pos, const std::string& name) {
            const std::string& cell = fields[pos];
            if (trim(cell).empty())
                throw ParseError(where + ": missing value for " + name, row);
            double v;
            if (!parse_double(cell, v))
                throw ParseError(where + ": non-numeric value '" + cell + "' for " + name, row);
            if (v < 0.0)
                throw ParseError(where + ": negative value for " + name, row);
            return v;
        };
        std::vector<double> r(26), m(4);
        for (std::size_t c = 0; c < 26; ++c)
            r[c] = numeric(counter_pos[c], schema.counter_names[c]);
        for (std::size_t k = 0; k < 4; ++k) {
            m[k] = numeric(metric_pos[k], schema.metric_names[k]);
            if (m[k] == 0.0)
                throw ParseError(where + ": metric " + schema.metric_names[k] + " must be positive", row);
        }
        if (r[0] == 0.0)
            throw NormalizationError(where + ": TOT_CYC is zero; cannot normalize counters", row);
        std::vector<std::string> meta;
        for (auto p : metadata_pos) {
            if (fields[p].empty())
                throw ParseError(where + ": missing value for " + header[p], row);
            meta.push_back(fields[p]);
        }
        raw_rows.push_back(std::move(r));
        metric_rows.push_back(std::move(m));
        metadata.push_back(std::move(meta));
    }

    Matrix raw(static_cast<Index>(raw_rows.size()), 26);
    Matrix metrics(static_cast<Index>(raw_rows.size()), 4);
    for (std::size_t i = 0; i < raw_rows.size(); ++i) {
        for (std::size_t c = 0; c < 26; ++c)
            raw(static_cast<Index>(i), static_cast<Index>(c)) = raw_rows[i][c];
        for (std::size_t k = 0; k < 4; ++k)
            metrics(static_cast<Index>(i), static_cast<Index>(k)) = metric_rows[i][k];
    }
    return Dataset::from_columns(schema, std::move(metadata_columns), std::move(metadata), std::move(raw),
                                 std::move(metrics));
}

Dataset ingest(const std::filesystem::path& path, const CounterSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw SchemaError("cannot open dataset " + path.string());
    return ingest(in, schema);
}

void emit_csv(const Dataset& dataset, std::ostream& out) {
    const auto& schema = dataset.schema();
    std::vector<std::string> header;
    for (const auto& m : dataset.metadata_columns())
        header.push_back(quote_if_needed(m));
    for (const auto& c : schema.counter_names)
        header.push_back(c);
    for (const auto& m : schema.metric_names)
        header.push_back(m);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << '\n';

    for (std::size_t i = 0; i < dataset.rows(); ++i) {
        bool first = true;
        auto cell = [&](const std::string& s) {
            out << (first ? "" : ",") << s;
            first = false;
        };
        for (const auto& v : dataset.metadata()[i])
            cell(quote_if_needed(v));
        for (Index c = 0; c < 26; ++c)
            cell(format17(dataset.raw()(static_cast<Index>(i), c)));
        for (Index m = 0; m < 4; ++m)
            cell(format17(dataset.metrics()(static_cast<Index>(i), m)));
        out << '\n';
    }
}

void emit_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ArgumentError("cannot write " + path.string());
    emit_csv(dataset, out);
}

Split split(std::size_t n, std::uint64_t seed, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ArgumentError("split fraction must lie in (0, 1)");
    if (n < 5)
        throw SizeError("split needs at least 5 rows, got " + std::to_string(n));
    const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
        throw SizeError("split fraction leaves an empty train or test set");

    Rng rng(stream_seed(seed, "split"));
    auto perm = rng.permutation(n);
    Split s;
    s.seed = seed;
    s.fraction = fraction;
    s.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return s;
}

Split split(const Dataset& dataset, std::uint64_t seed, double fraction) {
    return split(dataset.rows(), seed, fraction);
}

CorrelationMatrix correlate(const Matrix& columns, std::vector<std::string> labels) {
    const Index n = columns.rows();
    const Index k = columns.cols();
    if (k < 2)
        throw ArgumentError("correlation needs at least 2 columns");
    if (n < 3)
        throw SizeError("correlation needs at least 3 values per column");
    if (static_cast<Index>(labels.size()) != k)
        throw ArgumentError("correlation labels do not match the column count");
    require_finite(columns, "correlation input");

    Matrix centered = columns.rowwise() - columns.colwise().mean();
    Vector norms(k);
    for (Index j = 0; j < k; ++j) {
        norms[j] = centered.col(j).norm();
        const double scale = columns.col(j).cwiseAbs().maxCoeff();
        if (norms[j] == 0.0 || norms[j] <= 1e-14 * scale * std::sqrt(static_cast<double>(n)))
            throw DegenerateError("column " + labels[static_cast<std::size_t>(j)] + " has zero variance");
        centered.col(j) /= norms[j];
    }
    CorrelationMatrix out;
    out.labels = std::move(labels);
    out.values = centered.transpose() * centered;
    for (Index i = 0; i < k; ++i) {
        out.values(i, i) = 1.0;
        for (Index j = i + 1; j < k; ++j) {
            double v = std::clamp(0.5 * (out.values(i, j) + out.values(j, i)), -1.0, 1.0);
            out.values(i, j) = v;
            out.values(j, i) = v;
        }
    }
    return out;
}

} // namespace counterlens
