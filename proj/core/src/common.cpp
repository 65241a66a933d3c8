#include "counterlens/common.hpp"

#include <algorithm>
#include <cmath>

namespace counterlens {

Index FeatureMatrix::column_index(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? Index{-1} : static_cast<Index>(it - names.begin());
}

FeatureMatrix FeatureMatrix::take_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out;
    out.names = names;
    out.values.resize(static_cast<Index>(rows.size()), values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.values.row(static_cast<Index>(i)) = values.row(static_cast<Index>(rows[i]));
    return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::string> wanted) const {
    FeatureMatrix out;
    out.values.resize(values.rows(), static_cast<Index>(wanted.size()));
    for (std::size_t j = 0; j < wanted.size(); ++j) {
        Index src = column_index(wanted[j]);
        if (src < 0)
            throw SchemaError("unknown predictor column: " + wanted[j]);
        out.names.push_back(wanted[j]);
        out.values.col(static_cast<Index>(j)) = values.col(src);
    }
    return out;
}

FeatureMatrix FeatureMatrix::aligned_to(std::span<const std::string> expected) const {
    if (std::equal(names.begin(), names.end(), expected.begin(), expected.end()))
        return *this;

    std::vector<std::string> missing;
    std::vector<std::string> extra;
    for (const auto& name : expected)
        if (column_index(name) < 0)
            missing.push_back(name);
    for (const auto& name : names)
        if (std::find(expected.begin(), expected.end(), name) == expected.end())
            extra.push_back(name);
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "predictor columns differ from training columns;";
        auto list = [](const std::vector<std::string>& v) {
            std::string s;
            for (const auto& x : v)
                s += (s.empty() ? " " : ", ") + x;
            return s;
        };
        if (!missing.empty())
            msg += " missing:" + list(missing) + ";";
        if (!extra.empty())
            msg += " unexpected:" + list(extra) + ";";
        throw SchemaError(msg);
    }
    return select_columns(expected);
}

Vector take(const Vector& v, std::span<const std::size_t> rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        out[static_cast<Index>(i)] = v[static_cast<Index>(rows[i])];
    return out;
}

void require_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite())
        throw DataError(std::string(what) + " contains non-finite values");
}

void require_finite(const Vector& v, std::string_view what) {
    if (!v.allFinite())
        throw DataError(std::string(what) + " contains non-finite values");
}

} // namespace counterlens
