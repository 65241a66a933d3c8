#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace counterlens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error hierarchy. Every failure the library reports derives from Error so the
// CLI can map it to a nonzero exit code in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public Error { public: using Error::Error; };
class ArgumentError : public Error { public: using Error::Error; };
class SizeError : public Error { public: using Error::Error; };
class DegenerateError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class NumericalError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };

/// Error tied to a 1-based data row of an input file.
class RowError : public Error {
public:
    RowError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class ParseError : public RowError { public: using RowError::RowError; };
class NormalizationError : public RowError { public: using RowError::RowError; };

/// A predictor matrix whose columns carry counter names.
struct FeatureMatrix {
    std::vector<std::string> names;
    Matrix values;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }

    /// Column index of `name`, or -1.
    Index column_index(std::string_view name) const;

    FeatureMatrix take_rows(std::span<const std::size_t> rows) const;
    FeatureMatrix select_columns(std::span<const std::string> wanted) const;

    /// Reorders columns to `expected`; throws SchemaError listing missing and
    /// unexpected columns when the name sets differ.
    FeatureMatrix aligned_to(std::span<const std::string> expected) const;
};

Vector take(const Vector& v, std::span<const std::size_t> rows);

/// Fails with DataError if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

} // namespace counterlens
