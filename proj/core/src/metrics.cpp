#include "counterlens/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace counterlens {

namespace {

void check_pair(const Vector& a, const Vector& b, Index min_len, const char* what) {
    if (a.size() != b.size())
        throw ArgumentError(std::string(what) + ": vectors differ in length");
    if (a.size() < min_len)
        throw ArgumentError(std::string(what) + ": needs at least " + std::to_string(min_len) + " values");
    require_finite(a, what);
    require_finite(b, what);
}

} // namespace

double mean(const Vector& v) {
    if (v.size() == 0)
        throw ArgumentError("mean of an empty vector");
    return v.mean();
}

double population_sd(const Vector& v) {
    const double m = mean(v);
    return std::sqrt((v.array() - m).square().mean());
}

double rmse(const Vector& observed, const Vector& predicted) {
    check_pair(observed, predicted, 1, "rmse");
    return std::sqrt((observed - predicted).squaredNorm() / static_cast<double>(observed.size()));
}

double pearson(const Vector& x, const Vector& y) {
    check_pair(x, y, 2, "pearson");
    const Vector xc = x.array() - x.mean();
    const Vector yc = y.array() - y.mean();
    const double sx = xc.norm();
    const double sy = yc.norm();
    if (sx == 0.0 || sy == 0.0)
        throw DegenerateError("correlation of a zero-variance vector");
    return std::clamp(xc.dot(yc) / (sx * sy), -1.0, 1.0);
}

double r_squared(const Vector& observed, const Vector& predicted) {
    check_pair(observed, predicted, 3, "r_squared");
    const double r = pearson(observed, predicted);
    return r * r;
}

} // namespace counterlens
