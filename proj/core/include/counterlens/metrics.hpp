#pragma once

#include "counterlens/common.hpp"

namespace counterlens {

/// sqrt(mean((observed - predicted)^2))
double rmse(const Vector& observed, const Vector& predicted);

/// Squared Pearson correlation between observed and predicted.
double r_squared(const Vector& observed, const Vector& predicted);

double pearson(const Vector& x, const Vector& y);

double mean(const Vector& v);
/// Population (biased) standard deviation.
double population_sd(const Vector& v);

} // namespace counterlens
