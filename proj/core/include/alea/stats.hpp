#pragma once

#include <span>

namespace alea::stats {

double mean(std::span<const double> values);

/// Unbiased (n - 1) standard deviation. Zero for a single value.
double sample_std(std::span<const double> values);

/// Kolmogorov-Smirnov statistic of `values` against U[lo, hi].
double ks_uniform(std::span<const double> values, double lo, double hi);

}  // namespace alea::stats
