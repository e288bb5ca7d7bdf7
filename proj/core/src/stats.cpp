#include "alea/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "alea/error.hpp"

namespace alea::stats {

double mean(std::span<const double> values) {
  if (values.empty()) throw DataError("mean of an empty sequence");
  // Shifted by the first value, so constant input gives that value exactly.
  const double shift = values.front();
  double sum = 0.0;
  for (double v : values) sum += v - shift;
  return shift + sum / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.empty()) throw DataError("std of an empty sequence");
  if (values.size() == 1) return 0.0;
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double ks_uniform(std::span<const double> values, double lo, double hi) {
  if (values.empty()) throw DataError("KS statistic of an empty sequence");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = std::clamp((sorted[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace alea::stats
