#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace alea::propagate {

/// First-order error propagation input: partial derivatives of f at the
/// evaluation point, per-input standard deviations, and optional cross terms.
struct PropagationProblem {
  std::vector<double> partials;
  std::vector<double> sigmas;
  /// Symmetric matrix of cross covariances sigma_{x_i x_j}. Only the
  /// off-diagonal entries are used; the diagonal comes from `sigmas`.
  std::optional<Eigen::MatrixXd> covariances;

  void validate() const;
};

/// sqrt(sum_i (df/dx_i)^2 s_i^2 + sum_{i != j} (df/dx_i)(df/dx_j) s_ij).
/// Throws DataError("non-physical covariance") when the radicand is negative.
double propagate_general(const PropagationProblem& problem);

/// y = m x: sigma_y = |m| sigma_x.
double propagate_linear(double slope, double sigma_x);

/// y = sum of n independent pixels with equal noise: sigma_y = sqrt(n) sigma_x.
double propagate_image_sum(double sigma_x, std::size_t n_pixels);

/// Inverse of propagate_image_sum: per-pixel sigma giving output sigma_y.
double pixel_sigma_for(double sigma_y, std::size_t n_pixels);

struct MonteCarloResult {
  double mean = 0.0;
  double std = 0.0;  // unbiased (n - 1)
};

using ScalarFunction = std::function<double(std::span<const double>)>;

inline constexpr std::size_t kMinMonteCarloSamples = 10'000;

/// Sample mean and std of f(x0 + eps), eps ~ N(0, diag(sigma^2)). `sigmas`
/// holds either one value shared by every coordinate or one per coordinate.
MonteCarloResult mc_propagate(const ScalarFunction& f, std::span<const double> x0,
                              std::span<const double> sigmas, std::size_t n_samples,
                              std::uint64_t seed);

}  // namespace alea::propagate
