#include "alea/propagate.hpp"

#include <cmath>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <string>

#include "alea/error.hpp"
#include "alea/rng.hpp"

namespace alea::propagate {

void PropagationProblem::validate() const {
  if (partials.size() != sigmas.size()) {
    throw ShapeError("propagation problem: partials and sigmas differ in length");
  }
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ConfigError("propagation problem: sigmas must be >= 0");
  }
  if (covariances) {
    const auto n = static_cast<Eigen::Index>(partials.size());
    if (covariances->rows() != n || covariances->cols() != n) {
      throw ShapeError("propagation problem: covariance matrix has the wrong dimension");
    }
    if (n > 0 && (*covariances - covariances->transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ConfigError("propagation problem: covariance matrix is not symmetric");
    }
  }
}

double propagate_general(const PropagationProblem& problem) {
  problem.validate();
  double variance = 0.0;
  for (std::size_t i = 0; i < problem.partials.size(); ++i) {
    variance += problem.partials[i] * problem.partials[i] * problem.sigmas[i] * problem.sigmas[i];
  }
  if (problem.covariances) {
    const auto& cov = *problem.covariances;
    for (std::size_t i = 0; i < problem.partials.size(); ++i) {
      for (std::size_t j = 0; j < problem.partials.size(); ++j) {
        if (i == j) continue;
        variance += problem.partials[i] * problem.partials[j] *
                    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  if (variance < 0.0) throw DataError("non-physical covariance");
  return std::sqrt(variance);
}

double propagate_linear(double slope, double sigma_x) {
  if (!(sigma_x >= 0.0)) throw ConfigError("sigma_x must be >= 0");
  return std::abs(slope) * sigma_x;
}

double propagate_image_sum(double sigma_x, std::size_t n_pixels) {
  if (!(sigma_x >= 0.0)) throw ConfigError("sigma_x must be >= 0");
  if (n_pixels == 0) throw ConfigError("n_pixels must be > 0");
  return std::sqrt(static_cast<double>(n_pixels)) * sigma_x;
}

double pixel_sigma_for(double sigma_y, std::size_t n_pixels) {
  if (!(sigma_y >= 0.0)) throw ConfigError("sigma_y must be >= 0");
  if (n_pixels == 0) throw ConfigError("n_pixels must be > 0");
  return sigma_y / std::sqrt(static_cast<double>(n_pixels));
}

MonteCarloResult mc_propagate(const ScalarFunction& f, std::span<const double> x0,
                              std::span<const double> sigmas, std::size_t n_samples,
                              std::uint64_t seed) {
  if (n_samples < kMinMonteCarloSamples) {
    throw ConfigError("mc_propagate needs at least " + std::to_string(kMinMonteCarloSamples) +
                      " samples");
  }
  if (sigmas.size() != 1 && sigmas.size() != x0.size()) {
    throw ShapeError("mc_propagate: sigmas must have length 1 or match x0");
  }
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ConfigError("mc_propagate: sigmas must be >= 0");
  }

  auto engine = make_engine(seed, Stream::MonteCarlo);
  boost::random::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> point(x0.size());

  // Welford accumulation.
  double running_mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= n_samples; ++n) {
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double s = sigmas.size() == 1 ? sigmas[0] : sigmas[i];
      point[i] = x0[i] + s * unit(engine);
    }
    const double y = f(point);
    if (!std::isfinite(y)) throw DataError("mc_propagate: f returned a non-finite value");
    const double delta = y - running_mean;
    running_mean += delta / static_cast<double>(n);
    m2 += delta * (y - running_mean);
  }
  return {running_mean, std::sqrt(m2 / static_cast<double>(n_samples - 1))};
}

}  // namespace alea::propagate
