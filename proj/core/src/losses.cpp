#include "alea/losses.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "alea/error.hpp"
#include "alea/io.hpp"

namespace alea::loss {
namespace {

void check_lengths(std::size_t heads, std::size_t targets) {
  if (heads != targets) throw ShapeError("heads and targets differ in length");
  if (heads == 0) throw DataError("loss over an empty batch");
}

double gaussian_term(const GaussianHead& h, double y, double c) {
  if (!(h.sigma2 > 0.0)) throw DataError("predicted variance must be > 0");
  const double r = y - h.mu;
  return 0.5 * std::log(h.sigma2) + r * r / (2.0 * h.sigma2) + c;
}

}  // namespace

void NIGHead::validate() const {
  if (!(nu > 0.0) || !(alpha > 1.0) || !(beta > 0.0)) {
    throw DataError("NIG head requires nu > 0, alpha > 1, beta > 0");
  }
}

void LossConfig::validate() const {
  if (!(beta_weight >= 0.0 && beta_weight <= 1.0)) throw ConfigError("beta weight must lie in [0, 1]");
  if (!(lambda_reg >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!std::isfinite(nll_const)) throw ConfigError("NLL constant must be finite");
}

double BetaSchedule::at(std::size_t epoch, std::size_t total_epochs) const {
  switch (kind) {
    case Kind::Constant: return constant;
    case Kind::Linear:
      if (total_epochs <= 1) return 1.0;
      return 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    case Kind::StepToHalf: return 2 * epoch < total_epochs ? 1.0 : 0.5;
    case Kind::StepToZero: return 2 * epoch < total_epochs ? 1.0 : 0.0;
  }
  return constant;
}

std::string BetaSchedule::describe() const {
  switch (kind) {
    case Kind::Constant: return "constant(" + io::format_double(constant) + ")";
    case Kind::Linear: return "linear(1->0)";
    case Kind::StepToHalf: return "step(1->0.5)";
    case Kind::StepToZero: return "step(1->0)";
  }
  return "?";
}

BetaSchedule BetaSchedule::parse(std::string_view name, double constant_weight) {
  if (name == "constant") return {Kind::Constant, constant_weight};
  if (name == "linear") return {Kind::Linear, constant_weight};
  if (name == "step-half") return {Kind::StepToHalf, constant_weight};
  if (name == "step-zero") return {Kind::StepToZero, constant_weight};
  throw ConfigError("unknown beta schedule '" + std::string(name) +
                    "' (expected constant|linear|step-half|step-zero)");
}

double log_gamma(double x) { return boost::math::lgamma(x); }

double nll_gaussian(std::span<const GaussianHead> heads, std::span<const double> targets,
                    double nll_const) {
  check_lengths(heads.size(), targets.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) sum += gaussian_term(heads[i], targets[i], nll_const);
  return sum / static_cast<double>(heads.size());
}

double beta_nll(std::span<const GaussianHead> heads, std::span<const double> targets,
                double beta_weight, double nll_const) {
  check_lengths(heads.size(), targets.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const double term = gaussian_term(heads[i], targets[i], nll_const);
    sum += std::pow(heads[i].sigma2, beta_weight) * term;
  }
  return sum / static_cast<double>(heads.size());
}

double beta_nll_with_grad(std::span<const GaussianHead> heads, std::span<const double> targets,
                          double beta_weight, double nll_const, std::span<GaussianGrad> grads) {
  check_lengths(heads.size(), targets.size());
  if (grads.size() != heads.size()) throw ShapeError("gradient buffer has the wrong size");
  const double inv_n = 1.0 / static_cast<double>(heads.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& h = heads[i];
    const double term = gaussian_term(h, targets[i], nll_const);
    const double w = std::pow(h.sigma2, beta_weight);
    const double r = targets[i] - h.mu;
    sum += w * term;
    grads[i].d_mu = w * (h.mu - targets[i]) / h.sigma2 * inv_n;
    grads[i].d_sigma2 = w * (0.5 / h.sigma2 - r * r / (2.0 * h.sigma2 * h.sigma2)) * inv_n;
  }
  return sum * inv_n;
}

double st_width(const NIGHead& h) { return std::sqrt(h.beta * (1.0 + h.nu) / (h.alpha * h.nu)); }

double total_evidence(const NIGHead& h) { return 2.0 * h.nu + h.alpha; }

double student_t_log_pdf(double y, double loc, double dof, double scale2) {
  const double r = y - loc;
  return log_gamma(0.5 * (dof + 1.0)) - log_gamma(0.5 * dof) -
         0.5 * std::log(dof * std::numbers::pi * scale2) -
         0.5 * (dof + 1.0) * std::log1p(r * r / (dof * scale2));
}

double st_log_pdf(double y, const NIGHead& h) {
  return student_t_log_pdf(y, h.gamma, 2.0 * h.alpha, h.beta * (1.0 + h.nu) / (h.nu * h.alpha));
}

double nig_loss(std::span<const NIGHead> heads, std::span<const double> targets, double lambda_reg) {
  check_lengths(heads.size(), targets.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& h = heads[i];
    h.validate();
    const double r = std::abs(targets[i] - h.gamma);
    sum += -st_log_pdf(targets[i], h) + lambda_reg * r / st_width(h) * total_evidence(h);
  }
  return sum / static_cast<double>(heads.size());
}

double nig_loss_with_grad(std::span<const NIGHead> heads, std::span<const double> targets,
                          double lambda_reg, std::span<NIGGrad> grads) {
  check_lengths(heads.size(), targets.size());
  if (grads.size() != heads.size()) throw ShapeError("gradient buffer has the wrong size");
  const double inv_n = 1.0 / static_cast<double>(heads.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& h = heads[i];
    h.validate();
    const double r = targets[i] - h.gamma;
    const double abs_r = std::abs(r);
    const double omega = 2.0 * h.beta * (1.0 + h.nu);
    const double denom = h.nu * r * r + omega;
    const double width = st_width(h);
    const double phi = total_evidence(h);

    // -log St = 0.5 log(pi / nu) - alpha log(omega) + (alpha + 0.5) log(nu r^2 + omega)
    //           + lgamma(alpha) - lgamma(alpha + 0.5)
    const double nll = -st_log_pdf(targets[i], h);
    const double reg = lambda_reg * abs_r / width * phi;
    sum += nll + reg;

    NIGGrad g;
    g.d_gamma = -(2.0 * h.alpha + 1.0) * h.nu * r / denom;
    g.d_nu = -0.5 / h.nu - h.alpha * 2.0 * h.beta / omega + (h.alpha + 0.5) * (r * r + 2.0 * h.beta) / denom;
    g.d_alpha = -std::log(omega) + std::log(denom) + boost::math::digamma(h.alpha) -
                boost::math::digamma(h.alpha + 0.5);
    g.d_beta = -h.alpha / h.beta + (h.alpha + 0.5) * 2.0 * (1.0 + h.nu) / denom;

    // Regulariser lambda |r| Phi / w with 1/w = sqrt(alpha nu / (beta (1 + nu))).
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    g.d_gamma += -lambda_reg * sign * phi / width;
    g.d_nu += lambda_reg * abs_r / width * (2.0 + phi * 0.5 * (1.0 / h.nu - 1.0 / (1.0 + h.nu)));
    g.d_alpha += lambda_reg * abs_r / width * (1.0 + phi * 0.5 / h.alpha);
    g.d_beta += lambda_reg * abs_r / width * (-phi * 0.5 / h.beta);

    grads[i] = {g.d_gamma * inv_n, g.d_nu * inv_n, g.d_alpha * inv_n, g.d_beta * inv_n};
  }
  return sum * inv_n;
}

double de_aleatoric(std::span<const double> member_variances) {
  if (member_variances.empty()) throw DataError("ensemble has no members");
  double sum = 0.0;
  for (double v : member_variances) {
    if (!(v > 0.0)) throw DataError("member variances must be > 0");
    sum += v;
  }
  return std::sqrt(sum / static_cast<double>(member_variances.size()));
}

}  // namespace alea::loss
