#pragma once

#include <span>
#include <string>
#include <string_view>

namespace alea::loss {

/// Gaussian predictive head: mean and variance in target units.
struct GaussianHead {
  double mu = 0.0;
  double sigma2 = 1.0;
};

/// Normal-Inverse-Gamma evidential head. Valid heads have nu > 0, alpha > 1,
/// beta > 0.
struct NIGHead {
  double gamma = 0.0;
  double nu = 1.0;
  double alpha = 2.0;
  double beta = 1.0;

  void validate() const;
};

struct LossConfig {
  double beta_weight = 0.5;  // exponent of the beta-NLL variance weight, [0, 1]
  double lambda_reg = 0.01;  // evidential regulariser weight, >= 0
  double nll_const = 0.0;    // additive constant C

  void validate() const;
};

/// Per-epoch value of the beta-NLL exponent. Step schedules switch at half
/// the epoch budget; the linear schedule goes from 1 at the first epoch to 0
/// at the last.
struct BetaSchedule {
  enum class Kind { Constant, Linear, StepToHalf, StepToZero };
  Kind kind = Kind::Constant;
  double constant = 0.5;

  double at(std::size_t epoch, std::size_t total_epochs) const;
  std::string describe() const;
  /// "constant" (uses the given weight), "linear", "step-half", "step-zero".
  static BetaSchedule parse(std::string_view name, double constant_weight);
};

double log_gamma(double x);

/// (1/N) sum [ 0.5 log s2 + (y - mu)^2 / (2 s2) + C ].
double nll_gaussian(std::span<const GaussianHead> heads, std::span<const double> targets,
                    double nll_const = 0.0);

/// (1/N) sum s2^beta [ 0.5 log s2 + (y - mu)^2 / (2 s2) + C ].
double beta_nll(std::span<const GaussianHead> heads, std::span<const double> targets,
                double beta_weight, double nll_const = 0.0);

struct GaussianGrad {
  double d_mu = 0.0;
  double d_sigma2 = 0.0;
};

/// beta_nll plus its gradient with respect to each head. The s2^beta weight
/// is held constant (no gradient flows through it).
double beta_nll_with_grad(std::span<const GaussianHead> heads, std::span<const double> targets,
                          double beta_weight, double nll_const, std::span<GaussianGrad> grads);

/// sqrt(beta (1 + nu) / (alpha nu)); the evidential aleatoric uncertainty.
double st_width(const NIGHead& h);

/// 2 nu + alpha.
double total_evidence(const NIGHead& h);

/// log density of a Student-t with `dof` degrees of freedom, location `loc`
/// and squared scale `scale2`.
double student_t_log_pdf(double y, double loc, double dof, double scale2);

/// Marginal likelihood of y under the NIG prior: Student-t with 2 alpha
/// degrees of freedom, location gamma, squared scale beta (1 + nu) / (nu alpha).
double st_log_pdf(double y, const NIGHead& h);

/// (1/N) sum [ -st_log_pdf(y_i) + lambda |y_i - gamma_i| / w_St * Phi ].
double nig_loss(std::span<const NIGHead> heads, std::span<const double> targets, double lambda_reg);

struct NIGGrad {
  double d_gamma = 0.0;
  double d_nu = 0.0;
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

double nig_loss_with_grad(std::span<const NIGHead> heads, std::span<const double> targets,
                          double lambda_reg, std::span<NIGGrad> grads);

/// sqrt of the mean member variance.
double de_aleatoric(std::span<const double> member_variances);

}  // namespace alea::loss
