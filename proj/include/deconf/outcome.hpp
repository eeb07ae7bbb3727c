#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deconf/types.hpp"

namespace deconf {

// Regularized Student-t CDF and quantile (used for credible intervals and
// two-sided tail probabilities).
double student_t_cdf(double x, double dof);
double student_t_quantile(double p, double dof);
double regularized_incomplete_beta(double a, double b, double x);

// Normal-inverse-gamma prior, coefficient covariance scaled by the noise
// variance so the posterior stays in closed form.
struct RegressionPrior {
  double cause_precision = 1.0;
  double confounder_precision = 1.0;
  double intercept_precision = 1e-6;
  double noise_shape = 1e-3;
  double noise_rate = 1e-3;

  // Isotropic unit precision for wide designs.  With one or two causes the
  // substitute confounder of a linear-Gaussian factor model is an exact
  // linear map of the causes; resolving the resulting collinear direction
  // needs real shrinkage on the cause coefficients with a relatively
  // flatter prior on the confounder, so the shared variation loads there.
  static RegressionPrior defaults_for(Eigen::Index n_causes, Eigen::Index n_obs);
};

enum class ColumnRole { Intercept, Cause, Confounder };

struct OutcomePosterior {
  Vector coef_mean;                    // length 1 + D + K
  Matrix coef_scale;                   // (b_n/a_n) * (X'X + Lambda)^-1
  double noise_shape = 0.0;            // a_n
  double noise_rate = 0.0;             // b_n
  double dof = 0.0;                    // 2 a_n
  std::vector<ColumnRole> roles;
  std::vector<std::string> labels;

  double marginal_scale(Eigen::Index j) const;
  double marginal_sd(Eigen::Index j) const;
};

// Conjugate fit for an explicit design matrix.
OutcomePosterior nig_regression(const Matrix& design, const Vector& y,
                                const Vector& prior_precisions, double noise_shape,
                                double noise_rate, std::vector<ColumnRole> roles,
                                std::vector<std::string> labels);

// Builds [intercept | causes | standardized confounders] and fits it.
OutcomePosterior fit_outcome(const Vector& y, const ExposureMatrix& exposures,
                             const std::optional<Matrix>& confounders,
                             const RegressionPrior& prior,
                             const std::vector<std::string>& cause_labels = {});

// A confounder acts on the causes it assigns, so a substitute built from the
// exposure rows carries confounding signal only through its association with
// them; the orthogonal remainder is inference noise that lets the outcome
// fit null the confounder coefficients.  Returns the least-squares fit of
// each substitute column on [1 | causes].  True (oracle) confounders are
// never projected.
Matrix project_substitute_onto_causes(const Matrix& substitute,
                                      const ExposureMatrix& exposures);

struct EffectEntry {
  std::string label;
  double mean = 0.0;
  double std_err = 0.0;
  double ci80_lo = 0.0, ci80_hi = 0.0;
  double ci95_lo = 0.0, ci95_hi = 0.0;
  double tail_prob = 1.0;  // 2 * min(P(b<=0), P(b>=0))
  bool causal = false;     // 95% interval excludes zero
};

struct EffectReport {
  std::vector<EffectEntry> effects;  // causes only, design order
};

EffectReport effect_report(const OutcomePosterior& posterior, double level_inner = 0.80,
                           double level_outer = 0.95);

}  // namespace deconf
