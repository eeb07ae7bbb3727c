#include "deconf/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deconf {

namespace {

// Lentz continued fraction for the incomplete beta (Numerical Recipes style).
double betacf(double a, double b, double x) {
  constexpr int max_iter = 300;
  constexpr double eps = 3e-16;
  constexpr double fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw NumericError("student_t_cdf: dof must be positive");
  if (x == 0.0) return 0.5;
  const double ib = regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + x * x));
  return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0))
    throw NumericError("student_t_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  // bisection with a Newton polish; cdf is monotone
  double lo = -1.0, hi = 1.0;
  while (student_t_cdf(lo, dof) > p) lo *= 2.0;
  while (student_t_cdf(hi, dof) < p) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(x, dof) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double pdf = std::exp(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                                0.5 * std::log(dof * 3.14159265358979323846) -
                                0.5 * (dof + 1.0) * std::log1p(x * x / dof));
    double next = x - f / std::max(pdf, 1e-300);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) < 1e-14 * (1.0 + std::fabs(x))) return next;
    x = next;
  }
  return x;
}

RegressionPrior RegressionPrior::defaults_for(Eigen::Index n_causes, Eigen::Index n_obs) {
  RegressionPrior prior;
  if (n_causes <= 2) {
    prior.cause_precision = 0.1 * static_cast<double>(n_obs);
    prior.confounder_precision = 0.065 * static_cast<double>(n_obs);
  }
  return prior;
}

double OutcomePosterior::marginal_scale(Eigen::Index j) const {
  return std::sqrt(std::max(coef_scale(j, j), 0.0));
}

double OutcomePosterior::marginal_sd(Eigen::Index j) const {
  if (dof <= 2.0) return std::numeric_limits<double>::infinity();
  return marginal_scale(j) * std::sqrt(dof / (dof - 2.0));
}

OutcomePosterior nig_regression(const Matrix& design, const Vector& y,
                                const Vector& prior_precisions, double noise_shape,
                                double noise_rate, std::vector<ColumnRole> roles,
                                std::vector<std::string> labels) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw ValidationError("outcome length does not match design rows");
  if (prior_precisions.size() != p)
    throw ValidationError("prior precision length does not match design columns");
  if (!design.allFinite() || !y.allFinite())
    throw ValidationError("design matrix or outcome holds a non-finite entry");
  if (!(noise_shape > 0.0) || !(noise_rate > 0.0))
    throw ValidationError("noise prior shape and rate must be positive");
  if ((prior_precisions.array() < 0.0).any())
    throw ValidationError("prior precisions must be nonnegative");

  Matrix lambda_n = design.transpose() * design;
  lambda_n.diagonal() += prior_precisions;

  Eigen::LDLT<Matrix> ldlt(lambda_n);
  if (ldlt.info() != Eigen::Success ||
      (ldlt.vectorD().array() <= 0.0).any())
    throw NumericError("singular normal equations: rank-deficient design with zero prior precision");

  const Vector xty = design.transpose() * y;
  const Vector mean = ldlt.solve(xty);

  const double a_n = noise_shape + 0.5 * static_cast<double>(n);
  double b_n = noise_rate + 0.5 * (y.squaredNorm() - mean.dot(lambda_n * mean));
  b_n = std::max(b_n, 1e-300);

  OutcomePosterior post;
  post.coef_mean = mean;
  post.coef_scale = (b_n / a_n) * ldlt.solve(Matrix::Identity(p, p));
  // symmetrize against round-off
  post.coef_scale = 0.5 * (post.coef_scale + post.coef_scale.transpose()).eval();
  post.noise_shape = a_n;
  post.noise_rate = b_n;
  post.dof = 2.0 * a_n;
  post.roles = std::move(roles);
  post.labels = std::move(labels);
  if (post.roles.size() != static_cast<size_t>(p) ||
      post.labels.size() != static_cast<size_t>(p))
    throw ValidationError("column roles/labels do not match design width");
  return post;
}

OutcomePosterior fit_outcome(const Vector& y, const ExposureMatrix& exposures,
                             const std::optional<Matrix>& confounders,
                             const RegressionPrior& prior,
                             const std::vector<std::string>& cause_labels) {
  const Eigen::Index n = exposures.n_patients();
  const Eigen::Index d = exposures.n_causes();
  if (y.size() != n)
    throw ValidationError("outcomes: length does not match exposure rows");
  const Eigen::Index k = confounders ? confounders->cols() : 0;
  if (confounders && confounders->rows() != n)
    throw ValidationError("confounders: row count does not match exposure rows");

  Matrix design(n, 1 + d + k);
  design.col(0).setOnes();
  design.middleCols(1, d) = exposures.values;
  if (k > 0) {
    // standardized confounder columns keep the prior scale meaningful
    for (Eigen::Index c = 0; c < k; ++c) {
      Vector col = confounders->col(c);
      const double mean = col.mean();
      col.array() -= mean;
      double sd = std::sqrt(col.squaredNorm() / std::max<Eigen::Index>(n - 1, 1));
      if (!(sd > 1e-12)) sd = 1.0;
      design.col(1 + d + c) = col / sd;
    }
  }

  Vector precisions(1 + d + k);
  precisions(0) = prior.intercept_precision;
  precisions.segment(1, d).setConstant(prior.cause_precision);
  if (k > 0) precisions.tail(k).setConstant(prior.confounder_precision);

  std::vector<ColumnRole> roles(1 + d + k, ColumnRole::Cause);
  roles[0] = ColumnRole::Intercept;
  for (Eigen::Index c = 0; c < k; ++c) roles[1 + d + c] = ColumnRole::Confounder;

  std::vector<std::string> labels(1 + d + k);
  labels[0] = "(intercept)";
  for (Eigen::Index j = 0; j < d; ++j)
    labels[1 + j] = cause_labels.size() == static_cast<size_t>(d)
                        ? cause_labels[j]
                        : "cause" + std::to_string(j + 1);
  for (Eigen::Index c = 0; c < k; ++c) labels[1 + d + c] = "z" + std::to_string(c + 1);

  return nig_regression(design, y, precisions, prior.noise_shape, prior.noise_rate,
                        std::move(roles), std::move(labels));
}

Matrix project_substitute_onto_causes(const Matrix& substitute,
                                      const ExposureMatrix& exposures) {
  const Eigen::Index n = exposures.n_patients();
  const Eigen::Index d = exposures.n_causes();
  if (substitute.rows() != n)
    throw ValidationError("substitute confounder rows do not match exposures");
  Matrix design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = exposures.values;
  Matrix gram = design.transpose() * design;
  gram.diagonal().array() += 1e-10;
  Eigen::LDLT<Matrix> ldlt(gram);
  return design * ldlt.solve(design.transpose() * substitute);
}

EffectReport effect_report(const OutcomePosterior& posterior, double level_inner,
                           double level_outer) {
  if (!(level_inner > 0.0 && level_inner < level_outer && level_outer < 1.0))
    throw ValidationError("credible levels must satisfy 0 < inner < outer < 1");
  const double q_inner = student_t_quantile(0.5 * (1.0 + level_inner), posterior.dof);
  const double q_outer = student_t_quantile(0.5 * (1.0 + level_outer), posterior.dof);

  EffectReport report;
  for (Eigen::Index j = 0; j < posterior.coef_mean.size(); ++j) {
    if (posterior.roles[j] != ColumnRole::Cause) continue;
    EffectEntry e;
    e.label = posterior.labels[j];
    e.mean = posterior.coef_mean(j);
    const double scale = posterior.marginal_scale(j);
    e.std_err = posterior.marginal_sd(j);
    e.ci80_lo = e.mean - q_inner * scale;
    e.ci80_hi = e.mean + q_inner * scale;
    e.ci95_lo = e.mean - q_outer * scale;
    e.ci95_hi = e.mean + q_outer * scale;
    e.tail_prob = scale > 0.0
                      ? 2.0 * student_t_cdf(-std::fabs(e.mean) / scale, posterior.dof)
                      : (e.mean == 0.0 ? 1.0 : 0.0);
    e.causal = !(e.ci95_lo <= 0.0 && e.ci95_hi >= 0.0);
    report.effects.push_back(std::move(e));
  }
  return report;
}

}  // namespace deconf
