#include "deconf/pmf.hpp"

#include <cmath>

#include "deconf/rng.hpp"

namespace deconf {

double digamma(double x) {
  double value = 0.0;
  while (x < 6.0) {
    value -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  value += std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return value;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Entry {
  int i, j;
  double a;
};

// E[log p] + H(q) summed over a block of Gamma variational factors
double gamma_block_term(const RowMat& shape, const RowMat& rate, double alpha,
                        double beta) {
  double acc = 0.0;
  const double prior_const = alpha * std::log(beta) - std::lgamma(alpha);
  for (Eigen::Index r = 0; r < shape.rows(); ++r)
    for (Eigen::Index c = 0; c < shape.cols(); ++c) {
      const double s = shape(r, c), q = rate(r, c);
      const double psi_s = digamma(s);
      const double elog = psi_s - std::log(q);
      const double mean = s / q;
      acc += prior_const + (alpha - 1.0) * elog - beta * mean;      // E[log p]
      acc += s - std::log(q) + std::lgamma(s) + (1.0 - s) * psi_s;  // entropy
    }
  return acc;
}

}  // namespace

PmfFit fit_pmf(const ExposureMatrix& exposures, const PmfConfig& config,
               const HoldoutMask* mask) {
  if (!(config.alpha > 0.0) || !(config.beta > 0.0))
    throw ValidationError("pmf: hyperparameters alpha and beta must be positive");
  const int n = static_cast<int>(exposures.n_patients());
  const int d = static_cast<int>(exposures.n_causes());
  const int k = config.k;
  if (d < 2) throw ValidationError("pmf: needs at least 2 causes, got " + std::to_string(d));
  if (k < 1) throw ValidationError("pmf: k must be at least 1");
  if (mask && mask->n_rows() != n)
    throw ValidationError("pmf: mask row count does not match data");

  const Matrix& a = exposures.values;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double v = a(i, j);
      if (!(v >= 0.0) || std::fabs(v - std::round(v)) > 1e-9)
        throw ValidationError("pmf: needs nonnegative count data, got " +
                              std::to_string(v) + " at row " + std::to_string(i) +
                              ", column " + std::to_string(j));
    }

  // observed nonzero entries drive the auxiliary-count updates
  std::vector<Entry> nonzeros;
  double lgamma_const = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto* held = mask ? &mask->heldout[i] : nullptr;
    size_t h = 0;
    for (int j = 0; j < d; ++j) {
      if (held && h < held->size() && (*held)[h] == j) {
        ++h;
        continue;
      }
      if (a(i, j) > 0.0) {
        nonzeros.push_back({i, j, a(i, j)});
        lgamma_const += std::lgamma(a(i, j) + 1.0);
      }
    }
  }

  // dispersed init keeps factors from collapsing symmetrically in the first
  // few sweeps
  Rng rng(derive_seed(config.seed, 0x706d66ULL));
  RowMat z_shape(n, k), z_rate(n, k), t_shape(d, k), t_rate(d, k);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      z_shape(i, c) = config.alpha * (1.0 + rng.uniform());
      z_rate(i, c) = config.beta * (1.0 + rng.uniform());
    }
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < k; ++c) {
      t_shape(j, c) = config.alpha * (1.0 + rng.uniform());
      t_rate(j, c) = config.beta * (1.0 + rng.uniform());
    }

  RowMat ez = z_shape.array() / z_rate.array();
  RowMat elog_z(n, k), et = t_shape.array() / t_rate.array(), elog_t(d, k);
  auto refresh_z = [&] {
    ez = z_shape.array() / z_rate.array();
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c)
        elog_z(i, c) = digamma(z_shape(i, c)) - std::log(z_rate(i, c));
  };
  auto refresh_t = [&] {
    et = t_shape.array() / t_rate.array();
    for (int j = 0; j < d; ++j)
      for (int c = 0; c < k; ++c)
        elog_t(j, c) = digamma(t_shape(j, c)) - std::log(t_rate(j, c));
  };
  refresh_z();
  refresh_t();

  PmfFit fit;
  fit.alpha = config.alpha;
  fit.beta = config.beta;
  fit.converged = false;

  RowMat acc_z(n, k), acc_t(d, k);
  Eigen::RowVectorXd wrow(k);
  double prev_elbo = -std::numeric_limits<double>::infinity();

  for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
    // auxiliary-count pass; also yields the Poisson log-sum-exp term of the
    // collapsed ELBO at the current parameters
    acc_z.setZero();
    acc_t.setZero();
    double lse_sum = 0.0;
    for (const Entry& e : nonzeros) {
      wrow = elog_z.row(e.i) + elog_t.row(e.j);
      const double m = wrow.maxCoeff();
      wrow = (wrow.array() - m).exp();
      const double s = wrow.sum();
      lse_sum += e.a * (m + std::log(s));
      wrow *= e.a / s;
      acc_z.row(e.i) += wrow;
      acc_t.row(e.j) += wrow;
    }

    double prod_term = ez.colwise().sum().dot(et.colwise().sum());
    if (mask)
      for (int i = 0; i < n; ++i)
        for (int j : mask->heldout[i]) prod_term -= ez.row(i).dot(et.row(j));

    const double elbo = lse_sum - lgamma_const - prod_term +
                        gamma_block_term(z_shape, z_rate, config.alpha, config.beta) +
                        gamma_block_term(t_shape, t_rate, config.alpha, config.beta);
    if (!std::isfinite(elbo)) throw NumericError("pmf: ELBO became non-finite");
    fit.elbo_trace.push_back(elbo);
    if (sweep > 0 && std::fabs(elbo - prev_elbo) <= config.rel_tol * std::fabs(elbo)) {
      fit.converged = true;
      break;
    }
    prev_elbo = elbo;

    // q(z) update
    Eigen::RowVectorXd t_colsum = et.colwise().sum();
    z_shape = acc_z.array() + config.alpha;
    for (int i = 0; i < n; ++i) {
      z_rate.row(i) = t_colsum.array() + config.beta;
      if (mask)
        for (int j : mask->heldout[i]) z_rate.row(i) -= et.row(j);
    }
    refresh_z();

    // q(theta) update, rates use the refreshed E[z]
    Eigen::RowVectorXd z_colsum = ez.colwise().sum();
    RowMat held_z = RowMat::Zero(d, k);
    if (mask)
      for (int i = 0; i < n; ++i)
        for (int j : mask->heldout[i]) held_z.row(j) += ez.row(i);
    t_shape = acc_t.array() + config.alpha;
    for (int j = 0; j < d; ++j)
      t_rate.row(j) = z_colsum.array() + config.beta - held_z.row(j).array();
    refresh_t();
  }
  if (!fit.converged)
    std::fprintf(stderr, "pmf: CAVI stopped after %d sweeps without converging\n",
                 config.max_sweeps);

  fit.z_shape = z_shape;
  fit.z_rate = z_rate;
  fit.theta_shape = t_shape;
  fit.theta_rate = t_rate;
  return fit;
}

}  // namespace deconf
