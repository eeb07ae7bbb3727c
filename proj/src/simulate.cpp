#include "deconf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "deconf/rng.hpp"

namespace deconf {

namespace {

std::vector<std::string> numbered_labels(int d) {
  int width = 1;
  for (int v = d; v >= 10; v /= 10) ++width;
  width = std::min(width, 9);
  std::vector<std::string> labels(d);
  char buf[32];
  for (int j = 0; j < d; ++j) {
    std::snprintf(buf, sizeof(buf), "med%0*d", width, j + 1);
    labels[j] = buf;
  }
  return labels;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Cohort simulate_two_med(const TwoMedConfig& config) {
  if (config.n_patients < 2)
    throw ValidationError("two-med simulation needs at least 2 patients");
  const int n = config.n_patients;
  Rng rng(derive_seed(config.seed, 0x74776f6dULL));

  Matrix c(n, 1);
  Matrix a(n, 2);
  Vector y(n);
  const bool causal = config.setup == TwoMedConfig::Setup::OneCause;
  for (int i = 0; i < n; ++i) {
    const double ci = rng.normal();
    c(i, 0) = ci;
    a(i, 0) = 0.3 * ci + rng.normal();
    a(i, 1) = 0.4 * ci + rng.normal();
    y(i) = 0.5 * ci + (causal ? 0.3 * a(i, 1) : 0.0) + rng.normal();
  }

  Cohort cohort;
  cohort.exposures.values = std::move(a);
  cohort.exposures.binary = false;
  cohort.outcomes = std::move(y);
  cohort.cause_labels = numbered_labels(2);
  cohort.true_confounders = std::move(c);
  Vector effects(2);
  effects << 0.0, (causal ? 0.3 : 0.0);
  cohort.true_effects = std::move(effects);
  return validate_cohort(cohort), cohort;
}

Cohort simulate_multi_med(const MultiMedConfig& config) {
  if (config.n_patients < 2)
    throw ValidationError("multi-med simulation needs at least 2 patients");
  if (config.n_causes < 2)
    throw ValidationError("multi-med simulation needs at least 2 causes");
  if (config.k_confounder < 1)
    throw ValidationError("multi-med simulation needs k_confounder >= 1");
  if (!(config.sparsity >= 0.0 && config.sparsity <= 1.0))
    throw ValidationError("sparsity must lie in [0, 1], got " +
                          std::to_string(config.sparsity));

  const int n = config.n_patients;
  const int d = config.n_causes;
  const int k = config.k_confounder;
  Rng rng(derive_seed(config.seed, 0x6d756c74ULL));

  Matrix c(n, k);
  for (int i = 0; i < n; ++i)
    for (int kk = 0; kk < k; ++kk) c(i, kk) = rng.normal();

  Matrix lambda(k, d);
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < d; ++j) lambda(kk, j) = 0.5 * rng.normal();

  Vector beta(d);
  for (int j = 0; j < d; ++j) beta(j) = 0.25 * rng.normal();
  const long n_zero = std::lround(config.sparsity * d);
  std::vector<int> order(d);
  for (int j = 0; j < d; ++j) order[j] = j;
  for (int j = 0; j < d - 1; ++j) {
    const auto pick = j + static_cast<int>(rng.uniform_below(d - j));
    std::swap(order[j], order[pick]);
  }
  for (long t = 0; t < n_zero && t < d; ++t) beta(order[t]) = 0.0;

  Vector gamma(k);
  for (int kk = 0; kk < k; ++kk) gamma(kk) = 0.25 * rng.normal();

  Matrix a(n, d);
  const Matrix logits = c * lambda;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      a(i, j) = rng.bernoulli(logistic(logits(i, j))) ? 1.0 : 0.0;

  Vector y = a * beta + c * gamma;
  for (int i = 0; i < n; ++i) y(i) += rng.normal();

  Cohort cohort;
  cohort.exposures.values = std::move(a);
  cohort.exposures.binary = true;
  cohort.outcomes = std::move(y);
  cohort.cause_labels = numbered_labels(d);
  cohort.true_confounders = std::move(c);
  cohort.true_effects = std::move(beta);
  return validate_cohort(cohort), cohort;
}

}  // namespace deconf
