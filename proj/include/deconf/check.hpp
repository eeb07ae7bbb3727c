#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deconf/factor.hpp"
#include "deconf/mask.hpp"
#include "deconf/types.hpp"

namespace deconf {

struct CheckConfig {
  int n_rep = 100;
  int n_post = 100;
  double band_lo = 0.05;
  double band_hi = 0.95;
  std::uint64_t seed = 0;
};

struct HeldoutLoglik {
  double value = 0.0;
  double mc_std_err = 0.0;  // across posterior draws
};

// Test statistic: E_Z[log p(heldout | Z, theta_hat) | observed], Monte Carlo
// over n_post posterior draws.
HeldoutLoglik heldout_loglik(const FactorFit& fit, const ExposureMatrix& exposures,
                             const HoldoutMask& mask, int n_post, std::uint64_t seed);

struct CheckResult {
  double score = 0.0;         // p(t(rep) < t(heldout)), ties at half weight
  double observed_stat = 0.0;
  std::vector<double> replicated_stats;
  bool pass = false;          // score within [band_lo, band_hi]
  bool warn = false;          // score outside the soft band [0.2, 0.8]
  double band_lo = 0.05, band_hi = 0.95;
  int n_post = 0;
};

CheckResult predictive_score(const FactorFit& fit, const ExposureMatrix& exposures,
                             const HoldoutMask& mask, const CheckConfig& config);

// Replicated heldout entries, one row per replicate, columns in row-major
// mask order.  Shares seed derivation with predictive_score.
Matrix posterior_predictive_samples(const FactorFit& fit, const ExposureMatrix& exposures,
                                    const HoldoutMask& mask, int n_rep,
                                    std::uint64_t seed);

// Fraction of replicated statistics strictly below the observed one, ties
// counted as 1/2.  Invariant under any common strictly monotone transform.
double score_from_stats(double observed, const std::vector<double>& replicated);

void write_check_report(const CheckResult& result, const std::string& path);

}  // namespace deconf
