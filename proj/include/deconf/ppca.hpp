#pragma once

#include <cstdint>
#include <vector>

#include "deconf/mask.hpp"
#include "deconf/types.hpp"

namespace deconf {

struct PpcaConfig {
  int k = 1;
  std::uint64_t seed = 0;
  int max_iters = 500;
  double rel_tol = 1e-8;
};

// Linear-Gaussian factor model, z ~ N(0, I_K), a_j | z ~ N(z . theta_j, s2),
// fitted by EM on the observed-entry likelihood.
struct PpcaFit {
  Matrix loadings;       // K x D
  double noise_var = 1.0;
  double prior_scale = 1.0;  // fixed
  Matrix z_post_mean;    // N x K, conditioned on each row's observed entries
  Matrix z_post_cov;     // K x K, shared fully-observed posterior covariance
  std::vector<double> loglik_trace;
  bool converged = false;

  // Exact Gaussian posterior of z for one exposure row given its observed
  // entries (heldout columns excluded).
  void posterior_row(const Vector& row, const std::vector<int>& heldout, Vector& mean,
                     Matrix& cov) const;
};

PpcaFit fit_ppca(const ExposureMatrix& exposures, const PpcaConfig& config,
                 const HoldoutMask* mask = nullptr);

}  // namespace deconf
