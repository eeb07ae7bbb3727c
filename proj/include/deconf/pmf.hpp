#pragma once

#include <cstdint>
#include <vector>

#include "deconf/mask.hpp"
#include "deconf/types.hpp"

namespace deconf {

struct PmfConfig {
  int k = 30;
  double alpha = 0.3;  // Gamma prior shape, both latent blocks
  double beta = 0.3;   // Gamma prior rate
  std::uint64_t seed = 0;
  int max_sweeps = 1000;
  double rel_tol = 1e-6;
};

// Poisson matrix factorization, z_i ~ Gamma(alpha, beta), theta_j ~
// Gamma(alpha, beta), a_ij ~ Poisson(z_i . theta_j).  Coordinate-ascent
// variational inference with the usual multinomial auxiliary counts; the
// recorded ELBO trace is nondecreasing up to round-off.
struct PmfFit {
  Matrix z_shape, z_rate;          // N x K
  Matrix theta_shape, theta_rate;  // D x K
  double alpha = 0.3, beta = 0.3;
  std::vector<double> elbo_trace;
  bool converged = false;

  Matrix z_mean() const { return z_shape.array() / z_rate.array(); }
  Matrix theta_mean() const { return theta_shape.array() / theta_rate.array(); }
};

PmfFit fit_pmf(const ExposureMatrix& exposures, const PmfConfig& config,
               const HoldoutMask* mask = nullptr);

double digamma(double x);

}  // namespace deconf
