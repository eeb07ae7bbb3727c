#pragma once

#include <cstdint>
#include <vector>

#include "deconf/mask.hpp"
#include "deconf/types.hpp"

namespace deconf {

// Two-layer deep exponential family over counts:
//   w0_dk, w1_k, z2_ik ~ Gamma(alpha, beta)
//   z1_ik | z2_i ~ Gamma(alpha, g(w1_k . z2_i))
//   a_id | z1_i  ~ Poisson(g(w0_d . z1_i))
// with g = softplus floored at link_floor.  Inference is gradient ascent on
// a reparameterized ELBO under a mean-field log-normal family.
struct DefConfig {
  int k1 = 30;
  int k2 = 4;
  double alpha = 0.3;
  double beta = 0.3;
  std::uint64_t seed = 0;
  int steps = 10000;
  double learning_rate = 0.05;
  double link_floor = 1e-5;
  int elbo_window = 100;  // trailing window for the smoothed trace
};

// Log-normal variational parameters (location, log scale) per latent block.
struct DefParams {
  Matrix z1_loc, z1_logs;  // N x K1
  Matrix z2_loc, z2_logs;  // N x K2
  Matrix w1_loc, w1_logs;  // K1 x K2
  Matrix w0_loc, w0_logs;  // D x K1

  static DefParams zeros(int n, int d, int k1, int k2);

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(z1_loc); fn(z1_logs); fn(z2_loc); fn(z2_logs);
    fn(w1_loc); fn(w1_logs); fn(w0_loc); fn(w0_logs);
  }
};

struct DefFit {
  DefParams params;
  double alpha = 0.3, beta = 0.3;
  double link_floor = 1e-5;
  std::vector<double> elbo_trace;  // raw per-step ELBO estimates
  int best_step = 0;               // step whose smoothed ELBO was kept

  Matrix layer1_mean() const;  // E[z1] = exp(loc + s^2/2), N x K1
  Matrix layer2_mean() const;  // N x K2
  Matrix w0_mean() const;      // D x K1

  double smoothed_elbo_at(int step, int window = 100) const;
};

DefFit fit_def(const ExposureMatrix& exposures, const DefConfig& config,
               const HoldoutMask* mask = nullptr);

// Single-sample reparameterized ELBO at fixed noise; fills the gradient with
// respect to every variational parameter when grad is non-null.  Exposed so
// the gradient can be checked against finite differences under common
// random numbers.
double def_elbo(const ExposureMatrix& exposures, const HoldoutMask* mask,
                const DefConfig& config, const DefParams& params,
                const DefParams& noise, DefParams* grad = nullptr);

}  // namespace deconf
