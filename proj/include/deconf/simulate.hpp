#pragma once

#include <cstdint>

#include "deconf/types.hpp"

namespace deconf {

// Two continuous causes sharing one scalar confounder:
//   C ~ N(0,1), A1 = 0.3C + e1, A2 = 0.4C + e2,
//   Y = 0.5C + e            (NoCause)
//   Y = 0.5C + 0.3 A2 + e   (OneCause)
// with independent standard-normal noise per variable.
struct TwoMedConfig {
  enum class Setup { NoCause, OneCause };
  int n_patients = 1000;
  Setup setup = Setup::NoCause;
  std::uint64_t seed = 0;
};

// Binary cause matrix driven by a k-dimensional confounder:
//   C_ik ~ N(0,1), lambda_kj ~ N(0, 0.5^2), A_ij ~ Bern(logistic(lambda_j . C_i)),
//   Y = A beta + C gamma + e, beta_j ~ N(0, 0.25^2) with a sparsity fraction
//   zeroed, gamma_k ~ N(0, 0.25^2).
struct MultiMedConfig {
  int n_patients = 5000;
  int n_causes = 50;
  int k_confounder = 10;
  double sparsity = 0.8;
  std::uint64_t seed = 0;
};

Cohort simulate_two_med(const TwoMedConfig& config);
Cohort simulate_multi_med(const MultiMedConfig& config);

}  // namespace deconf
