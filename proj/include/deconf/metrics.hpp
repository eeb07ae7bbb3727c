#pragma once

#include <optional>
#include <vector>

#include "deconf/outcome.hpp"
#include "deconf/types.hpp"

namespace deconf {

// sqrt(mean squared difference)
double rmse(const Vector& estimate, const Vector& truth);

struct EvalSummary {
  double rmse = 0.0;
  double coverage_all = 0.0;                   // percent
  std::optional<double> coverage_causal;       // absent when the stratum is empty
  std::optional<double> coverage_noncausal;
};

// Percentage of causes whose 95% interval contains the truth, overall and
// split by the causal mask.
EvalSummary coverage(const EffectReport& report, const Vector& truth,
                     const std::vector<bool>& causal_mask);

// Convenience: mask derived from nonzero truth, rmse from report means.
EvalSummary evaluate_effects(const EffectReport& report, const Vector& truth);

}  // namespace deconf
