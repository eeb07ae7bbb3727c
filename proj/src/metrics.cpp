#include "deconf/metrics.hpp"

#include <cmath>

namespace deconf {

double rmse(const Vector& estimate, const Vector& truth) {
  if (estimate.size() != truth.size())
    throw ValidationError("rmse: length mismatch (" + std::to_string(estimate.size()) +
                          " vs " + std::to_string(truth.size()) + ")");
  if (estimate.size() == 0) throw ValidationError("rmse: empty input");
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(estimate.size()));
}

EvalSummary coverage(const EffectReport& report, const Vector& truth,
                     const std::vector<bool>& causal_mask) {
  const auto d = static_cast<Eigen::Index>(report.effects.size());
  if (truth.size() != d || causal_mask.size() != static_cast<size_t>(d))
    throw ValidationError("coverage: length mismatch");

  long covered_all = 0, covered_causal = 0, covered_noncausal = 0;
  long n_causal = 0, n_noncausal = 0;
  Vector means(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& e = report.effects[j];
    means(j) = e.mean;
    const bool covered = e.ci95_lo <= truth(j) && truth(j) <= e.ci95_hi;
    covered_all += covered;
    if (causal_mask[j]) {
      ++n_causal;
      covered_causal += covered;
    } else {
      ++n_noncausal;
      covered_noncausal += covered;
    }
  }

  EvalSummary summary;
  summary.rmse = rmse(means, truth);
  summary.coverage_all = 100.0 * covered_all / static_cast<double>(d);
  if (n_causal > 0)
    summary.coverage_causal = 100.0 * covered_causal / static_cast<double>(n_causal);
  if (n_noncausal > 0)
    summary.coverage_noncausal = 100.0 * covered_noncausal / static_cast<double>(n_noncausal);
  return summary;
}

EvalSummary evaluate_effects(const EffectReport& report, const Vector& truth) {
  std::vector<bool> mask(truth.size());
  for (Eigen::Index j = 0; j < truth.size(); ++j) mask[j] = truth(j) != 0.0;
  return coverage(report, truth, mask);
}

}  // namespace deconf
