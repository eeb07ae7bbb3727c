#include "deconf/types.hpp"

namespace deconf {

const char* factor_model_name(FactorModelKind kind) {
  switch (kind) {
    case FactorModelKind::Ppca: return "ppca";
    case FactorModelKind::Pmf: return "pmf";
    case FactorModelKind::Def: return "def";
  }
  return "?";
}

const Cohort& validate_cohort(const Cohort& cohort) {
  const auto n = cohort.exposures.n_patients();
  const auto d = cohort.exposures.n_causes();
  if (n < 1) throw ValidationError("exposures: need at least one patient");
  if (d < 2)
    throw ValidationError("exposures: multiple causal inference needs at least 2 causes, got " +
                          std::to_string(d));
  if (!cohort.exposures.values.allFinite())
    throw ValidationError("exposures: non-finite entry");
  if (cohort.exposures.binary) {
    const auto& v = cohort.exposures.values;
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (v(i, j) != 0.0 && v(i, j) != 1.0)
          throw ValidationError("exposures: binary matrix holds non-binary value " +
                                std::to_string(v(i, j)) + " at row " + std::to_string(i) +
                                ", column " + std::to_string(j));
  }
  if (cohort.outcomes.size() != n)
    throw ValidationError("outcomes: length " + std::to_string(cohort.outcomes.size()) +
                          " does not match " + std::to_string(n) + " patients");
  if (!cohort.outcomes.allFinite())
    throw ValidationError("outcomes: non-finite entry");
  if (!cohort.cause_labels.empty() &&
      cohort.cause_labels.size() != static_cast<size_t>(d))
    throw ValidationError("cause_labels: " + std::to_string(cohort.cause_labels.size()) +
                          " labels for " + std::to_string(d) + " causes");
  if (cohort.true_confounders && cohort.true_confounders->rows() != n)
    throw ValidationError("true_confounders: row count " +
                          std::to_string(cohort.true_confounders->rows()) +
                          " does not match " + std::to_string(n) + " patients");
  if (cohort.true_effects && cohort.true_effects->size() != d)
    throw ValidationError("true_effects: length " +
                          std::to_string(cohort.true_effects->size()) +
                          " does not match " + std::to_string(d) + " causes");
  return cohort;
}

bool cohorts_equal(const Cohort& a, const Cohort& b) {
  if (a.exposures.binary != b.exposures.binary) return false;
  if (a.exposures.values.rows() != b.exposures.values.rows() ||
      a.exposures.values.cols() != b.exposures.values.cols())
    return false;
  if (a.exposures.values != b.exposures.values) return false;
  if (a.outcomes.size() != b.outcomes.size() || a.outcomes != b.outcomes) return false;
  if (a.cause_labels != b.cause_labels) return false;
  if (a.true_confounders.has_value() != b.true_confounders.has_value()) return false;
  if (a.true_confounders &&
      (a.true_confounders->rows() != b.true_confounders->rows() ||
       a.true_confounders->cols() != b.true_confounders->cols() ||
       *a.true_confounders != *b.true_confounders))
    return false;
  if (a.true_effects.has_value() != b.true_effects.has_value()) return false;
  if (a.true_effects && (a.true_effects->size() != b.true_effects->size() ||
                         *a.true_effects != *b.true_effects))
    return false;
  return true;
}

}  // namespace deconf
