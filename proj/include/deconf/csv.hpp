#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deconf/types.hpp"

namespace deconf {

// CSV cohort layout (UTF-8, header row):
//   exposures: patient_id,<label1>,...,<labelD>
//   outcomes:  patient_id,outcome
//   truth:     label,true_effect[,patient_id,confounder_1,...,confounder_K]
// The truth sidecar carries two independent column groups: per-cause rows
// under (label, true_effect) and per-patient rows under (patient_id,
// confounder_k); shorter groups leave trailing cells empty.
struct CohortFiles {
  std::string exposures_path;
  std::string outcomes_path;
  std::optional<std::string> truth_path;
  char delimiter = ',';
};

struct LoadStats {
  std::size_t dropped_missing_outcome = 0;
};

Cohort load_cohort(const CohortFiles& files, LoadStats* stats = nullptr);
void save_cohort(const Cohort& cohort, const CohortFiles& files);

// Exposure matrix alone (factor fitting does not need outcomes).
ExposureMatrix load_exposure_matrix(const std::string& path,
                                    std::vector<std::string>* labels = nullptr,
                                    char delimiter = ',');

// Drops the floor(quantile*D) least frequently assigned causes, ranked by
// (#patients with nonzero exposure, label) ascending.  Retained columns are
// copied verbatim.
Cohort filter_rare_causes(const Cohort& cohort, double quantile,
                          std::vector<std::string>* removed = nullptr);

}  // namespace deconf
