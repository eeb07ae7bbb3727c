#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deconf/check.hpp"
#include "deconf/csv.hpp"
#include "deconf/factor.hpp"
#include "deconf/metrics.hpp"
#include "deconf/outcome.hpp"
#include "deconf/simulate.hpp"
#include "deconf/types.hpp"

namespace deconf {

extern const char* kToolVersion;

enum class ExperimentKind { TwoMedNoCause, TwoMedOneCause, MultiMed, CustomCohort };
enum class AdjustmentModel { Ppca, Pmf, Def, None, Oracle };

const char* experiment_name(ExperimentKind kind);
const char* adjustment_name(AdjustmentModel model);
ExperimentKind experiment_from_name(const std::string& name);
AdjustmentModel adjustment_from_name(const std::string& name);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::TwoMedNoCause;
  AdjustmentModel model = AdjustmentModel::Ppca;

  // factor-model hyperparameters; k_ladder is tried in order and the first
  // dimensionality passing the predictive check wins
  std::vector<int> k_ladder;  // empty -> per-experiment default
  int def_k1 = 30, def_k2 = 4;
  double gamma_shape = 0.3, gamma_rate = 0.3;
  int def_steps = 10000;
  double def_learning_rate = 0.05;
  bool def_concat_layer2 = false;

  // cohort source
  int n_patients = 0;  // 0 -> experiment default (1000 two-med, 5000 multi-med)
  MultiMedConfig multi;
  CohortFiles custom;
  double rare_quantile = 0.0;

  // predictive check
  double holdout_fraction = 0.2;
  int n_rep = 100;
  int n_post = 100;
  double band_lo = 0.05, band_hi = 0.95;
  bool override_check = false;

  // outcome model; nonpositive precision -> per-design default
  double cause_precision = 0.0;
  double confounder_precision = 0.0;

  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;
};

struct SeedResult {
  std::uint64_t seed = 0;
  int k_used = 0;                       // latent dimension kept (factor models)
  std::optional<CheckResult> check;
  EffectReport effects;
  OutcomePosterior posterior;
  std::optional<EvalSummary> eval;      // when ground truth is known
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> cause_labels;
  std::optional<Vector> true_effects;
  std::vector<SeedResult> seeds;

  Vector mean_effects() const;          // per cause, averaged over seeds
  std::optional<EvalSummary> mean_eval() const;
};

Cohort materialize_cohort(const ExperimentConfig& config, std::uint64_t seed);

// simulate/load -> (fit factor -> check -> substitute) -> outcome -> metrics,
// per seed.  Throws CheckFailedError when the check fails without override.
ExperimentReport run_experiment(const ExperimentConfig& config);

// TSV tables, per-seed forest plots, check reports and a manifest able to
// reproduce the run byte for byte.
void emit_report(const ExperimentReport& report, const std::string& out_dir);

std::string render_forest_svg(const EffectReport& report);
void write_effects_tsv(const EffectReport& report, const std::string& path);

// Human-readable summary of a run directory (the `report` CLI subcommand).
std::string summarize_run_dir(const std::string& dir);

}  // namespace deconf
