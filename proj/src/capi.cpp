#include "deconf/deconf.h"

#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "deconf/check.hpp"
#include "deconf/csv.hpp"
#include "deconf/experiment.hpp"
#include "deconf/factor.hpp"
#include "deconf/outcome.hpp"
#include "deconf/rng.hpp"
#include "deconf/simulate.hpp"
#include "deconf/types.hpp"

using namespace deconf;

extern "C" {

struct deconf_cohort {
  Cohort value;
};
struct deconf_factor {
  FactorArtifact value;
};
struct deconf_check {
  CheckResult value;
};
struct deconf_effects {
  EffectReport value;
};
struct deconf_run {
  ExperimentReport value;
};

}  // extern "C"

namespace {

thread_local std::string g_last_error;

deconf_status fail(deconf_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
deconf_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const CheckFailedError& e) {
    return fail(DECONF_ERR_CHECK_FAILED, e.what());
  } catch (const ValidationError& e) {
    return fail(DECONF_ERR_VALIDATION, e.what());
  } catch (const ParseError& e) {
    return fail(DECONF_ERR_PARSE, e.what());
  } catch (const ConfigError& e) {
    return fail(DECONF_ERR_CONFIG, e.what());
  } catch (const NumericError& e) {
    return fail(DECONF_ERR_NUMERIC, e.what());
  } catch (const IoError& e) {
    return fail(DECONF_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DECONF_ERR_UNKNOWN, e.what());
  } catch (...) {
    return fail(DECONF_ERR_UNKNOWN, "unknown error");
  }
}

std::vector<std::uint64_t> parse_seed_list(const char* text) {
  std::vector<std::uint64_t> seeds;
  if (!text) return seeds;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    seeds.push_back(std::strtoull(token.c_str(), nullptr, 10));
  }
  return seeds;
}

std::vector<int> parse_int_list(const char* text) {
  std::vector<int> values;
  if (!text) return values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    values.push_back(std::atoi(token.c_str()));
  }
  return values;
}

deconf_status copy_to_buffer(const std::string& text, char* buffer, size_t buffer_len) {
  if (!buffer || buffer_len == 0)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "output buffer is null or empty");
  const size_t n = std::min(buffer_len - 1, text.size());
  std::memcpy(buffer, text.data(), n);
  buffer[n] = '\0';
  return DECONF_OK;
}

FactorConfig spec_to_factor_config(const deconf_factor_spec& spec) {
  if (!spec.model) throw ConfigError("factor spec: model name is null");
  FactorConfig fc;
  const std::string model = spec.model;
  if (model == "ppca") {
    fc.kind = FactorModelKind::Ppca;
    fc.ppca.k = spec.k > 0 ? spec.k : 1;
  } else if (model == "pmf") {
    fc.kind = FactorModelKind::Pmf;
    fc.pmf.k = spec.k > 0 ? spec.k : 30;
    if (spec.gamma_shape > 0.0) fc.pmf.alpha = spec.gamma_shape;
    if (spec.gamma_rate > 0.0) fc.pmf.beta = spec.gamma_rate;
  } else if (model == "def") {
    fc.kind = FactorModelKind::Def;
    if (spec.def_k1 > 0) fc.def.k1 = spec.def_k1;
    if (spec.def_k2 > 0) fc.def.k2 = spec.def_k2;
    if (spec.gamma_shape > 0.0) fc.def.alpha = spec.gamma_shape;
    if (spec.gamma_rate > 0.0) fc.def.beta = spec.gamma_rate;
    if (spec.def_steps > 0) fc.def.steps = spec.def_steps;
    if (spec.def_learning_rate > 0.0) fc.def.learning_rate = spec.def_learning_rate;
  } else {
    throw ConfigError("factor spec: unknown model '" + model + "'");
  }
  return fc;
}

}  // namespace

extern "C" {

const char* deconf_version(void) { return kToolVersion; }

const char* deconf_last_error(void) { return g_last_error.c_str(); }

/* ---- cohorts ---------------------------------------------------------- */

deconf_status deconf_cohort_simulate_two_med(int n_patients, int setup, uint64_t seed,
                                             deconf_cohort** out) {
  if (!out) return fail(DECONF_ERR_INVALID_ARGUMENT, "out pointer is null");
  return guarded([&] {
    TwoMedConfig c;
    c.n_patients = n_patients;
    c.setup = setup ? TwoMedConfig::Setup::OneCause : TwoMedConfig::Setup::NoCause;
    c.seed = seed;
    *out = new deconf_cohort{simulate_two_med(c)};
    return DECONF_OK;
  });
}

deconf_status deconf_cohort_simulate_multi_med(int n_patients, int n_causes,
                                               int k_confounder, double sparsity,
                                               uint64_t seed, deconf_cohort** out) {
  if (!out) return fail(DECONF_ERR_INVALID_ARGUMENT, "out pointer is null");
  return guarded([&] {
    MultiMedConfig c;
    if (n_patients > 0) c.n_patients = n_patients;
    if (n_causes > 0) c.n_causes = n_causes;
    if (k_confounder > 0) c.k_confounder = k_confounder;
    if (sparsity >= 0.0) c.sparsity = sparsity;
    c.seed = seed;
    *out = new deconf_cohort{simulate_multi_med(c)};
    return DECONF_OK;
  });
}

deconf_status deconf_cohort_load(const char* exposures_csv, const char* outcomes_csv,
                                 const char* truth_csv, deconf_cohort** out) {
  if (!out || !exposures_csv || !outcomes_csv)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_cohort_load");
  return guarded([&] {
    CohortFiles files;
    files.exposures_path = exposures_csv;
    files.outcomes_path = outcomes_csv;
    if (truth_csv && truth_csv[0]) files.truth_path = truth_csv;
    *out = new deconf_cohort{load_cohort(files)};
    return DECONF_OK;
  });
}

deconf_status deconf_cohort_save(const deconf_cohort* cohort, const char* exposures_csv,
                                 const char* outcomes_csv, const char* truth_csv) {
  if (!cohort || !exposures_csv || !outcomes_csv)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_cohort_save");
  return guarded([&] {
    CohortFiles files;
    files.exposures_path = exposures_csv;
    files.outcomes_path = outcomes_csv;
    if (truth_csv && truth_csv[0]) files.truth_path = truth_csv;
    save_cohort(cohort->value, files);
    return DECONF_OK;
  });
}

deconf_status deconf_cohort_filter_rare(const deconf_cohort* cohort, double quantile,
                                        deconf_cohort** out) {
  if (!cohort || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_cohort_filter_rare");
  return guarded([&] {
    *out = new deconf_cohort{filter_rare_causes(cohort->value, quantile)};
    return DECONF_OK;
  });
}

deconf_status deconf_cohort_n_patients(const deconf_cohort* cohort, int64_t* out) {
  if (!cohort || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  *out = cohort->value.exposures.n_patients();
  return DECONF_OK;
}

deconf_status deconf_cohort_n_causes(const deconf_cohort* cohort, int64_t* out) {
  if (!cohort || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  *out = cohort->value.exposures.n_causes();
  return DECONF_OK;
}

deconf_status deconf_cohort_cause_label(const deconf_cohort* cohort, int64_t index,
                                        const char** out) {
  if (!cohort || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  if (index < 0 || index >= static_cast<int64_t>(cohort->value.cause_labels.size()))
    return fail(DECONF_ERR_INVALID_ARGUMENT, "cause index out of range");
  *out = cohort->value.cause_labels[static_cast<size_t>(index)].c_str();
  return DECONF_OK;
}

void deconf_cohort_free(deconf_cohort* cohort) { delete cohort; }

/* ---- factor models ----------------------------------------------------- */

deconf_status deconf_factor_fit(const deconf_cohort* cohort,
                                const deconf_factor_spec* spec, deconf_factor** out) {
  if (!cohort || !spec || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_factor_fit");
  return guarded([&] {
    const FactorConfig fc = spec_to_factor_config(*spec);
    const double fraction = spec->holdout_fraction > 0.0 ? spec->holdout_fraction : 0.2;
    *out = new deconf_factor{
        make_factor_artifact(cohort->value.exposures, fc, spec->seed, fraction)};
    return DECONF_OK;
  });
}

deconf_status deconf_factor_save(const deconf_factor* factor, const char* path) {
  if (!factor || !path)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_factor_save");
  return guarded([&] {
    save_factor_artifact(factor->value, path);
    return DECONF_OK;
  });
}

deconf_status deconf_factor_load(const char* path, deconf_factor** out) {
  if (!path || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_factor_load");
  return guarded([&] {
    *out = new deconf_factor{load_factor_artifact(path)};
    return DECONF_OK;
  });
}

void deconf_factor_free(deconf_factor* factor) { delete factor; }

/* ---- predictive check --------------------------------------------------- */

deconf_status deconf_check_run(const deconf_factor* factor, const deconf_cohort* cohort,
                               int n_rep, int n_post, double band_lo, double band_hi,
                               uint64_t seed, deconf_check** out) {
  if (!factor || !cohort || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_check_run");
  return guarded([&] {
    CheckConfig cc;
    cc.n_rep = n_rep > 0 ? n_rep : 100;
    cc.n_post = n_post > 0 ? n_post : 100;
    if (band_hi > 0.0) {
      cc.band_lo = band_lo;
      cc.band_hi = band_hi;
    }
    cc.seed = seed ? seed : derive_seed(factor->value.seed, seed_tag::check);
    *out = new deconf_check{predictive_score(factor->value.masked_fit,
                                             cohort->value.exposures, factor->value.mask,
                                             cc)};
    return DECONF_OK;
  });
}

deconf_status deconf_check_score(const deconf_check* check, double* out) {
  if (!check || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  *out = check->value.score;
  return DECONF_OK;
}

deconf_status deconf_check_passed(const deconf_check* check, int* out) {
  if (!check || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  *out = check->value.pass ? 1 : 0;
  return DECONF_OK;
}

deconf_status deconf_check_write(const deconf_check* check, const char* path) {
  if (!check || !path) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    write_check_report(check->value, path);
    return DECONF_OK;
  });
}

void deconf_check_free(deconf_check* check) { delete check; }

/* ---- effect estimation -------------------------------------------------- */

deconf_status deconf_effects_estimate(const deconf_cohort* cohort,
                                      const deconf_factor* factor,
                                      const deconf_check* check, const char* mode,
                                      int override_check, double cause_precision,
                                      double confounder_precision,
                                      deconf_effects** out) {
  if (!cohort || !mode || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_effects_estimate");
  return guarded([&] {
    const std::string mode_s = mode;
    std::optional<Matrix> confounders;
    if (mode_s == "adjusted") {
      if (!factor) throw ConfigError("adjusted estimation requires a factor model");
      if (!override_check) {
        if (!check)
          throw CheckFailedError(
              "adjusted estimation requires a predictive-check result (or an override)",
              -1.0);
        if (!check->value.pass)
          throw CheckFailedError("predictive check failed with score " +
                                     std::to_string(check->value.score),
                                 check->value.score);
      }
      confounders = project_substitute_onto_causes(
          substitute_confounder(factor->value.full_fit,
                                factor->value.config.def_concat_layer2)
              .values,
          cohort->value.exposures);
    } else if (mode_s == "oracle") {
      if (!cohort->value.true_confounders)
        throw ConfigError("oracle estimation requires true confounders in the cohort");
      confounders = *cohort->value.true_confounders;
    } else if (mode_s != "unadjusted") {
      throw ConfigError("unknown estimation mode '" + mode_s + "'");
    }

    RegressionPrior prior =
        RegressionPrior::defaults_for(cohort->value.exposures.n_causes(),
                                      cohort->value.exposures.n_patients());
    if (cause_precision > 0.0) prior.cause_precision = cause_precision;
    if (confounder_precision > 0.0) prior.confounder_precision = confounder_precision;

    OutcomePosterior post = fit_outcome(cohort->value.outcomes, cohort->value.exposures,
                                        confounders, prior, cohort->value.cause_labels);
    *out = new deconf_effects{effect_report(post)};
    return DECONF_OK;
  });
}

deconf_status deconf_effects_count(const deconf_effects* effects, int64_t* out) {
  if (!effects || !out) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  *out = static_cast<int64_t>(effects->value.effects.size());
  return DECONF_OK;
}

deconf_status deconf_effects_row(const deconf_effects* effects, int64_t index,
                                 const char** label, double* mean, double* std_err,
                                 double* ci95_lo, double* ci95_hi, double* tail_prob,
                                 int* causal) {
  if (!effects) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  if (index < 0 || index >= static_cast<int64_t>(effects->value.effects.size()))
    return fail(DECONF_ERR_INVALID_ARGUMENT, "effect index out of range");
  const auto& e = effects->value.effects[static_cast<size_t>(index)];
  if (label) *label = e.label.c_str();
  if (mean) *mean = e.mean;
  if (std_err) *std_err = e.std_err;
  if (ci95_lo) *ci95_lo = e.ci95_lo;
  if (ci95_hi) *ci95_hi = e.ci95_hi;
  if (tail_prob) *tail_prob = e.tail_prob;
  if (causal) *causal = e.causal ? 1 : 0;
  return DECONF_OK;
}

deconf_status deconf_effects_write_tsv(const deconf_effects* effects, const char* path) {
  if (!effects || !path) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    write_effects_tsv(effects->value, path);
    return DECONF_OK;
  });
}

deconf_status deconf_effects_write_svg(const deconf_effects* effects, const char* path) {
  if (!effects || !path) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::ofstream out(path);
    if (!out) throw IoError(std::string("cannot write '") + path + "'");
    out << render_forest_svg(effects->value);
    return DECONF_OK;
  });
}

void deconf_effects_free(deconf_effects* effects) { delete effects; }

/* ---- end-to-end experiments --------------------------------------------- */

deconf_status deconf_run_experiment(const deconf_run_spec* spec, deconf_run** out) {
  if (!spec || !out)
    return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument to deconf_run_experiment");
  return guarded([&] {
    ExperimentConfig config;
    if (!spec->experiment) throw ConfigError("run spec: experiment is null");
    if (!spec->factor_model) throw ConfigError("run spec: factor_model is null");
    config.experiment = experiment_from_name(spec->experiment);
    config.model = adjustment_from_name(spec->factor_model);
    config.k_ladder = parse_int_list(spec->k_ladder);
    if (spec->def_k1 > 0) config.def_k1 = spec->def_k1;
    if (spec->def_k2 > 0) config.def_k2 = spec->def_k2;
    if (spec->gamma_shape > 0.0) config.gamma_shape = spec->gamma_shape;
    if (spec->gamma_rate > 0.0) config.gamma_rate = spec->gamma_rate;
    if (spec->def_steps > 0) config.def_steps = spec->def_steps;
    config.n_patients = spec->n_patients;
    if (spec->multi_n_causes > 0) config.multi.n_causes = spec->multi_n_causes;
    if (spec->multi_k_confounder > 0) config.multi.k_confounder = spec->multi_k_confounder;
    if (spec->multi_sparsity >= 0.0) config.multi.sparsity = spec->multi_sparsity;
    if (spec->custom_exposures) config.custom.exposures_path = spec->custom_exposures;
    if (spec->custom_outcomes) config.custom.outcomes_path = spec->custom_outcomes;
    if (spec->custom_truth && spec->custom_truth[0])
      config.custom.truth_path = spec->custom_truth;
    config.rare_quantile = spec->rare_quantile;
    if (spec->holdout_fraction > 0.0) config.holdout_fraction = spec->holdout_fraction;
    if (spec->n_rep > 0) config.n_rep = spec->n_rep;
    if (spec->n_post > 0) config.n_post = spec->n_post;
    if (spec->band_hi > 0.0) {
      config.band_lo = spec->band_lo;
      config.band_hi = spec->band_hi;
    }
    config.override_check = spec->override_check != 0;
    config.cause_precision = spec->cause_precision;
    config.confounder_precision = spec->confounder_precision;
    const auto seeds = parse_seed_list(spec->seeds);
    if (!seeds.empty()) config.seeds = seeds;
    *out = new deconf_run{run_experiment(config)};
    return DECONF_OK;
  });
}

deconf_status deconf_run_emit(const deconf_run* run, const char* out_dir) {
  if (!run || !out_dir) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    emit_report(run->value, out_dir);
    return DECONF_OK;
  });
}

deconf_status deconf_run_summary(const deconf_run* run, char* buffer, size_t buffer_len) {
  if (!run) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::ostringstream out;
    const Vector means = run->value.mean_effects();
    out << "experiment=" << experiment_name(run->value.config.experiment)
        << " model=" << adjustment_name(run->value.config.model)
        << " seeds=" << run->value.seeds.size() << "\n";
    for (Eigen::Index j = 0; j < means.size(); ++j)
      out << run->value.cause_labels[j] << ": mean " << means(j) << "\n";
    if (const auto eval = run->value.mean_eval()) {
      out << "rmse " << eval->rmse << ", coverage_all " << eval->coverage_all << "%\n";
    }
    return copy_to_buffer(out.str(), buffer, buffer_len);
  });
}

void deconf_run_free(deconf_run* run) { delete run; }

deconf_status deconf_summarize_dir(const char* dir, char* buffer, size_t buffer_len) {
  if (!dir) return fail(DECONF_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { return copy_to_buffer(summarize_run_dir(dir), buffer, buffer_len); });
}

}  // extern "C"
