/* C API for the deconf shared library.
 *
 * All functions return deconf_status; out-parameters are written only on
 * DECONF_OK.  Objects are opaque handles released with the matching _free
 * call (every _free tolerates NULL).  deconf_last_error() describes the most
 * recent failure on the calling thread.
 */
#ifndef DECONF_DECONF_H
#define DECONF_DECONF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum deconf_status {
  DECONF_OK = 0,
  DECONF_ERR_INVALID_ARGUMENT = 1,
  DECONF_ERR_VALIDATION = 2,
  DECONF_ERR_PARSE = 3,
  DECONF_ERR_CONFIG = 4,
  DECONF_ERR_NUMERIC = 5,
  DECONF_ERR_IO = 6,
  DECONF_ERR_CHECK_FAILED = 7,
  DECONF_ERR_UNKNOWN = 8
} deconf_status;

typedef struct deconf_cohort deconf_cohort;
typedef struct deconf_factor deconf_factor;   /* masked fit + full fit + mask */
typedef struct deconf_check deconf_check;
typedef struct deconf_effects deconf_effects;
typedef struct deconf_run deconf_run;

const char* deconf_version(void);
const char* deconf_last_error(void);

/* ---- cohorts ---------------------------------------------------------- */

/* setup: 0 = no causal medication, 1 = one causal medication */
deconf_status deconf_cohort_simulate_two_med(int n_patients, int setup, uint64_t seed,
                                             deconf_cohort** out);
deconf_status deconf_cohort_simulate_multi_med(int n_patients, int n_causes,
                                               int k_confounder, double sparsity,
                                               uint64_t seed, deconf_cohort** out);
/* truth_csv may be NULL */
deconf_status deconf_cohort_load(const char* exposures_csv, const char* outcomes_csv,
                                 const char* truth_csv, deconf_cohort** out);
deconf_status deconf_cohort_save(const deconf_cohort* cohort, const char* exposures_csv,
                                 const char* outcomes_csv, const char* truth_csv);
deconf_status deconf_cohort_filter_rare(const deconf_cohort* cohort, double quantile,
                                        deconf_cohort** out);
deconf_status deconf_cohort_n_patients(const deconf_cohort* cohort, int64_t* out);
deconf_status deconf_cohort_n_causes(const deconf_cohort* cohort, int64_t* out);
deconf_status deconf_cohort_cause_label(const deconf_cohort* cohort, int64_t index,
                                        const char** out);
void deconf_cohort_free(deconf_cohort* cohort);

/* ---- factor models ----------------------------------------------------- */

typedef struct deconf_factor_spec {
  const char* model;     /* "ppca" | "pmf" | "def" */
  int k;                 /* ppca / pmf latent dimension */
  int def_k1, def_k2;    /* def layer sizes */
  double gamma_shape, gamma_rate;
  int def_steps;
  double def_learning_rate;  /* <= 0 for default */
  double holdout_fraction;   /* (0,1); used for the predictive-check mask */
  uint64_t seed;
} deconf_factor_spec;

/* Fits twice: once with the holdout mask (predictive check) and once on the
 * full data (substitute confounder). */
deconf_status deconf_factor_fit(const deconf_cohort* cohort,
                                const deconf_factor_spec* spec, deconf_factor** out);
deconf_status deconf_factor_save(const deconf_factor* factor, const char* path);
deconf_status deconf_factor_load(const char* path, deconf_factor** out);
void deconf_factor_free(deconf_factor* factor);

/* ---- predictive check --------------------------------------------------- */

deconf_status deconf_check_run(const deconf_factor* factor, const deconf_cohort* cohort,
                               int n_rep, int n_post, double band_lo, double band_hi,
                               uint64_t seed, deconf_check** out);
deconf_status deconf_check_score(const deconf_check* check, double* out);
deconf_status deconf_check_passed(const deconf_check* check, int* out);
deconf_status deconf_check_write(const deconf_check* check, const char* path);
void deconf_check_free(deconf_check* check);

/* ---- effect estimation -------------------------------------------------- */

/* mode: "unadjusted" (factor/check ignored), "adjusted" (factor required;
 * check required unless override != 0), "oracle" (cohort must carry true
 * confounders).  cause_precision/confounder_precision <= 0 pick defaults. */
deconf_status deconf_effects_estimate(const deconf_cohort* cohort,
                                      const deconf_factor* factor,
                                      const deconf_check* check, const char* mode,
                                      int override_check, double cause_precision,
                                      double confounder_precision,
                                      deconf_effects** out);
deconf_status deconf_effects_count(const deconf_effects* effects, int64_t* out);
deconf_status deconf_effects_row(const deconf_effects* effects, int64_t index,
                                 const char** label, double* mean, double* std_err,
                                 double* ci95_lo, double* ci95_hi, double* tail_prob,
                                 int* causal);
deconf_status deconf_effects_write_tsv(const deconf_effects* effects, const char* path);
deconf_status deconf_effects_write_svg(const deconf_effects* effects, const char* path);
void deconf_effects_free(deconf_effects* effects);

/* ---- end-to-end experiments --------------------------------------------- */

typedef struct deconf_run_spec {
  const char* experiment;   /* two-med-no-cause | two-med-one-cause | multi-med | custom */
  const char* factor_model; /* ppca | pmf | def | none | oracle */
  const char* k_ladder;     /* comma-separated, NULL/"" for default */
  int def_k1, def_k2;
  double gamma_shape, gamma_rate;
  int def_steps;
  int n_patients;           /* 0 for experiment default */
  int multi_n_causes;       /* 0 -> 50 */
  int multi_k_confounder;   /* 0 -> 10 */
  double multi_sparsity;    /* < 0 -> 0.8 */
  const char* custom_exposures;
  const char* custom_outcomes;
  const char* custom_truth;
  double rare_quantile;
  double holdout_fraction;  /* <= 0 -> 0.2 */
  int n_rep, n_post;        /* <= 0 -> 100 */
  double band_lo, band_hi;  /* band_hi <= 0 -> [0.05, 0.95] */
  int override_check;
  double cause_precision, confounder_precision; /* <= 0 -> defaults */
  const char* seeds;        /* comma-separated, e.g. "1,2,3" */
} deconf_run_spec;

deconf_status deconf_run_experiment(const deconf_run_spec* spec, deconf_run** out);
/* Writes manifest.json, per-seed effects/forest/check files and summaries. */
deconf_status deconf_run_emit(const deconf_run* run, const char* out_dir);
deconf_status deconf_run_summary(const deconf_run* run, char* buffer, size_t buffer_len);
void deconf_run_free(deconf_run* run);

/* Renders the aggregate tables of an emitted run directory. */
deconf_status deconf_summarize_dir(const char* dir, char* buffer, size_t buffer_len);

#ifdef __cplusplus
}
#endif

#endif /* DECONF_DECONF_H */
