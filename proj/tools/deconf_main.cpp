// deconf command-line driver.  Talks to the core library exclusively
// through the C API in deconf/deconf.h.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deconf/deconf.h"

namespace {

int exit_code_for(deconf_status status) {
  if (status == DECONF_OK) return 0;
  if (status == DECONF_ERR_CHECK_FAILED) return 2;
  return 1;
}

int report_failure(deconf_status status) {
  std::fprintf(stderr, "error: %s\n", deconf_last_error());
  return exit_code_for(status);
}

bool parse_band(const std::string& text, double& lo, double& hi) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) return false;
  lo = std::atof(text.substr(0, comma).c_str());
  hi = std::atof(text.substr(comma + 1).c_str());
  return hi > lo;
}

bool parse_layers(const std::string& text, int& k1, int& k2) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) return false;
  k1 = std::atoi(text.substr(0, comma).c_str());
  k2 = std::atoi(text.substr(comma + 1).c_str());
  return k1 > 0 && k2 > 0;
}

struct CohortArgs {
  std::string exposures, outcomes, truth;
};

void add_cohort_options(CLI::App* cmd, CohortArgs& args, bool truth_too = true) {
  cmd->add_option("--exposures", args.exposures, "exposure CSV (patient_id + causes)")
      ->required();
  cmd->add_option("--outcomes", args.outcomes, "outcome CSV (patient_id,outcome)")
      ->required();
  if (truth_too)
    cmd->add_option("--truth", args.truth, "truth sidecar CSV (optional)");
}

deconf_status load_cohort_handle(const CohortArgs& args, deconf_cohort** cohort) {
  return deconf_cohort_load(args.exposures.c_str(), args.outcomes.c_str(),
                            args.truth.empty() ? nullptr : args.truth.c_str(), cohort);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deconf: multi-cause treatment-effect estimation with substitute confounders"};
  app.set_config("--config", "", "key=value config file; flags override");
  app.require_subcommand(1);

  // ---- simulate ----------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic cohort");
  simulate->configurable();
  std::string sim_experiment = "two-med-no-cause";
  std::uint64_t sim_seed = 1;
  int sim_n = 0, sim_causes = 0, sim_kconf = 0;
  double sim_sparsity = -1.0;
  std::string sim_out = ".";
  simulate->add_option("--experiment", sim_experiment,
                       "two-med-no-cause | two-med-one-cause | multi-med");
  simulate->add_option("--seed", sim_seed, "simulation seed");
  simulate->add_option("--n", sim_n, "patients (0 = experiment default)");
  simulate->add_option("--n-causes", sim_causes, "multi-med causes (default 50)");
  simulate->add_option("--k-confounder", sim_kconf, "multi-med confounder dim (default 10)");
  simulate->add_option("--sparsity", sim_sparsity,
                       "multi-med zeroed-effect fraction (default 0.8)");
  simulate->add_option("--out", sim_out, "output directory")->required();

  // ---- fit-factor --------------------------------------------------------
  auto* fitf = app.add_subcommand("fit-factor", "fit a factor model (masked + full data)");
  fitf->configurable();
  CohortArgs fit_cohort;
  add_cohort_options(fitf, fit_cohort, false);
  std::string fit_model = "ppca", fit_layers, fit_out;
  int fit_k = 0;
  double fit_gshape = 0.0, fit_grate = 0.0, fit_holdout = 0.2, fit_lr = 0.0;
  int fit_def_steps = 0;
  std::uint64_t fit_seed = 1;
  fitf->add_option("--factor-model", fit_model, "ppca | pmf | def")->required();
  fitf->add_option("--k", fit_k, "latent dimension (ppca/pmf)");
  fitf->add_option("--layers", fit_layers, "def layer sizes K1,K2");
  fitf->add_option("--gamma-shape", fit_gshape, "Gamma prior shape (pmf/def)");
  fitf->add_option("--gamma-rate", fit_grate, "Gamma prior rate (pmf/def)");
  fitf->add_option("--def-steps", fit_def_steps, "def gradient steps (default 10000)");
  fitf->add_option("--def-learning-rate", fit_lr, "def learning rate");
  fitf->add_option("--holdout-fraction", fit_holdout,
                   "held-out entry fraction (default 0.2)");
  fitf->add_option("--seed", fit_seed, "fit seed");
  fitf->add_option("--out", fit_out, "factor artifact path")->required();

  // ---- check -------------------------------------------------------------
  auto* check = app.add_subcommand("check", "posterior predictive check of a factor fit");
  check->configurable();
  CohortArgs check_cohort;
  add_cohort_options(check, check_cohort, false);
  std::string check_fit, check_out, check_band;
  int check_nrep = 0, check_npost = 0;
  std::uint64_t check_seed = 0;
  check->add_option("--fit", check_fit, "factor artifact from fit-factor")->required();
  check->add_option("--n-rep", check_nrep, "replicated datasets (default 100)");
  check->add_option("--n-post", check_npost, "posterior draws (default 100)");
  check->add_option("--check-band", check_band, "pass band lo,hi (default 0.05,0.95)");
  check->add_option("--seed", check_seed, "check seed (default derived from fit)");
  check->add_option("--out", check_out, "write CheckResult JSON here");

  // ---- estimate ----------------------------------------------------------
  auto* estimate = app.add_subcommand("estimate", "fit the outcome model, write effects");
  estimate->configurable();
  CohortArgs est_cohort;
  add_cohort_options(estimate, est_cohort);
  std::string est_fit, est_mode = "unadjusted", est_out, est_band;
  bool est_override = false;
  double est_cause_prec = 0.0, est_conf_prec = 0.0;
  int est_nrep = 0, est_npost = 0;
  std::uint64_t est_seed = 0;
  estimate->add_option("--fit", est_fit, "factor artifact (switches to adjusted mode)");
  estimate->add_option("--factor-model", est_mode,
                       "none | oracle (ignored when --fit given)");
  estimate->add_flag("--override-check", est_override, "estimate even if the check fails");
  estimate->add_option("--cause-precision", est_cause_prec,
                       "prior precision on cause coefficients");
  estimate->add_option("--confounder-precision", est_conf_prec,
                       "prior precision on confounder coefficients");
  estimate->add_option("--n-rep", est_nrep, "check replicates (adjusted mode)");
  estimate->add_option("--n-post", est_npost, "check posterior draws (adjusted mode)");
  estimate->add_option("--check-band", est_band, "check pass band lo,hi");
  estimate->add_option("--seed", est_seed, "check seed (adjusted mode)");
  estimate->add_option("--out", est_out, "output directory")->required();

  // ---- run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "end-to-end experiment over seeds");
  run->configurable();
  std::string run_experiment_s = "two-med-no-cause", run_model = "ppca";
  std::string run_k, run_layers, run_seeds = "1", run_out, run_band;
  std::string run_expo, run_outc, run_truth;
  int run_n = 0, run_causes = 0, run_kconf = 0, run_def_steps = 0;
  int run_nrep = 0, run_npost = 0;
  double run_sparsity = -1.0, run_holdout = 0.0, run_rare = 0.0;
  double run_gshape = 0.0, run_grate = 0.0, run_cause_prec = 0.0, run_conf_prec = 0.0;
  bool run_override = false;
  run->add_option("--experiment", run_experiment_s,
                  "two-med-no-cause | two-med-one-cause | multi-med | custom");
  run->add_option("--factor-model", run_model, "ppca | pmf | def | none | oracle");
  run->add_option("--k", run_k, "latent dimension ladder, e.g. 5,10,30");
  run->add_option("--layers", run_layers, "def layer sizes K1,K2");
  run->add_option("--gamma-shape", run_gshape, "Gamma prior shape (pmf/def)");
  run->add_option("--gamma-rate", run_grate, "Gamma prior rate (pmf/def)");
  run->add_option("--def-steps", run_def_steps, "def gradient steps");
  run->add_option("--seeds", run_seeds, "comma-separated seed list");
  run->add_option("--n", run_n, "patients per seed (0 = default)");
  run->add_option("--n-causes", run_causes, "multi-med causes");
  run->add_option("--k-confounder", run_kconf, "multi-med confounder dim");
  run->add_option("--sparsity", run_sparsity, "multi-med zeroed-effect fraction");
  run->add_option("--holdout-fraction", run_holdout, "held-out fraction (default 0.2)");
  run->add_option("--n-rep", run_nrep, "check replicates (default 100)");
  run->add_option("--n-post", run_npost, "check posterior draws (default 100)");
  run->add_option("--check-band", run_band, "pass band lo,hi (default 0.05,0.95)");
  run->add_flag("--override-check", run_override, "estimate even if the check fails");
  run->add_option("--cause-precision", run_cause_prec, "prior precision on causes");
  run->add_option("--confounder-precision", run_conf_prec,
                  "prior precision on confounders");
  run->add_option("--custom-exposures", run_expo, "custom cohort exposure CSV");
  run->add_option("--custom-outcomes", run_outc, "custom cohort outcome CSV");
  run->add_option("--custom-truth", run_truth, "custom cohort truth CSV");
  run->add_option("--rare-quantile", run_rare, "drop this fraction of rarest causes");
  run->add_option("--out", run_out, "output directory")->required();

  // ---- report -------------------------------------------------------------
  auto* report = app.add_subcommand("report", "summarize an emitted run directory");
  std::string report_dir;
  report->add_option("--in", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    deconf_cohort* cohort = nullptr;
    deconf_status st;
    if (sim_experiment == "multi-med") {
      st = deconf_cohort_simulate_multi_med(sim_n, sim_causes, sim_kconf, sim_sparsity,
                                            sim_seed, &cohort);
    } else if (sim_experiment == "two-med-no-cause" ||
               sim_experiment == "two-med-one-cause") {
      st = deconf_cohort_simulate_two_med(sim_n > 0 ? sim_n : 1000,
                                          sim_experiment == "two-med-one-cause" ? 1 : 0,
                                          sim_seed, &cohort);
    } else {
      std::fprintf(stderr, "error: unknown experiment '%s'\n", sim_experiment.c_str());
      return 1;
    }
    if (st != DECONF_OK) return report_failure(st);
    const std::string expo = sim_out + "/exposures.csv";
    const std::string outc = sim_out + "/outcomes.csv";
    const std::string truth = sim_out + "/truth.csv";
    st = deconf_cohort_save(cohort, expo.c_str(), outc.c_str(), truth.c_str());
    deconf_cohort_free(cohort);
    if (st != DECONF_OK) return report_failure(st);
    std::printf("wrote %s, %s, %s\n", expo.c_str(), outc.c_str(), truth.c_str());
    return 0;
  }

  if (fitf->parsed()) {
    deconf_cohort* cohort = nullptr;
    deconf_status st = load_cohort_handle(fit_cohort, &cohort);
    if (st != DECONF_OK) return report_failure(st);
    deconf_factor_spec spec{};
    spec.model = fit_model.c_str();
    spec.k = fit_k;
    if (!fit_layers.empty() && !parse_layers(fit_layers, spec.def_k1, spec.def_k2)) {
      std::fprintf(stderr, "error: --layers expects K1,K2\n");
      return 1;
    }
    spec.gamma_shape = fit_gshape;
    spec.gamma_rate = fit_grate;
    spec.def_steps = fit_def_steps;
    spec.def_learning_rate = fit_lr;
    spec.holdout_fraction = fit_holdout;
    spec.seed = fit_seed;
    deconf_factor* factor = nullptr;
    st = deconf_factor_fit(cohort, &spec, &factor);
    deconf_cohort_free(cohort);
    if (st != DECONF_OK) return report_failure(st);
    st = deconf_factor_save(factor, fit_out.c_str());
    deconf_factor_free(factor);
    if (st != DECONF_OK) return report_failure(st);
    std::printf("wrote %s\n", fit_out.c_str());
    return 0;
  }

  if (check->parsed()) {
    deconf_cohort* cohort = nullptr;
    deconf_status st = load_cohort_handle(check_cohort, &cohort);
    if (st != DECONF_OK) return report_failure(st);
    deconf_factor* factor = nullptr;
    st = deconf_factor_load(check_fit.c_str(), &factor);
    if (st != DECONF_OK) {
      deconf_cohort_free(cohort);
      return report_failure(st);
    }
    double lo = 0.0, hi = 0.0;
    if (!check_band.empty() && !parse_band(check_band, lo, hi)) {
      std::fprintf(stderr, "error: --check-band expects lo,hi\n");
      return 1;
    }
    deconf_check* result = nullptr;
    st = deconf_check_run(factor, cohort, check_nrep, check_npost, lo, hi, check_seed,
                          &result);
    deconf_factor_free(factor);
    deconf_cohort_free(cohort);
    if (st != DECONF_OK) return report_failure(st);
    double score = 0.0;
    int passed = 0;
    deconf_check_score(result, &score);
    deconf_check_passed(result, &passed);
    if (!check_out.empty()) {
      st = deconf_check_write(result, check_out.c_str());
      if (st != DECONF_OK) {
        deconf_check_free(result);
        return report_failure(st);
      }
    }
    std::printf("predictive score %.4f: %s\n", score, passed ? "pass" : "FAIL");
    deconf_check_free(result);
    return passed ? 0 : 2;
  }

  if (estimate->parsed()) {
    deconf_cohort* cohort = nullptr;
    deconf_status st = load_cohort_handle(est_cohort, &cohort);
    if (st != DECONF_OK) return report_failure(st);

    deconf_factor* factor = nullptr;
    deconf_check* chk = nullptr;
    const char* mode = "unadjusted";
    if (!est_fit.empty()) {
      mode = "adjusted";
      st = deconf_factor_load(est_fit.c_str(), &factor);
      if (st != DECONF_OK) {
        deconf_cohort_free(cohort);
        return report_failure(st);
      }
      double lo = 0.0, hi = 0.0;
      if (!est_band.empty() && !parse_band(est_band, lo, hi)) {
        std::fprintf(stderr, "error: --check-band expects lo,hi\n");
        return 1;
      }
      st = deconf_check_run(factor, cohort, est_nrep, est_npost, lo, hi, est_seed, &chk);
      if (st != DECONF_OK) {
        deconf_factor_free(factor);
        deconf_cohort_free(cohort);
        return report_failure(st);
      }
    } else if (est_mode == "oracle") {
      mode = "oracle";
    } else if (est_mode != "none" && est_mode != "unadjusted") {
      std::fprintf(stderr, "error: --factor-model must be none or oracle without --fit\n");
      return 1;
    }

    deconf_effects* effects = nullptr;
    st = deconf_effects_estimate(cohort, factor, chk, mode, est_override ? 1 : 0,
                                 est_cause_prec, est_conf_prec, &effects);
    deconf_check_free(chk);
    deconf_factor_free(factor);
    deconf_cohort_free(cohort);
    if (st != DECONF_OK) return report_failure(st);

    const std::string tsv = est_out + "/effects.tsv";
    const std::string svg = est_out + "/forest.svg";
    st = deconf_effects_write_tsv(effects, tsv.c_str());
    if (st == DECONF_OK) st = deconf_effects_write_svg(effects, svg.c_str());
    if (st != DECONF_OK) {
      deconf_effects_free(effects);
      return report_failure(st);
    }
    int64_t count = 0;
    deconf_effects_count(effects, &count);
    for (int64_t i = 0; i < count; ++i) {
      const char* label = nullptr;
      double mean, se, lo, hi, tail;
      int causal;
      deconf_effects_row(effects, i, &label, &mean, &se, &lo, &hi, &tail, &causal);
      std::printf("%-16s %8.4f (%.4f)  95%% [%7.4f, %7.4f]  tail %.3f%s\n", label, mean,
                  se, lo, hi, tail, causal ? "  ***" : "");
    }
    deconf_effects_free(effects);
    std::printf("wrote %s, %s\n", tsv.c_str(), svg.c_str());
    return 0;
  }

  if (run->parsed()) {
    deconf_run_spec spec{};
    spec.experiment = run_experiment_s.c_str();
    spec.factor_model = run_model.c_str();
    spec.k_ladder = run_k.empty() ? nullptr : run_k.c_str();
    if (!run_layers.empty() && !parse_layers(run_layers, spec.def_k1, spec.def_k2)) {
      std::fprintf(stderr, "error: --layers expects K1,K2\n");
      return 1;
    }
    spec.gamma_shape = run_gshape;
    spec.gamma_rate = run_grate;
    spec.def_steps = run_def_steps;
    spec.n_patients = run_n;
    spec.multi_n_causes = run_causes;
    spec.multi_k_confounder = run_kconf;
    spec.multi_sparsity = run_sparsity;
    spec.custom_exposures = run_expo.empty() ? nullptr : run_expo.c_str();
    spec.custom_outcomes = run_outc.empty() ? nullptr : run_outc.c_str();
    spec.custom_truth = run_truth.empty() ? nullptr : run_truth.c_str();
    spec.rare_quantile = run_rare;
    spec.holdout_fraction = run_holdout;
    spec.n_rep = run_nrep;
    spec.n_post = run_npost;
    if (!run_band.empty()) {
      if (!parse_band(run_band, spec.band_lo, spec.band_hi)) {
        std::fprintf(stderr, "error: --check-band expects lo,hi\n");
        return 1;
      }
    }
    spec.override_check = run_override ? 1 : 0;
    spec.cause_precision = run_cause_prec;
    spec.confounder_precision = run_conf_prec;
    spec.seeds = run_seeds.c_str();

    deconf_run* result = nullptr;
    deconf_status st = deconf_run_experiment(&spec, &result);
    if (st != DECONF_OK) return report_failure(st);
    st = deconf_run_emit(result, run_out.c_str());
    if (st != DECONF_OK) {
      deconf_run_free(result);
      return report_failure(st);
    }
    std::vector<char> buffer(1 << 16);
    if (deconf_run_summary(result, buffer.data(), buffer.size()) == DECONF_OK)
      std::fputs(buffer.data(), stdout);
    deconf_run_free(result);
    std::printf("wrote run to %s\n", run_out.c_str());
    return 0;
  }

  if (report->parsed()) {
    std::vector<char> buffer(1 << 18);
    deconf_status st =
        deconf_summarize_dir(report_dir.c_str(), buffer.data(), buffer.size());
    if (st != DECONF_OK) return report_failure(st);
    std::fputs(buffer.data(), stdout);
    return 0;
  }

  return 0;
}
