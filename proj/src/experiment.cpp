#include "deconf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deconf/rng.hpp"

namespace deconf {

namespace fs = std::filesystem;

const char* kToolVersion = "0.1.0";

const char* experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::TwoMedNoCause: return "two-med-no-cause";
    case ExperimentKind::TwoMedOneCause: return "two-med-one-cause";
    case ExperimentKind::MultiMed: return "multi-med";
    case ExperimentKind::CustomCohort: return "custom";
  }
  return "?";
}

const char* adjustment_name(AdjustmentModel model) {
  switch (model) {
    case AdjustmentModel::Ppca: return "ppca";
    case AdjustmentModel::Pmf: return "pmf";
    case AdjustmentModel::Def: return "def";
    case AdjustmentModel::None: return "none";
    case AdjustmentModel::Oracle: return "oracle";
  }
  return "?";
}

ExperimentKind experiment_from_name(const std::string& name) {
  if (name == "two-med-no-cause") return ExperimentKind::TwoMedNoCause;
  if (name == "two-med-one-cause") return ExperimentKind::TwoMedOneCause;
  if (name == "multi-med") return ExperimentKind::MultiMed;
  if (name == "custom") return ExperimentKind::CustomCohort;
  throw ConfigError("unknown experiment '" + name + "'");
}

AdjustmentModel adjustment_from_name(const std::string& name) {
  if (name == "ppca") return AdjustmentModel::Ppca;
  if (name == "pmf") return AdjustmentModel::Pmf;
  if (name == "def") return AdjustmentModel::Def;
  if (name == "none" || name == "unadjusted") return AdjustmentModel::None;
  if (name == "oracle") return AdjustmentModel::Oracle;
  throw ConfigError("unknown factor model '" + name + "'");
}

Cohort materialize_cohort(const ExperimentConfig& config, std::uint64_t seed) {
  switch (config.experiment) {
    case ExperimentKind::TwoMedNoCause:
    case ExperimentKind::TwoMedOneCause: {
      TwoMedConfig c;
      c.n_patients = config.n_patients > 0 ? config.n_patients : 1000;
      c.setup = config.experiment == ExperimentKind::TwoMedOneCause
                    ? TwoMedConfig::Setup::OneCause
                    : TwoMedConfig::Setup::NoCause;
      c.seed = seed;
      return simulate_two_med(c);
    }
    case ExperimentKind::MultiMed: {
      MultiMedConfig c = config.multi;
      if (config.n_patients > 0) c.n_patients = config.n_patients;
      c.seed = seed;
      return simulate_multi_med(c);
    }
    case ExperimentKind::CustomCohort: {
      if (config.custom.exposures_path.empty() || config.custom.outcomes_path.empty())
        throw ConfigError("custom cohort needs exposure and outcome files");
      Cohort cohort = load_cohort(config.custom);
      if (config.rare_quantile > 0.0)
        cohort = filter_rare_causes(cohort, config.rare_quantile);
      return cohort;
    }
  }
  throw ConfigError("unhandled experiment kind");
}

namespace {

std::vector<int> resolved_ladder(const ExperimentConfig& config) {
  if (!config.k_ladder.empty()) return config.k_ladder;
  switch (config.model) {
    case AdjustmentModel::Ppca: return {1};
    case AdjustmentModel::Pmf: return {30};
    default: return {0};
  }
}

FactorConfig factor_config_for(const ExperimentConfig& config, int k) {
  FactorConfig fc;
  switch (config.model) {
    case AdjustmentModel::Ppca:
      fc.kind = FactorModelKind::Ppca;
      fc.ppca.k = k;
      break;
    case AdjustmentModel::Pmf:
      fc.kind = FactorModelKind::Pmf;
      fc.pmf.k = k;
      fc.pmf.alpha = config.gamma_shape;
      fc.pmf.beta = config.gamma_rate;
      break;
    case AdjustmentModel::Def:
      fc.kind = FactorModelKind::Def;
      fc.def.k1 = config.def_k1;
      fc.def.k2 = config.def_k2;
      fc.def.alpha = config.gamma_shape;
      fc.def.beta = config.gamma_rate;
      fc.def.steps = config.def_steps;
      fc.def.learning_rate = config.def_learning_rate;
      break;
    default:
      throw ConfigError("factor config requested for a non-factor model");
  }
  fc.def_concat_layer2 = config.def_concat_layer2;
  return fc;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

Vector ExperimentReport::mean_effects() const {
  if (seeds.empty()) return Vector();
  const auto d = static_cast<Eigen::Index>(seeds.front().effects.effects.size());
  Vector mean = Vector::Zero(d);
  for (const auto& s : seeds)
    for (Eigen::Index j = 0; j < d; ++j) mean(j) += s.effects.effects[j].mean;
  return mean / static_cast<double>(seeds.size());
}

std::optional<EvalSummary> ExperimentReport::mean_eval() const {
  EvalSummary acc;
  int n = 0, n_causal = 0, n_noncausal = 0;
  double causal_acc = 0.0, noncausal_acc = 0.0;
  for (const auto& s : seeds) {
    if (!s.eval) continue;
    ++n;
    acc.rmse += s.eval->rmse;
    acc.coverage_all += s.eval->coverage_all;
    if (s.eval->coverage_causal) {
      ++n_causal;
      causal_acc += *s.eval->coverage_causal;
    }
    if (s.eval->coverage_noncausal) {
      ++n_noncausal;
      noncausal_acc += *s.eval->coverage_noncausal;
    }
  }
  if (n == 0) return std::nullopt;
  acc.rmse /= n;
  acc.coverage_all /= n;
  if (n_causal > 0) acc.coverage_causal = causal_acc / n_causal;
  if (n_noncausal > 0) acc.coverage_noncausal = noncausal_acc / n_noncausal;
  return acc;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw ConfigError("run needs at least one seed");
  ExperimentReport report;
  report.config = config;

  const std::vector<int> ladder = resolved_ladder(config);
  bool truths_consistent = true;

  for (std::uint64_t seed : config.seeds) {
    Cohort cohort = materialize_cohort(config, seed);
    SeedResult result;
    result.seed = seed;

    std::optional<Matrix> confounders;
    const bool factor_based = config.model == AdjustmentModel::Ppca ||
                              config.model == AdjustmentModel::Pmf ||
                              config.model == AdjustmentModel::Def;
    if (factor_based) {
      std::optional<FactorArtifact> artifact;
      std::optional<CheckResult> check;
      for (int k : ladder) {
        FactorConfig fc = factor_config_for(config, k);
        FactorArtifact cand = make_factor_artifact(cohort.exposures, fc, seed,
                                                   config.holdout_fraction);
        CheckConfig cc;
        cc.n_rep = config.n_rep;
        cc.n_post = config.n_post;
        cc.band_lo = config.band_lo;
        cc.band_hi = config.band_hi;
        cc.seed = derive_seed(seed, seed_tag::check);
        CheckResult cr =
            predictive_score(cand.masked_fit, cohort.exposures, cand.mask, cc);
        const bool keep = cr.pass || !check.has_value();
        if (keep) {
          artifact = std::move(cand);
          result.k_used = config.model == AdjustmentModel::Def ? config.def_k1 : k;
          const bool passed = cr.pass;
          check = std::move(cr);
          if (passed) break;
        }
      }
      if (!check->pass && !config.override_check)
        throw CheckFailedError(
            "predictive check failed (score " + fmt(check->score) + " outside [" +
                fmt(check->band_lo) + ", " + fmt(check->band_hi) +
                "]); try another factor model or K, or override the check",
            check->score);
      result.check = check;
      confounders = project_substitute_onto_causes(
          substitute_confounder(artifact->full_fit, config.def_concat_layer2).values,
          cohort.exposures);
    } else if (config.model == AdjustmentModel::Oracle) {
      if (!cohort.true_confounders)
        throw ConfigError("oracle adjustment requires true confounders in the cohort");
      confounders = *cohort.true_confounders;
    }

    RegressionPrior prior = RegressionPrior::defaults_for(cohort.exposures.n_causes(),
                                                          cohort.exposures.n_patients());
    if (config.cause_precision > 0.0) prior.cause_precision = config.cause_precision;
    if (config.confounder_precision > 0.0)
      prior.confounder_precision = config.confounder_precision;

    result.posterior = fit_outcome(cohort.outcomes, cohort.exposures, confounders, prior,
                                   cohort.cause_labels);
    result.effects = effect_report(result.posterior);
    if (cohort.true_effects)
      result.eval = evaluate_effects(result.effects, *cohort.true_effects);

    if (report.seeds.empty()) {
      report.cause_labels = cohort.cause_labels;
      report.true_effects = cohort.true_effects;
    } else if (report.true_effects && cohort.true_effects &&
               *report.true_effects != *cohort.true_effects) {
      truths_consistent = false;
    }
    report.seeds.push_back(std::move(result));
  }
  if (!truths_consistent) report.true_effects.reset();
  return report;
}

void write_effects_tsv(const EffectReport& report, const std::string& path) {
  if (report.effects.empty())
    throw ValidationError("effect report is empty, nothing to write");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "label\tmean\tstd_err\tci80_lo\tci80_hi\tci95_lo\tci95_hi\ttail_prob\tcausal\n";
  for (const auto& e : report.effects)
    out << e.label << '\t' << fmt(e.mean) << '\t' << fmt(e.std_err) << '\t'
        << fmt(e.ci80_lo) << '\t' << fmt(e.ci80_hi) << '\t' << fmt(e.ci95_lo) << '\t'
        << fmt(e.ci95_hi) << '\t' << fmt(e.tail_prob) << '\t' << (e.causal ? 1 : 0)
        << "\n";
}

std::string render_forest_svg(const EffectReport& report) {
  if (report.effects.empty())
    throw ValidationError("effect report is empty, nothing to render");
  const int row_h = 24, top = 40, left = 150, plot_w = 480, right_pad = 70;
  const int height = top + row_h * static_cast<int>(report.effects.size()) + 20;
  const int width = left + plot_w + right_pad;

  double lo = 0.0, hi = 0.0;
  for (const auto& e : report.effects) {
    lo = std::min(lo, e.ci95_lo);
    hi = std::max(hi, e.ci95_hi);
  }
  const double span = std::max(hi - lo, 1e-9);
  lo -= 0.05 * span;
  hi += 0.05 * span;
  auto sx = [&](double v) { return left + plot_w * (v - lo) / (hi - lo); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<line x1=\"" << fmt2(sx(0.0)) << "\" y1=\"" << top - 14 << "\" x2=\""
      << fmt2(sx(0.0)) << "\" y2=\"" << height - 12
      << "\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n";
  svg << "<text x=\"" << fmt2(sx(0.0)) << "\" y=\"" << top - 20
      << "\" text-anchor=\"middle\" fill=\"#666\">0</text>\n";
  int row = 0;
  for (const auto& e : report.effects) {
    const double cy = top + row_h * row + row_h / 2.0;
    svg << "<text x=\"" << left - 10 << "\" y=\"" << fmt2(cy + 4)
        << "\" text-anchor=\"end\">" << e.label << "</text>\n";
    svg << "<line x1=\"" << fmt2(sx(e.ci95_lo)) << "\" y1=\"" << fmt2(cy) << "\" x2=\""
        << fmt2(sx(e.ci95_hi)) << "\" y2=\"" << fmt2(cy)
        << "\" stroke=\"#333\" stroke-width=\"1.2\"/>\n";
    svg << "<rect x=\"" << fmt2(sx(e.ci80_lo)) << "\" y=\"" << fmt2(cy - 3)
        << "\" width=\"" << fmt2(std::max(0.0, sx(e.ci80_hi) - sx(e.ci80_lo)))
        << "\" height=\"6\" fill=\"#555\"/>\n";
    svg << "<circle cx=\"" << fmt2(sx(e.mean)) << "\" cy=\"" << fmt2(cy)
        << "\" r=\"4\" fill=\"#1f6fb2\"/>\n";
    if (e.causal)
      svg << "<text x=\"" << left + plot_w + 12 << "\" y=\"" << fmt2(cy + 4)
          << "\" fill=\"#b22\">***</text>\n";
    ++row;
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_name(c.experiment);
  j["factor_model"] = adjustment_name(c.model);
  j["k_ladder"] = c.k_ladder;
  j["def_layers"] = {c.def_k1, c.def_k2};
  j["gamma_shape"] = c.gamma_shape;
  j["gamma_rate"] = c.gamma_rate;
  j["def_steps"] = c.def_steps;
  j["def_learning_rate"] = c.def_learning_rate;
  j["def_concat_layer2"] = c.def_concat_layer2;
  j["n_patients"] = c.n_patients;
  j["multi_med"] = {{"n_causes", c.multi.n_causes},
                    {"k_confounder", c.multi.k_confounder},
                    {"sparsity", c.multi.sparsity}};
  j["custom_exposures"] = c.custom.exposures_path;
  j["custom_outcomes"] = c.custom.outcomes_path;
  j["custom_truth"] = c.custom.truth_path.value_or("");
  j["rare_quantile"] = c.rare_quantile;
  j["holdout_fraction"] = c.holdout_fraction;
  j["n_rep"] = c.n_rep;
  j["n_post"] = c.n_post;
  j["check_band"] = {c.band_lo, c.band_hi};
  j["override_check"] = c.override_check;
  j["cause_precision"] = c.cause_precision;
  j["confounder_precision"] = c.confounder_precision;
  j["seeds"] = c.seeds;
  return j;
}

void write_metrics_tsv(const std::vector<const SeedResult*>& seeds,
                       const std::optional<EvalSummary>& mean, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "seed\trmse\tcoverage_all\tcoverage_causal\tcoverage_noncausal\n";
  auto cell = [&](const std::optional<double>& v) {
    return v ? fmt(*v) : std::string("-");
  };
  for (const auto* s : seeds) {
    if (!s->eval) continue;
    out << s->seed << '\t' << fmt(s->eval->rmse) << '\t' << fmt(s->eval->coverage_all)
        << '\t' << cell(s->eval->coverage_causal) << '\t'
        << cell(s->eval->coverage_noncausal) << "\n";
  }
  if (mean)
    out << "mean\t" << fmt(mean->rmse) << '\t' << fmt(mean->coverage_all) << '\t'
        << cell(mean->coverage_causal) << '\t' << cell(mean->coverage_noncausal) << "\n";
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
  if (report.seeds.empty()) throw ValidationError("experiment report holds no seeds");
  for (const auto& s : report.seeds)
    if (s.effects.effects.empty())
      throw ValidationError("effect report is empty, nothing to write");

  fs::create_directories(out_dir);

  {
    nlohmann::ordered_json manifest;
    manifest["tool"] = "deconf";
    manifest["version"] = kToolVersion;
    manifest["config"] = config_json(report.config);
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (const auto& s : report.seeds) {
      nlohmann::ordered_json js;
      js["seed"] = s.seed;
      js["k_used"] = s.k_used;
      if (s.check) {
        js["check_score"] = s.check->score;
        js["check_pass"] = s.check->pass;
      }
      per_seed.push_back(js);
    }
    manifest["seeds"] = per_seed;
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  }

  for (const auto& s : report.seeds) {
    const fs::path dir = fs::path(out_dir) / ("seed_" + std::to_string(s.seed));
    fs::create_directories(dir);
    write_effects_tsv(s.effects, (dir / "effects.tsv").string());
    {
      std::ofstream out(dir / "forest.svg");
      if (!out) throw IoError("cannot write forest.svg");
      out << render_forest_svg(s.effects);
    }
    if (s.check) write_check_report(*s.check, (dir / "check.json").string());
    if (s.eval) write_metrics_tsv({&s}, std::nullopt, (dir / "metrics.tsv").string());
  }

  {
    const auto d = report.seeds.front().effects.effects.size();
    std::ofstream out(fs::path(out_dir) / "effects_summary.tsv");
    if (!out) throw IoError("cannot write effects_summary.tsv");
    out << "label\tmean\tsd\tmean_std_err\tmean_tail_prob\tn_causal\tn_seeds\n";
    for (size_t j = 0; j < d; ++j) {
      double m = 0.0, m2 = 0.0, se = 0.0, tail = 0.0;
      int causal = 0;
      for (const auto& s : report.seeds) {
        const auto& e = s.effects.effects[j];
        m += e.mean;
        m2 += e.mean * e.mean;
        se += e.std_err;
        tail += e.tail_prob;
        causal += e.causal ? 1 : 0;
      }
      const double n = static_cast<double>(report.seeds.size());
      const double var = std::max(0.0, (m2 - m * m / n) / std::max(1.0, n - 1.0));
      out << report.seeds.front().effects.effects[j].label << '\t' << fmt(m / n) << '\t'
          << fmt(std::sqrt(var)) << '\t' << fmt(se / n) << '\t' << fmt(tail / n) << '\t'
          << causal << '\t' << report.seeds.size() << "\n";
    }
  }

  const auto mean = report.mean_eval();
  if (mean) {
    std::vector<const SeedResult*> ptrs;
    for (const auto& s : report.seeds) ptrs.push_back(&s);
    write_metrics_tsv(ptrs, mean, (fs::path(out_dir) / "metrics_summary.tsv").string());
  }
}

std::string summarize_run_dir(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream manifest_in(base / "manifest.json");
  if (!manifest_in) throw IoError("no manifest.json under '" + dir + "'");
  nlohmann::json manifest;
  manifest_in >> manifest;

  std::ostringstream out;
  out << "run: experiment=" << manifest["config"]["experiment"].get<std::string>()
      << " factor_model=" << manifest["config"]["factor_model"].get<std::string>()
      << " seeds=" << manifest["seeds"].size() << "\n";

  std::ifstream effects_in(base / "effects_summary.tsv");
  if (effects_in) {
    out << "\nper-cause summary (mean over seeds)\n";
    std::string line;
    std::getline(effects_in, line);
    out << "  label            mean      sd        tail_prob  causal\n";
    while (std::getline(effects_in, line)) {
      std::istringstream ls(line);
      std::string label, mean_s, sd_s, se_s, tail_s, causal_s, nseeds_s;
      std::getline(ls, label, '\t');
      std::getline(ls, mean_s, '\t');
      std::getline(ls, sd_s, '\t');
      std::getline(ls, se_s, '\t');
      std::getline(ls, tail_s, '\t');
      std::getline(ls, causal_s, '\t');
      std::getline(ls, nseeds_s, '\t');
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %-16s %-9.3f %-9.3f %-10.3f %s/%s\n",
                    label.c_str(), std::atof(mean_s.c_str()), std::atof(sd_s.c_str()),
                    std::atof(tail_s.c_str()), causal_s.c_str(), nseeds_s.c_str());
      out << buf;
    }
  }

  std::ifstream metrics_in(base / "metrics_summary.tsv");
  if (metrics_in) {
    out << "\nmetrics (vs ground truth)\n";
    std::string line;
    std::getline(metrics_in, line);
    out << "  seed    rmse     %cov-all  %cov-causal  %cov-noncausal\n";
    while (std::getline(metrics_in, line)) {
      std::istringstream ls(line);
      std::string seed, rmse_s, all_s, ca_s, nc_s;
      std::getline(ls, seed, '\t');
      std::getline(ls, rmse_s, '\t');
      std::getline(ls, all_s, '\t');
      std::getline(ls, ca_s, '\t');
      std::getline(ls, nc_s, '\t');
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %-7s %-8.4f %-9.1f %-12s %s\n", seed.c_str(),
                    std::atof(rmse_s.c_str()), std::atof(all_s.c_str()), ca_s.c_str(),
                    nc_s.c_str());
      out << buf;
    }
  }
  return out.str();
}

}  // namespace deconf
