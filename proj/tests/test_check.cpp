#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "deconf/check.hpp"
#include "deconf/rng.hpp"
#include "deconf/simulate.hpp"

using namespace deconf;

namespace {

ExposureMatrix random_counts(Rng& rng, int n, int d, double p1 = 0.4) {
  ExposureMatrix e;
  e.values.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) e.values(i, j) = rng.bernoulli(p1) ? 1.0 : 0.0;
  e.binary = true;
  return e;
}

// A ~ Poisson(z theta') with z, theta drawn from the Gamma prior.
ExposureMatrix pmf_generated(Rng& rng, int n, int d, int k, double alpha, double beta) {
  Matrix z(n, k), theta(d, k);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) z(i, c) = rng.gamma(alpha, beta);
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < k; ++c) theta(j, c) = rng.gamma(alpha, beta);
  ExposureMatrix e;
  e.values.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      e.values(i, j) = static_cast<double>(rng.poisson(z.row(i).dot(theta.row(j))));
  e.binary = false;
  return e;
}

FactorFit pmf_wrap(PmfFit fit) {
  FactorFit f;
  f.kind = FactorModelKind::Pmf;
  f.pmf = std::move(fit);
  return f;
}

}  // namespace

TEST_CASE("holdout mask arithmetic") {
  SUBCASE("d=50 at 20% holds out exactly 10 per patient") {
    HoldoutMask mask = make_holdout_mask(200, 50, 0.2, 1);
    for (const auto& row : mask.heldout) {
      CHECK(row.size() == 10);
      for (size_t t = 1; t < row.size(); ++t) CHECK(row[t] > row[t - 1]);  // unique
    }
  }
  SUBCASE("d=2 at 20% holds out one entry for a fraction of patients") {
    HoldoutMask mask = make_holdout_mask(5000, 2, 0.2, 2);
    std::size_t ones = 0;
    for (const auto& row : mask.heldout) {
      CHECK(row.size() <= 1);  // every patient keeps an observed entry
      ones += row.size();
    }
    const double share = static_cast<double>(ones) / 5000.0;
    CHECK(share > 0.3);
    CHECK(share < 0.5);
  }
  SUBCASE("same seed reproduces the mask, different seed does not") {
    HoldoutMask a = make_holdout_mask(40, 8, 0.25, 7);
    HoldoutMask b = make_holdout_mask(40, 8, 0.25, 7);
    HoldoutMask c = make_holdout_mask(40, 8, 0.25, 8);
    CHECK(a.heldout == b.heldout);
    CHECK(a.heldout != c.heldout);
  }
  SUBCASE("fraction bounds") {
    CHECK_THROWS_AS(make_holdout_mask(10, 5, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(make_holdout_mask(10, 5, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(make_holdout_mask(10, 5, -0.1, 1), ValidationError);
  }
  SUBCASE("high fractions still leave one observed entry") {
    HoldoutMask mask = make_holdout_mask(30, 4, 0.9, 3);
    for (const auto& row : mask.heldout) CHECK(row.size() <= 3);
  }
}

TEST_CASE("score_from_stats follows the strict-below, half-tie rule") {
  CHECK(score_from_stats(1.0, {0.0, 2.0}) == doctest::Approx(0.5));
  CHECK(score_from_stats(1.0, {1.0, 1.0}) == doctest::Approx(0.5));
  CHECK(score_from_stats(1.0, {0.0, 0.5, 0.9}) == doctest::Approx(1.0));
  CHECK(score_from_stats(1.0, {2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(score_from_stats(1.0, {0.0, 1.0, 2.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(score_from_stats(1.0, {}), ValidationError);
}

TEST_CASE("score is invariant to common strictly monotone transforms") {
  Rng rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    const double observed = rng.normal();
    std::vector<double> reps;
    for (int r = 0; r < 17; ++r)
      reps.push_back(rng.bernoulli(0.2) ? observed : rng.normal());
    const double base = score_from_stats(observed, reps);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    auto transform = [](double x) { return std::exp(0.7 * x) + 3.0; };
    std::vector<double> mapped;
    for (double r : reps) mapped.push_back(transform(r));
    CHECK(score_from_stats(transform(observed), mapped) == doctest::Approx(base));
  }
}

TEST_CASE("heldout loglik hits closed forms in degenerate limits") {
  SUBCASE("poisson entry 0 with a near-degenerate posterior contributes -rate") {
    const double rate = 0.7;
    PmfFit pmf;
    const double c = 1e10;
    pmf.z_shape = Matrix::Constant(1, 1, c);
    pmf.z_rate = Matrix::Constant(1, 1, c);  // z concentrated at 1
    pmf.theta_shape = Matrix::Constant(2, 1, rate);
    pmf.theta_rate = Matrix::Constant(2, 1, 1.0);  // E[theta] = rate
    ExposureMatrix data;
    data.values = Matrix::Zero(1, 2);
    HoldoutMask mask;
    mask.heldout = {{1}};
    HeldoutLoglik t = heldout_loglik(pmf_wrap(pmf), data, mask, 200, 3);
    CHECK(t.value == doctest::Approx(-rate).epsilon(1e-3));
  }
  SUBCASE("gaussian entry at the predicted mean contributes the normalizer") {
    PpcaFit ppca;
    ppca.loadings.resize(1, 2);
    ppca.loadings << 100.0, 0.5;  // column 0 pins z almost exactly
    ppca.noise_var = 0.5;
    FactorFit fit;
    fit.kind = FactorModelKind::Ppca;
    fit.ppca = ppca;
    const double z_true = 0.3;
    ExposureMatrix data;
    data.values.resize(1, 2);
    data.values << 100.0 * z_true, 0.5 * z_true;
    HoldoutMask mask;
    mask.heldout = {{1}};
    HeldoutLoglik t = heldout_loglik(fit, data, mask, 200, 4);
    const double expected = -0.5 * std::log(2.0 * 3.14159265358979 * 0.5);
    CHECK(t.value == doctest::Approx(expected).epsilon(1e-3));
  }
}

TEST_CASE("doubling the posterior draws moves the estimate within noise") {
  Rng rng(62);
  ExposureMatrix expo = random_counts(rng, 60, 10);
  HoldoutMask mask = make_holdout_mask(60, 10, 0.2, 5);
  PmfConfig cfg;
  cfg.k = 3;
  cfg.seed = 6;
  FactorFit fit = pmf_wrap(fit_pmf(expo, cfg, &mask));
  HeldoutLoglik t100 = heldout_loglik(fit, expo, mask, 100, 11);
  HeldoutLoglik t200 = heldout_loglik(fit, expo, mask, 200, 12);
  const double band = 3.0 * std::sqrt(t100.mc_std_err * t100.mc_std_err +
                                      t200.mc_std_err * t200.mc_std_err);
  CHECK(std::fabs(t100.value - t200.value) < band);
}

TEST_CASE("well-specified refits score near one half") {
  Rng rng(63);
  int inside = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    ExposureMatrix data = pmf_generated(rng, 120, 12, 3, 0.5, 0.5);
    HoldoutMask mask = make_holdout_mask(120, 12, 0.2, 70 + t);
    PmfConfig cfg;
    cfg.k = 3;
    cfg.alpha = 0.5;
    cfg.beta = 0.5;
    cfg.seed = 700 + t;
    FactorFit fit = pmf_wrap(fit_pmf(data, cfg, &mask));
    CheckConfig cc;
    cc.seed = 7000 + t;
    CheckResult result = predictive_score(fit, data, mask, cc);
    if (result.score >= 0.2 && result.score <= 0.8) ++inside;
  }
  CHECK(inside >= 8);
}

TEST_CASE("an unrelated random model fails the band") {
  MultiMedConfig mc;
  mc.n_patients = 400;
  mc.seed = 3;
  Cohort cohort = simulate_multi_med(mc);
  HoldoutMask mask = make_holdout_mask(400, 50, 0.2, 5);
  PmfConfig cfg;
  cfg.k = 10;
  cfg.seed = 6;
  PmfFit fitted = fit_pmf(cohort.exposures, cfg, &mask);
  // replace every variational factor with prior-scale noise
  Rng rng(9);
  PmfFit random_model = fitted;
  auto randomize = [&](Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = 0.3 + rng.uniform();
  };
  randomize(random_model.z_shape);
  randomize(random_model.z_rate);
  randomize(random_model.theta_shape);
  randomize(random_model.theta_rate);

  CheckConfig cc;
  cc.seed = 11;
  CheckResult good = predictive_score(pmf_wrap(fitted), cohort.exposures, mask, cc);
  CheckResult bad = predictive_score(pmf_wrap(random_model), cohort.exposures, mask, cc);
  CHECK(good.pass);
  CHECK_FALSE(bad.pass);
  CHECK((bad.score < 0.05 || bad.score > 0.95));
}

TEST_CASE("replicate column means bracket the observed ones for most causes") {
  Rng rng(65);
  ExposureMatrix data = pmf_generated(rng, 200, 12, 3, 0.5, 0.5);
  HoldoutMask mask = make_holdout_mask(200, 12, 0.25, 13);
  PmfConfig cfg;
  cfg.k = 3;
  cfg.alpha = 0.5;
  cfg.beta = 0.5;
  cfg.seed = 14;
  FactorFit fit = pmf_wrap(fit_pmf(data, cfg, &mask));
  Matrix reps = posterior_predictive_samples(fit, data, mask, 100, 15);

  // flattened entry order is row-major over patients; group by column
  std::vector<double> observed;
  std::map<int, std::vector<int>> entry_of_col;
  int e = 0;
  for (int i = 0; i < mask.n_rows(); ++i)
    for (int j : mask.heldout[i]) {
      observed.push_back(data.values(i, j));
      entry_of_col[j].push_back(e++);
    }
  REQUIRE(e == static_cast<int>(reps.cols()));

  int bracketed = 0, total = 0;
  for (const auto& [col, entries] : entry_of_col) {
    if (entries.size() < 3) continue;
    ++total;
    double obs_mean = 0.0;
    for (int idx : entries) obs_mean += observed[idx];
    obs_mean /= static_cast<double>(entries.size());
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < reps.rows(); ++r) {
      double m = 0.0;
      for (int idx : entries) m += reps(r, idx);
      m /= static_cast<double>(entries.size());
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    if (lo <= obs_mean && obs_mean <= hi) ++bracketed;
  }
  REQUIRE(total > 0);
  CHECK(bracketed * 2 >= total);
}

TEST_CASE("ppca replicates carry at least the observation noise") {
  Rng rng(66);
  ExposureMatrix expo;
  expo.values.resize(150, 6);
  for (int i = 0; i < 150; ++i)
    for (int j = 0; j < 6; ++j) expo.values(i, j) = rng.normal();
  HoldoutMask mask = make_holdout_mask(150, 6, 0.2, 17);
  PpcaConfig cfg;
  cfg.k = 2;
  cfg.seed = 18;
  FactorFit fit;
  fit.kind = FactorModelKind::Ppca;
  fit.ppca = fit_ppca(expo, cfg, &mask);
  Matrix reps = posterior_predictive_samples(fit, expo, mask, 400, 19);
  double mean_var = 0.0;
  for (Eigen::Index c = 0; c < reps.cols(); ++c) {
    const double m = reps.col(c).mean();
    mean_var += (reps.col(c).array() - m).square().sum() / (reps.rows() - 1);
  }
  mean_var /= static_cast<double>(reps.cols());
  CHECK(mean_var >= 0.95 * fit.ppca->noise_var);
}

TEST_CASE("predictive check is reproducible and validates its inputs") {
  Rng rng(67);
  ExposureMatrix expo = random_counts(rng, 40, 8);
  HoldoutMask mask = make_holdout_mask(40, 8, 0.25, 20);
  PmfConfig cfg;
  cfg.k = 2;
  cfg.seed = 21;
  FactorFit fit = pmf_wrap(fit_pmf(expo, cfg, &mask));

  CheckConfig cc;
  cc.seed = 22;
  CheckResult a = predictive_score(fit, expo, mask, cc);
  CheckResult b = predictive_score(fit, expo, mask, cc);
  CHECK(a.score == b.score);
  CHECK(a.observed_stat == b.observed_stat);
  CHECK(a.replicated_stats == b.replicated_stats);
  CHECK(a.replicated_stats.size() == 100);

  CheckConfig zero = cc;
  zero.n_rep = 0;
  CHECK_THROWS_AS(predictive_score(fit, expo, mask, zero), ValidationError);
  CheckConfig nodraws = cc;
  nodraws.n_post = 0;
  CHECK_THROWS_AS(predictive_score(fit, expo, mask, nodraws), ValidationError);
  CHECK_THROWS_AS(heldout_loglik(fit, expo, mask, 0, 1), ValidationError);
  CHECK_THROWS_AS(posterior_predictive_samples(fit, expo, mask, 0, 1), ValidationError);
}

TEST_CASE("poisson rate zero produces all-zero replicates") {
  PmfFit pmf;
  pmf.z_shape = Matrix::Constant(3, 1, 1e-12);
  pmf.z_rate = Matrix::Constant(3, 1, 1.0);
  pmf.theta_shape = Matrix::Constant(4, 1, 1e-12);
  pmf.theta_rate = Matrix::Constant(4, 1, 1.0);
  ExposureMatrix data;
  data.values = Matrix::Zero(3, 4);
  HoldoutMask mask;
  mask.heldout = {{0, 2}, {1}, {3}};
  Matrix reps = posterior_predictive_samples(pmf_wrap(pmf), data, mask, 50, 23);
  CHECK(reps.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("check reports serialize with verdict and score") {
  CheckResult result;
  result.score = 0.42;
  result.observed_stat = -100.5;
  result.replicated_stats = {-101.0, -99.5};
  result.pass = true;
  result.warn = false;
  result.band_lo = 0.05;
  result.band_hi = 0.95;
  result.n_post = 100;
  const auto path =
      (std::filesystem::temp_directory_path() / "deconf_check_report.json").string();
  write_check_report(result, path);
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  CHECK(j["score"].get<double>() == doctest::Approx(0.42));
  CHECK(j["verdict"].get<std::string>() == "pass");
  CHECK(j["band"][1].get<double>() == doctest::Approx(0.95));
  CHECK(j["replicated_stats"].size() == 2);
}
