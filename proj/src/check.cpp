#include "deconf/check.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "deconf/rng.hpp"

namespace deconf {

namespace {

double softplus1(double x, double floor) {
  const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return sp + floor;
}

// Shared machinery for the heldout statistic and replicate generation: one
// posterior draw of the per-patient latents turns into a likelihood
// parameter (Poisson rate or Gaussian mean) for every heldout entry.
struct DrawEngine {
  const FactorFit& fit;
  const ExposureMatrix& data;
  const HoldoutMask& mask;

  std::vector<std::pair<int, int>> entries;  // (row, col), row-major
  std::vector<int> rows_with_heldout;
  bool gaussian = false;
  double sigma2 = 1.0;

  // pmf / def: fixed global-parameter means
  Matrix theta_hat;  // pmf: D x K, def: D x K1 (w0 mean)
  // ppca: exact per-row posterior
  Matrix post_mean;               // N x K
  std::vector<Matrix> post_chol;  // per row with heldout entries
  std::vector<int> chol_index;    // row -> index into post_chol, -1 otherwise

  DrawEngine(const FactorFit& f, const ExposureMatrix& d, const HoldoutMask& m)
      : fit(f), data(d), mask(m) {
    const int n = static_cast<int>(d.n_patients());
    if (m.n_rows() != n) throw ValidationError("check: mask rows do not match data");
    for (int i = 0; i < n; ++i) {
      if (mask.heldout[i].empty()) continue;
      rows_with_heldout.push_back(i);
      for (int j : mask.heldout[i]) {
        if (j < 0 || j >= d.n_causes())
          throw ValidationError("check: mask column out of range");
        entries.emplace_back(i, j);
      }
    }
    switch (fit.kind) {
      case FactorModelKind::Ppca: {
        gaussian = true;
        sigma2 = fit.ppca->noise_var;
        const int k = static_cast<int>(fit.ppca->loadings.rows());
        post_mean.resize(n, k);
        chol_index.assign(n, -1);
        Vector mean;
        Matrix cov;
        for (int i : rows_with_heldout) {
          fit.ppca->posterior_row(data.values.row(i).transpose(), mask.heldout[i], mean, cov);
          post_mean.row(i) = mean.transpose();
          chol_index[i] = static_cast<int>(post_chol.size());
          post_chol.push_back(Eigen::LLT<Matrix>(cov).matrixL());
        }
        break;
      }
      case FactorModelKind::Pmf:
        theta_hat = fit.pmf->theta_mean();
        break;
      case FactorModelKind::Def:
        theta_hat = fit.def->w0_mean();
        break;
    }
  }

  size_t n_entries() const { return entries.size(); }

  // One posterior draw; param(e) is the likelihood parameter of entry e.
  void draw_params(Rng& rng, std::vector<double>& param) const {
    param.resize(entries.size());
    switch (fit.kind) {
      case FactorModelKind::Ppca: {
        const int k = static_cast<int>(fit.ppca->loadings.rows());
        Matrix z(post_mean.rows(), k);
        Vector eps(k);
        for (int i : rows_with_heldout) {
          for (int c = 0; c < k; ++c) eps(c) = rng.normal();
          z.row(i) = post_mean.row(i) + (post_chol[chol_index[i]] * eps).transpose();
        }
        for (size_t e = 0; e < entries.size(); ++e)
          param[e] = z.row(entries[e].first).dot(fit.ppca->loadings.col(entries[e].second));
        break;
      }
      case FactorModelKind::Pmf: {
        const auto& f = *fit.pmf;
        const int k = static_cast<int>(f.z_shape.cols());
        Matrix z = Matrix::Zero(f.z_shape.rows(), k);
        for (int i : rows_with_heldout)
          for (int c = 0; c < k; ++c)
            z(i, c) = rng.gamma(f.z_shape(i, c), f.z_rate(i, c));
        for (size_t e = 0; e < entries.size(); ++e)
          param[e] = z.row(entries[e].first).dot(theta_hat.row(entries[e].second));
        break;
      }
      case FactorModelKind::Def: {
        const auto& f = *fit.def;
        const int k = static_cast<int>(f.params.z1_loc.cols());
        Matrix z = Matrix::Zero(f.params.z1_loc.rows(), k);
        for (int i : rows_with_heldout)
          for (int c = 0; c < k; ++c)
            z(i, c) = std::exp(f.params.z1_loc(i, c) +
                               std::exp(f.params.z1_logs(i, c)) * rng.normal());
        for (size_t e = 0; e < entries.size(); ++e)
          param[e] = softplus1(z.row(entries[e].first).dot(theta_hat.row(entries[e].second)),
                               f.link_floor);
        break;
      }
    }
  }

  void sample_entries(Rng& rng, const std::vector<double>& param,
                      std::vector<double>& out) const {
    out.resize(param.size());
    if (gaussian) {
      const double sd = std::sqrt(sigma2);
      for (size_t e = 0; e < param.size(); ++e) out[e] = param[e] + sd * rng.normal();
    } else {
      for (size_t e = 0; e < param.size(); ++e)
        out[e] = static_cast<double>(rng.poisson(param[e]));
    }
  }

  double loglik(const std::vector<double>& x, const std::vector<double>& param) const {
    double acc = 0.0;
    if (gaussian) {
      const double c = -0.5 * std::log(2.0 * 3.14159265358979323846 * sigma2);
      for (size_t e = 0; e < x.size(); ++e) {
        const double r = x[e] - param[e];
        acc += c - 0.5 * r * r / sigma2;
      }
    } else {
      for (size_t e = 0; e < x.size(); ++e) {
        acc -= param[e] + std::lgamma(x[e] + 1.0);
        if (x[e] > 0.0) acc += x[e] * std::log(std::max(param[e], 1e-300));
      }
    }
    return acc;
  }
};

std::vector<double> observed_entries(const DrawEngine& engine) {
  std::vector<double> x(engine.n_entries());
  for (size_t e = 0; e < x.size(); ++e)
    x[e] = engine.data.values(engine.entries[e].first, engine.entries[e].second);
  return x;
}

// Sufficient statistics of the heldout statistic over posterior draws.  The
// Poisson and Gaussian log-likelihoods are affine in (x), respectively
// (x, x^2), so any statistic value reduces to per-entry accumulators.  Entry
// order is row-major, so each heldout patient owns a contiguous slice.
struct StatCache {
  bool gaussian;
  double sigma2 = 1.0;
  int n_post = 0;
  std::vector<double> log_rate_sum;            // poisson: sum_s log rate, per entry
  std::vector<double> mean_sum, mean_sq_sum;   // gaussian per-entry
  std::vector<double> const_term;              // per patient: -(1/S) sum_s sum_e rate,
                                               // or the gaussian normalizer
  std::vector<std::pair<size_t, size_t>> slices;  // per-patient [begin, end)

  // Expected heldout log-likelihood of patient pi under entries x,
  // normalized by the saturated log-likelihood of x itself.  The
  // normalization drops out for the Gaussian case (it only shifts by the
  // common constant) but matters for Poisson comparisons: without it, a
  // replicate's own entropy term can push misfit scores toward 1 on some
  // patients and 0 on others, cancelling in the average.
  double t_patient(size_t pi, const std::vector<double>& x) const {
    const double s = static_cast<double>(n_post);
    const auto [begin, end] = slices[pi];
    double acc = const_term[pi];
    if (gaussian) {
      double quad = 0.0;
      for (size_t e = begin; e < end; ++e)
        quad += s * x[e] * x[e] - 2.0 * x[e] * mean_sum[e] + mean_sq_sum[e];
      acc -= 0.5 * quad / (sigma2 * s);
    } else {
      for (size_t e = begin; e < end; ++e)
        if (x[e] > 0.0)
          acc += x[e] * (log_rate_sum[e] / s - std::log(x[e]) + 1.0);
    }
    return acc;
  }

  double t_global(const std::vector<double>& x) const {
    double acc = 0.0;
    for (size_t pi = 0; pi < slices.size(); ++pi) acc += t_patient(pi, x);
    return acc;
  }
};

StatCache build_cache(const DrawEngine& engine, int n_post, std::uint64_t seed,
                      HeldoutLoglik* observed) {
  StatCache cache;
  cache.gaussian = engine.gaussian;
  cache.sigma2 = engine.sigma2;
  cache.n_post = n_post;
  const size_t ne = engine.n_entries();

  size_t cursor = 0;
  for (int i : engine.rows_with_heldout) {
    const size_t len = engine.mask.heldout[i].size();
    cache.slices.emplace_back(cursor, cursor + len);
    cursor += len;
  }
  const size_t n_pat = cache.slices.size();
  cache.const_term.assign(n_pat, 0.0);
  if (cache.gaussian) {
    cache.mean_sum.assign(ne, 0.0);
    cache.mean_sq_sum.assign(ne, 0.0);
  } else {
    cache.log_rate_sum.assign(ne, 0.0);
  }

  const std::vector<double> x_obs = observed_entries(engine);
  std::vector<double> param;
  double t_sum = 0.0, t_sq_sum = 0.0;
  for (int s = 0; s < n_post; ++s) {
    Rng rng(derive_seed(seed, seed_tag::post_draw, static_cast<std::uint64_t>(s)));
    engine.draw_params(rng, param);
    if (cache.gaussian) {
      for (size_t e = 0; e < ne; ++e) {
        cache.mean_sum[e] += param[e];
        cache.mean_sq_sum[e] += param[e] * param[e];
      }
    } else {
      for (size_t pi = 0; pi < n_pat; ++pi)
        for (size_t e = cache.slices[pi].first; e < cache.slices[pi].second; ++e)
          cache.log_rate_sum[e] += std::log(std::max(param[e], 1e-300));
    }
    if (!cache.gaussian)
      for (size_t pi = 0; pi < n_pat; ++pi)
        for (size_t e = cache.slices[pi].first; e < cache.slices[pi].second; ++e)
          cache.const_term[pi] -= param[e];
    if (observed) {
      const double ts = engine.loglik(x_obs, param);
      t_sum += ts;
      t_sq_sum += ts * ts;
    }
  }
  const double s = static_cast<double>(n_post);
  if (cache.gaussian) {
    const double c = -0.5 * std::log(2.0 * 3.14159265358979323846 * cache.sigma2);
    for (size_t pi = 0; pi < n_pat; ++pi)
      cache.const_term[pi] =
          c * static_cast<double>(cache.slices[pi].second - cache.slices[pi].first);
  } else {
    for (double& v : cache.const_term) v /= s;
  }
  if (observed) {
    observed->value = t_sum / s;
    const double var =
        std::max(0.0, (t_sq_sum - t_sum * t_sum / s) / std::max(1.0, s - 1.0));
    observed->mc_std_err = std::sqrt(var / s);
  }
  return cache;
}

}  // namespace

HeldoutLoglik heldout_loglik(const FactorFit& fit, const ExposureMatrix& exposures,
                             const HoldoutMask& mask, int n_post, std::uint64_t seed) {
  if (n_post < 1) throw ValidationError("heldout_loglik: needs at least one posterior draw");
  DrawEngine engine(fit, exposures, mask);
  if (engine.n_entries() == 0) throw ValidationError("heldout_loglik: mask holds no entries");
  HeldoutLoglik out;
  build_cache(engine, n_post, seed, &out);
  return out;
}

double score_from_stats(double observed, const std::vector<double>& replicated) {
  if (replicated.empty())
    throw ValidationError("predictive score: at least one replicate required");
  double acc = 0.0;
  for (double t : replicated) {
    if (t < observed)
      acc += 1.0;
    else if (t == observed)
      acc += 0.5;
  }
  return acc / static_cast<double>(replicated.size());
}

Matrix posterior_predictive_samples(const FactorFit& fit, const ExposureMatrix& exposures,
                                    const HoldoutMask& mask, int n_rep,
                                    std::uint64_t seed) {
  if (n_rep < 1) throw ValidationError("posterior predictive: at least one replicate required");
  DrawEngine engine(fit, exposures, mask);
  Matrix reps(n_rep, engine.n_entries());
  std::vector<double> param, x;
  for (int r = 0; r < n_rep; ++r) {
    Rng rng(derive_seed(seed, seed_tag::replicate, static_cast<std::uint64_t>(r)));
    engine.draw_params(rng, param);
    engine.sample_entries(rng, param, x);
    for (size_t e = 0; e < x.size(); ++e) reps(r, static_cast<Eigen::Index>(e)) = x[e];
  }
  return reps;
}

CheckResult predictive_score(const FactorFit& fit, const ExposureMatrix& exposures,
                             const HoldoutMask& mask, const CheckConfig& config) {
  if (config.n_rep < 1)
    throw ValidationError("predictive score: at least one replicate required");
  if (config.n_post < 1)
    throw ValidationError("predictive score: at least one posterior draw required");
  if (!(config.band_lo >= 0.0 && config.band_lo < config.band_hi && config.band_hi <= 1.0))
    throw ValidationError("predictive score: invalid pass band");

  DrawEngine engine(fit, exposures, mask);
  if (engine.n_entries() == 0)
    throw ValidationError("predictive score: mask holds no entries");

  const StatCache cache = build_cache(engine, config.n_post, config.seed, nullptr);
  const size_t n_pat = cache.slices.size();

  // Per-patient comparison of the observed statistic against replicates,
  // averaged across patients.  The averaging concentrates the score near
  // 0.5 for an adequate model while a misfit drags most patients to one
  // side; the global statistics are kept for reporting.
  const std::vector<double> x_obs = observed_entries(engine);
  std::vector<double> t_obs_pat(n_pat);
  double t_obs_global = 0.0;
  for (size_t pi = 0; pi < n_pat; ++pi) {
    t_obs_pat[pi] = cache.t_patient(pi, x_obs);
    t_obs_global += t_obs_pat[pi];
  }

  CheckResult result;
  result.observed_stat = t_obs_global;
  result.replicated_stats.reserve(config.n_rep);
  std::vector<double> below(n_pat, 0.0);
  std::vector<double> param, x;
  for (int r = 0; r < config.n_rep; ++r) {
    Rng rng(derive_seed(config.seed, seed_tag::replicate, static_cast<std::uint64_t>(r)));
    engine.draw_params(rng, param);
    engine.sample_entries(rng, param, x);
    double t_global = 0.0;
    for (size_t pi = 0; pi < n_pat; ++pi) {
      const double t_rep = cache.t_patient(pi, x);
      t_global += t_rep;
      if (t_rep < t_obs_pat[pi])
        below[pi] += 1.0;
      else if (t_rep == t_obs_pat[pi])
        below[pi] += 0.5;
    }
    result.replicated_stats.push_back(t_global);
  }
  double score_acc = 0.0;
  for (size_t pi = 0; pi < n_pat; ++pi)
    score_acc += below[pi] / static_cast<double>(config.n_rep);
  result.score = score_acc / static_cast<double>(n_pat);
  result.band_lo = config.band_lo;
  result.band_hi = config.band_hi;
  result.pass = result.score >= config.band_lo && result.score <= config.band_hi;
  result.warn = result.score < 0.2 || result.score > 0.8;
  result.n_post = config.n_post;
  return result;
}

void write_check_report(const CheckResult& result, const std::string& path) {
  nlohmann::ordered_json j;
  j["score"] = result.score;
  j["verdict"] = result.pass ? "pass" : "fail";
  j["warn"] = result.warn;
  j["band"] = {result.band_lo, result.band_hi};
  j["observed_stat"] = result.observed_stat;
  j["n_rep"] = result.replicated_stats.size();
  j["n_post"] = result.n_post;
  j["replicated_stats"] = result.replicated_stats;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace deconf
