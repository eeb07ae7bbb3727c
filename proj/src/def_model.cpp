#include "deconf/def_model.hpp"

#include <cmath>

#include "deconf/rng.hpp"

namespace deconf {

namespace {

constexpr double kHalfLog2PiPlusHalf = 1.4189385332046727418;  // 0.5 + 0.5 log(2 pi)

// E[log p(v)] under Gamma(alpha, beta); log v comes in precomputed because
// it equals loc + s*eps under the reparameterization.
double gamma_prior_sum(const Matrix& value, const Matrix& log_value, double alpha,
                       double beta) {
  const double c = alpha * std::log(beta) - std::lgamma(alpha);
  return value.size() * c + (alpha - 1.0) * log_value.sum() - beta * value.sum();
}

// Reusable buffers for the per-step ELBO/gradient evaluation.
struct DefEval {
  const ExposureMatrix& data;
  const DefConfig& config;
  Matrix obs;            // 1 = contributes to the likelihood
  double lgamma_const = 0.0;
  int n, d;

  Matrix s_z1, s_z2, s_w1, s_w0;
  Matrix log_z1, log_z2, log_w1, log_w0;
  Matrix z1, z2, w1, w0;
  Matrix pre_r, r, pre_l, lambda;
  Matrix g_pre_l, g_z1, g_w0, g_pre_r, g_z2, g_w1;

  DefEval(const ExposureMatrix& exposures, const HoldoutMask* mask, const DefConfig& cfg)
      : data(exposures), config(cfg) {
    n = static_cast<int>(exposures.n_patients());
    d = static_cast<int>(exposures.n_causes());
    obs = Matrix::Ones(n, d);
    if (mask)
      for (int i = 0; i < n; ++i)
        for (int j : mask->heldout[i]) obs(i, j) = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        if (obs(i, j) != 0.0) lgamma_const += std::lgamma(exposures.values(i, j) + 1.0);
    pre_r.resize(n, cfg.k1);
    pre_l.resize(n, d);
    g_z1.resize(n, cfg.k1);
    g_w0.resize(d, cfg.k1);
    g_z2.resize(n, cfg.k2);
    g_w1.resize(cfg.k1, cfg.k2);
  }

  static void softplus_into(const Matrix& x, double floor, Matrix& out) {
    out = x.array().max(0.0) + (-x.array().abs()).exp().log1p() + floor;
  }

  double eval(const DefParams& params, const DefParams& noise, DefParams* grad) {
    const double alpha = config.alpha, beta = config.beta, floor = config.link_floor;
    const auto& a = data.values;

    s_z1 = params.z1_logs.array().exp();
    s_z2 = params.z2_logs.array().exp();
    s_w1 = params.w1_logs.array().exp();
    s_w0 = params.w0_logs.array().exp();
    log_z1 = params.z1_loc.array() + s_z1.array() * noise.z1_loc.array();
    log_z2 = params.z2_loc.array() + s_z2.array() * noise.z2_loc.array();
    log_w1 = params.w1_loc.array() + s_w1.array() * noise.w1_loc.array();
    log_w0 = params.w0_loc.array() + s_w0.array() * noise.w0_loc.array();
    z1 = log_z1.array().exp();
    z2 = log_z2.array().exp();
    w1 = log_w1.array().exp();
    w0 = log_w0.array().exp();

    pre_r.noalias() = z2 * w1.transpose();
    softplus_into(pre_r, floor, r);
    pre_l.noalias() = z1 * w0.transpose();
    softplus_into(pre_l, floor, lambda);

    double logp =
        (obs.array() * (a.array() * lambda.array().log() - lambda.array())).sum() -
        lgamma_const;
    logp += alpha * r.array().log().sum() -
            static_cast<double>(r.size()) * std::lgamma(alpha) +
            (alpha - 1.0) * log_z1.sum() - (r.array() * z1.array()).sum();
    logp += gamma_prior_sum(z2, log_z2, alpha, beta);
    logp += gamma_prior_sum(w1, log_w1, alpha, beta);
    logp += gamma_prior_sum(w0, log_w0, alpha, beta);

    const double n_entries =
        static_cast<double>(z1.size() + z2.size() + w1.size() + w0.size());
    const double entropy = params.z1_loc.sum() + params.z1_logs.sum() +
                           params.z2_loc.sum() + params.z2_logs.sum() +
                           params.w1_loc.sum() + params.w1_logs.sum() +
                           params.w0_loc.sum() + params.w0_logs.sum() +
                           n_entries * kHalfLog2PiPlusHalf;
    const double elbo = logp + entropy;
    if (!grad) return elbo;

    // gradients with respect to the sampled values, likelihood first
    g_pre_l = (obs.array() * (a.array() / lambda.array() - 1.0)) *
              (1.0 / (1.0 + (-pre_l.array()).exp()));
    g_z1.noalias() = g_pre_l * w0;
    g_z1.array() += (alpha - 1.0) / z1.array() - r.array();
    g_w0.noalias() = g_pre_l.transpose() * z1;
    g_w0.array() += (alpha - 1.0) / w0.array() - beta;

    g_pre_r = (alpha / r.array() - z1.array()) * (1.0 / (1.0 + (-pre_r.array()).exp()));
    g_z2.noalias() = g_pre_r * w1;
    g_z2.array() += (alpha - 1.0) / z2.array() - beta;
    g_w1.noalias() = g_pre_r.transpose() * z2;
    g_w1.array() += (alpha - 1.0) / w1.array() - beta;

    // chain through value = exp(loc + s*eps); entropy adds 1 per parameter
    grad->z1_loc = (g_z1.array() * z1.array() + 1.0).matrix();
    grad->z1_logs =
        (g_z1.array() * z1.array() * s_z1.array() * noise.z1_loc.array() + 1.0).matrix();
    grad->z2_loc = (g_z2.array() * z2.array() + 1.0).matrix();
    grad->z2_logs =
        (g_z2.array() * z2.array() * s_z2.array() * noise.z2_loc.array() + 1.0).matrix();
    grad->w1_loc = (g_w1.array() * w1.array() + 1.0).matrix();
    grad->w1_logs =
        (g_w1.array() * w1.array() * s_w1.array() * noise.w1_loc.array() + 1.0).matrix();
    grad->w0_loc = (g_w0.array() * w0.array() + 1.0).matrix();
    grad->w0_logs =
        (g_w0.array() * w0.array() * s_w0.array() * noise.w0_loc.array() + 1.0).matrix();
    return elbo;
  }
};

}  // namespace

DefParams DefParams::zeros(int n, int d, int k1, int k2) {
  DefParams p;
  p.z1_loc = Matrix::Zero(n, k1);
  p.z1_logs = Matrix::Zero(n, k1);
  p.z2_loc = Matrix::Zero(n, k2);
  p.z2_logs = Matrix::Zero(n, k2);
  p.w1_loc = Matrix::Zero(k1, k2);
  p.w1_logs = Matrix::Zero(k1, k2);
  p.w0_loc = Matrix::Zero(d, k1);
  p.w0_logs = Matrix::Zero(d, k1);
  return p;
}

Matrix DefFit::layer1_mean() const {
  return (params.z1_loc.array() + 0.5 * (2.0 * params.z1_logs.array()).exp()).exp();
}

Matrix DefFit::layer2_mean() const {
  return (params.z2_loc.array() + 0.5 * (2.0 * params.z2_logs.array()).exp()).exp();
}

Matrix DefFit::w0_mean() const {
  return (params.w0_loc.array() + 0.5 * (2.0 * params.w0_logs.array()).exp()).exp();
}

double DefFit::smoothed_elbo_at(int step, int window) const {
  const int end = std::min<int>(step + 1, static_cast<int>(elbo_trace.size()));
  const int begin = std::max(0, end - window);
  double acc = 0.0;
  for (int t = begin; t < end; ++t) acc += elbo_trace[t];
  return acc / std::max(1, end - begin);
}

double def_elbo(const ExposureMatrix& exposures, const HoldoutMask* mask,
                const DefConfig& config, const DefParams& params,
                const DefParams& noise, DefParams* grad) {
  DefEval eval(exposures, mask, config);
  return eval.eval(params, noise, grad);
}

DefFit fit_def(const ExposureMatrix& exposures, const DefConfig& config,
               const HoldoutMask* mask) {
  const int n = static_cast<int>(exposures.n_patients());
  const int d = static_cast<int>(exposures.n_causes());
  if (d < 2) throw ValidationError("def: needs at least 2 causes, got " + std::to_string(d));
  if (config.k2 < 1 || config.k1 <= config.k2)
    throw ValidationError("def: layer sizes must satisfy K1 > K2 >= 1");
  if (!(config.alpha > 0.0) || !(config.beta > 0.0))
    throw ValidationError("def: hyperparameters alpha and beta must be positive");
  if (config.steps < 1) throw ValidationError("def: needs at least one step");
  if (mask && mask->n_rows() != n)
    throw ValidationError("def: mask row count does not match data");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double v = exposures.values(i, j);
      if (!(v >= 0.0) || std::fabs(v - std::round(v)) > 1e-9)
        throw ValidationError("def: needs nonnegative count data, got " +
                              std::to_string(v) + " at row " + std::to_string(i) +
                              ", column " + std::to_string(j));
    }

  Rng rng(derive_seed(config.seed, 0x646566ULL));
  DefParams params = DefParams::zeros(n, d, config.k1, config.k2);
  params.for_each([&](Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = 0.1 * rng.normal();
  });
  const double logs0 = std::log(0.1);
  params.z1_logs.array() += logs0;
  params.z2_logs.array() += logs0;
  params.w1_logs.array() += logs0;
  params.w0_logs.array() += logs0;

  DefParams grad = DefParams::zeros(n, d, config.k1, config.k2);
  DefParams noise = DefParams::zeros(n, d, config.k1, config.k2);
  DefParams adam_m = DefParams::zeros(n, d, config.k1, config.k2);
  DefParams adam_v = DefParams::zeros(n, d, config.k1, config.k2);
  DefEval eval(exposures, mask, config);

  DefFit fit;
  fit.alpha = config.alpha;
  fit.beta = config.beta;
  fit.link_floor = config.link_floor;
  fit.elbo_trace.reserve(config.steps);

  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  const double tau = std::max(1.0, config.steps / 10.0);

  DefParams best = params;
  double best_smoothed = -std::numeric_limits<double>::infinity();
  int best_step = 0, last_snapshot = -1000000;
  double window_sum = 0.0;

  for (int step = 0; step < config.steps; ++step) {
    // one eps per latent entry; the *_logs slots mirror *_loc
    for (Matrix* m : {&noise.z1_loc, &noise.z2_loc, &noise.w1_loc, &noise.w0_loc})
      for (Eigen::Index c = 0; c < m->cols(); ++c)
        for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) = rng.normal();

    const double elbo = eval.eval(params, noise, &grad);
    if (!std::isfinite(elbo))
      throw NumericError("def: ELBO diverged (non-finite) at step " + std::to_string(step));
    fit.elbo_trace.push_back(elbo);

    window_sum += elbo;
    if (step >= config.elbo_window) window_sum -= fit.elbo_trace[step - config.elbo_window];
    const int filled = std::min(step + 1, config.elbo_window);
    const double smoothed = window_sum / filled;
    if (step + 1 >= config.elbo_window && smoothed > best_smoothed) {
      best_smoothed = smoothed;
      best_step = step;
      if (step - last_snapshot >= 50 || step == config.steps - 1) {
        best = params;
        last_snapshot = step;
      }
    }

    const double lr = config.learning_rate * tau / (tau + step);
    const double c1 = 1.0 - std::pow(b1, step + 1);
    const double c2 = 1.0 - std::pow(b2, step + 1);
    Matrix* ms[] = {&adam_m.z1_loc, &adam_m.z1_logs, &adam_m.z2_loc, &adam_m.z2_logs,
                    &adam_m.w1_loc, &adam_m.w1_logs, &adam_m.w0_loc, &adam_m.w0_logs};
    Matrix* vs[] = {&adam_v.z1_loc, &adam_v.z1_logs, &adam_v.z2_loc, &adam_v.z2_logs,
                    &adam_v.w1_loc, &adam_v.w1_logs, &adam_v.w0_loc, &adam_v.w0_logs};
    Matrix* gs[] = {&grad.z1_loc, &grad.z1_logs, &grad.z2_loc, &grad.z2_logs,
                    &grad.w1_loc, &grad.w1_logs, &grad.w0_loc, &grad.w0_logs};
    Matrix* ps[] = {&params.z1_loc, &params.z1_logs, &params.z2_loc, &params.z2_logs,
                    &params.w1_loc, &params.w1_logs, &params.w0_loc, &params.w0_logs};
    for (int b = 0; b < 8; ++b) {
      *ms[b] = b1 * *ms[b] + (1.0 - b1) * *gs[b];
      *vs[b] = (b2 * vs[b]->array() + (1.0 - b2) * gs[b]->array().square()).matrix();
      ps[b]->array() +=
          lr * (ms[b]->array() / c1) / ((vs[b]->array() / c2).sqrt() + adam_eps);
    }
  }

  // keep the best smoothed iterate (may be the final one)
  const double final_smoothed = fit.smoothed_elbo_at(config.steps - 1, config.elbo_window);
  if (best_smoothed > final_smoothed && last_snapshot >= 0) {
    fit.params = best;
    fit.best_step = best_step;
  } else {
    fit.params = params;
    fit.best_step = config.steps - 1;
  }
  return fit;
}

}  // namespace deconf
