#include "deconf/ppca.hpp"

#include <cmath>
#include <map>

#include "deconf/rng.hpp"

namespace deconf {

namespace {

constexpr double kSigmaFloor = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<int> observed_columns(int d, const std::vector<int>& heldout) {
  std::vector<int> obs;
  obs.reserve(d - heldout.size());
  size_t h = 0;
  for (int j = 0; j < d; ++j) {
    if (h < heldout.size() && heldout[h] == j) {
      ++h;
      continue;
    }
    obs.push_back(j);
  }
  return obs;
}

}  // namespace

void PpcaFit::posterior_row(const Vector& row, const std::vector<int>& heldout,
                            Vector& mean, Matrix& cov) const {
  const int k = static_cast<int>(loadings.rows());
  const int d = static_cast<int>(loadings.cols());
  const auto obs = observed_columns(d, heldout);
  Matrix m = noise_var * Matrix::Identity(k, k);
  Vector g = Vector::Zero(k);
  for (int j : obs) {
    const Vector w = loadings.col(j);
    m.noalias() += w * w.transpose();
    g.noalias() += row(j) * w;
  }
  Eigen::LLT<Matrix> llt(m);
  mean = llt.solve(g);
  cov = noise_var * llt.solve(Matrix::Identity(k, k));
}

PpcaFit fit_ppca(const ExposureMatrix& exposures, const PpcaConfig& config,
                 const HoldoutMask* mask) {
  const int n = static_cast<int>(exposures.n_patients());
  const int d = static_cast<int>(exposures.n_causes());
  const int k = config.k;
  if (d < 2) throw ValidationError("ppca: needs at least 2 causes, got " + std::to_string(d));
  if (k < 1 || k > d)
    throw ValidationError("ppca: k must lie in [1, D], got " + std::to_string(k));
  if (mask && mask->n_rows() != n)
    throw ValidationError("ppca: mask row count does not match data");
  if (k == d) {
    for (int j = 0; j < d; ++j) {
      const double lo = exposures.values.col(j).minCoeff();
      const double hi = exposures.values.col(j).maxCoeff();
      if (lo == hi)
        throw NumericError("ppca: degenerate problem, column " + std::to_string(j) +
                           " is constant and k = D");
    }
  }

  const Matrix& a = exposures.values;

  // group rows sharing a heldout pattern so the K x K solve is done once
  std::vector<int> pattern_of(n, 0);
  std::vector<std::vector<int>> pattern_cols;  // observed columns per pattern
  if (mask) {
    std::map<std::vector<int>, int> ids;
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = ids.try_emplace(mask->heldout[i], static_cast<int>(pattern_cols.size()));
      if (fresh) pattern_cols.push_back(observed_columns(d, mask->heldout[i]));
      pattern_of[i] = it->second;
    }
  } else {
    pattern_cols.push_back(observed_columns(d, {}));
  }
  const int n_patterns = static_cast<int>(pattern_cols.size());

  long total_obs = 0;
  for (int i = 0; i < n; ++i) total_obs += pattern_cols[pattern_of[i]].size();

  Rng rng(derive_seed(config.seed, 0x70706361ULL));
  Matrix w(d, k);  // rows are per-cause loading vectors
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < k; ++c) w(j, c) = 0.1 * rng.normal();
  double sigma2 = 1.0;

  Matrix z_mean(n, k);
  std::vector<Matrix> pat_cov(n_patterns);
  std::vector<Eigen::LLT<Matrix>> pat_llt(n_patterns);
  PpcaFit fit;

  auto e_step = [&](double& loglik) {
    loglik = 0.0;
    std::vector<double> pat_logdet(n_patterns);
    for (int p = 0; p < n_patterns; ++p) {
      Matrix m = sigma2 * Matrix::Identity(k, k);
      for (int j : pattern_cols[p]) m.noalias() += w.row(j).transpose() * w.row(j);
      pat_llt[p].compute(m);
      pat_cov[p] = sigma2 * pat_llt[p].solve(Matrix::Identity(k, k));
      double logdet_m = 0.0;
      for (int c = 0; c < k; ++c) logdet_m += 2.0 * std::log(pat_llt[p].matrixL()(c, c));
      pat_logdet[p] = (static_cast<double>(pattern_cols[p].size()) - k) * std::log(sigma2) +
                      logdet_m;
    }
    for (int i = 0; i < n; ++i) {
      const int p = pattern_of[i];
      const auto& cols = pattern_cols[p];
      Vector g = Vector::Zero(k);
      double aa = 0.0;
      for (int j : cols) {
        g.noalias() += a(i, j) * w.row(j).transpose();
        aa += a(i, j) * a(i, j);
      }
      const Vector solved = pat_llt[p].solve(g);
      z_mean.row(i) = solved.transpose();
      const double quad = (aa - g.dot(solved)) / sigma2;
      loglik += -0.5 * (static_cast<double>(cols.size()) * kLog2Pi + pat_logdet[p] + quad);
    }
  };

  double loglik = 0.0;
  double prev = -std::numeric_limits<double>::infinity();
  fit.converged = false;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    e_step(loglik);
    fit.loglik_trace.push_back(loglik);
    if (iter > 0 && std::fabs(loglik - prev) <= config.rel_tol * (std::fabs(loglik) + 1.0)) {
      fit.converged = true;
      break;
    }
    prev = loglik;

    // M-step: per-cause normal equations over rows observing that cause
    std::vector<Matrix> s1(d, Matrix::Zero(k, k));
    Matrix s2 = Matrix::Zero(d, k);
    for (int i = 0; i < n; ++i) {
      const int p = pattern_of[i];
      const Matrix ezz =
          pat_cov[p] + z_mean.row(i).transpose() * z_mean.row(i);
      for (int j : pattern_cols[p]) {
        s1[j] += ezz;
        s2.row(j) += a(i, j) * z_mean.row(i);
      }
    }
    for (int j = 0; j < d; ++j) {
      if (s1[j].isZero(0.0)) continue;  // cause never observed under the mask
      w.row(j) = s1[j].llt().solve(s2.row(j).transpose()).transpose();
    }

    // noise update with the refreshed loadings
    std::vector<std::vector<double>> pat_quad(n_patterns);
    for (int p = 0; p < n_patterns; ++p) {
      pat_quad[p].reserve(pattern_cols[p].size());
      for (int j : pattern_cols[p])
        pat_quad[p].push_back(w.row(j) * pat_cov[p] * w.row(j).transpose());
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const int p = pattern_of[i];
      const auto& cols = pattern_cols[p];
      for (size_t t = 0; t < cols.size(); ++t) {
        const int j = cols[t];
        const double pred = w.row(j).dot(z_mean.row(i));
        acc += a(i, j) * a(i, j) - 2.0 * a(i, j) * pred + pred * pred + pat_quad[p][t];
      }
    }
    sigma2 = acc / static_cast<double>(total_obs);
    if (sigma2 < kSigmaFloor) {
      sigma2 = kSigmaFloor;
      e_step(loglik);
      fit.loglik_trace.push_back(loglik);
      fit.converged = true;  // noiseless limit reached
      break;
    }
  }
  if (!fit.converged) {
    e_step(loglik);
    fit.loglik_trace.push_back(loglik);
    std::fprintf(stderr, "ppca: EM stopped after %d iterations without converging\n",
                 config.max_iters);
  }

  fit.loadings = w.transpose();
  fit.noise_var = sigma2;
  fit.prior_scale = 1.0;
  fit.z_post_mean = z_mean;
  Matrix m_full = sigma2 * Matrix::Identity(k, k) + w.transpose() * w;
  fit.z_post_cov = sigma2 * m_full.llt().solve(Matrix::Identity(k, k));
  return fit;
}

}  // namespace deconf
