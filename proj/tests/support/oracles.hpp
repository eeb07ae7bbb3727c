// Brute-force oracles used by tests.  Deliberately independent of the
// library's solve paths: plain Gauss-Jordan on std::vector storage.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace test_oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat make_mat(std::size_t r, std::size_t c) {
  return Mat(r, std::vector<double>(c, 0.0));
}

// Gauss-Jordan inverse with partial pivoting.
inline Mat invert(Mat a) {
  const std::size_t n = a.size();
  Mat inv = make_mat(n, n);
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-300) throw std::runtime_error("singular matrix");
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double scale = a[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col][c] /= scale;
      inv[col][c] /= scale;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

inline std::vector<double> mat_vec(const Mat& a, const std::vector<double>& x) {
  std::vector<double> y(a.size(), 0.0);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += a[r][c] * x[c];
  return y;
}

// Normal-inverse-gamma posterior computed the long way: mean, scale matrix
// (b_n/a_n)*(X'X+Lambda)^-1, a_n, b_n.
struct NigOracle {
  std::vector<double> mean;
  Mat scale;
  double a_n = 0.0, b_n = 0.0;
};

inline NigOracle nig_posterior(const Mat& x, const std::vector<double>& y,
                               const std::vector<double>& prior_precision, double a0,
                               double b0) {
  const std::size_t n = x.size();
  const std::size_t p = x.empty() ? 0 : x[0].size();
  Mat lambda_n = make_mat(p, p);
  std::vector<double> xty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += x[i][a] * y[i];
      for (std::size_t b = 0; b < p; ++b) lambda_n[a][b] += x[i][a] * x[i][b];
    }
  for (std::size_t a = 0; a < p; ++a) lambda_n[a][a] += prior_precision[a];

  NigOracle out;
  const Mat inv = invert(lambda_n);
  out.mean = mat_vec(inv, xty);
  double yty = 0.0;
  for (double v : y) yty += v * v;
  double quad = 0.0;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) quad += out.mean[a] * lambda_n[a][b] * out.mean[b];
  out.a_n = a0 + 0.5 * static_cast<double>(n);
  out.b_n = b0 + 0.5 * (yty - quad);
  out.scale = inv;
  for (auto& row : out.scale)
    for (double& v : row) v *= out.b_n / out.a_n;
  return out;
}

// Conditional mean/covariance of z given a under the joint Gaussian
// [z; a] ~ N(0, [[I, W'], [W, WW' + s2 I]]), i.e. exact PPCA conditioning,
// assembled entry by entry and inverted by Gauss-Jordan.
struct GaussCond {
  std::vector<double> mean;
  Mat cov;
};

inline GaussCond ppca_posterior(const Mat& w /* d x k */, double noise_var,
                                const std::vector<double>& a_obs,
                                const std::vector<std::size_t>& obs_cols) {
  const std::size_t k = w.empty() ? 0 : w[0].size();
  const std::size_t m = obs_cols.size();
  Mat caa = make_mat(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t t = 0; t < k; ++t) caa[r][c] += w[obs_cols[r]][t] * w[obs_cols[c]][t];
      if (r == c) caa[r][c] += noise_var;
    }
  Mat cza = make_mat(k, m);  // Cov(z, a_obs) = W_obs'
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t c = 0; c < m; ++c) cza[t][c] = w[obs_cols[c]][t];

  const Mat caa_inv = invert(caa);
  GaussCond out;
  out.mean.assign(k, 0.0);
  Mat gain = make_mat(k, m);  // Cza * Caa^-1
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t u = 0; u < m; ++u) gain[t][c] += cza[t][u] * caa_inv[u][c];
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t c = 0; c < m; ++c) out.mean[t] += gain[t][c] * a_obs[c];
  out.cov = make_mat(k, k);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t u = 0; u < k; ++u) {
      out.cov[t][u] = (t == u) ? 1.0 : 0.0;
      for (std::size_t c = 0; c < m; ++c) out.cov[t][u] -= gain[t][c] * cza[u][c];
    }
  return out;
}

}  // namespace test_oracle
