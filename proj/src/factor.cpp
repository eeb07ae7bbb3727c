#include "deconf/factor.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "deconf/rng.hpp"

namespace deconf {

FactorFit fit_factor(const ExposureMatrix& exposures, const FactorConfig& config,
                     std::uint64_t seed, const HoldoutMask* mask) {
  FactorFit fit;
  fit.kind = config.kind;
  switch (config.kind) {
    case FactorModelKind::Ppca: {
      PpcaConfig c = config.ppca;
      c.seed = seed;
      fit.ppca = fit_ppca(exposures, c, mask);
      break;
    }
    case FactorModelKind::Pmf: {
      PmfConfig c = config.pmf;
      c.seed = seed;
      fit.pmf = fit_pmf(exposures, c, mask);
      break;
    }
    case FactorModelKind::Def: {
      DefConfig c = config.def;
      c.seed = seed;
      fit.def = fit_def(exposures, c, mask);
      break;
    }
  }
  return fit;
}

SubstituteConfounder substitute_confounder(const FactorFit& fit, bool def_concat_layer2) {
  SubstituteConfounder sub;
  sub.source = fit.kind;
  switch (fit.kind) {
    case FactorModelKind::Ppca:
      sub.values = fit.ppca->z_post_mean;
      break;
    case FactorModelKind::Pmf:
      sub.values = fit.pmf->z_mean();
      break;
    case FactorModelKind::Def: {
      const Matrix l1 = fit.def->layer1_mean();
      if (!def_concat_layer2) {
        sub.values = l1;
      } else {
        const Matrix l2 = fit.def->layer2_mean();
        sub.values.resize(l1.rows(), l1.cols() + l2.cols());
        sub.values << l1, l2;
      }
      break;
    }
  }
  if (!sub.values.allFinite())
    throw NumericError("substitute confounder holds non-finite entries");
  if (fit.kind != FactorModelKind::Ppca && (sub.values.array() <= 0.0).any())
    throw NumericError("substitute confounder must be strictly positive for count models");
  return sub;
}

FactorArtifact make_factor_artifact(const ExposureMatrix& exposures,
                                    const FactorConfig& config, std::uint64_t seed,
                                    double holdout_fraction) {
  FactorArtifact artifact;
  artifact.config = config;
  artifact.seed = seed;
  artifact.mask =
      make_holdout_mask(static_cast<int>(exposures.n_patients()),
                        static_cast<int>(exposures.n_causes()), holdout_fraction,
                        derive_seed(seed, seed_tag::mask));
  artifact.masked_fit = fit_factor(exposures, config,
                                   derive_seed(seed, seed_tag::fit_masked), &artifact.mask);
  artifact.full_fit =
      fit_factor(exposures, config, derive_seed(seed, seed_tag::fit_full), nullptr);
  return artifact;
}

namespace {

constexpr char kMagic[8] = {'D', 'C', 'F', 'A', 'R', 'T', '0', '\0'};
constexpr std::uint32_t kVersion = 1;

void wr_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void wr_u32(std::ostream& out, std::uint32_t v) { wr_bytes(out, &v, 4); }
void wr_u64(std::ostream& out, std::uint64_t v) { wr_bytes(out, &v, 8); }
void wr_i32(std::ostream& out, std::int32_t v) { wr_bytes(out, &v, 4); }
void wr_f64(std::ostream& out, double v) { wr_bytes(out, &v, 8); }
void wr_mat(std::ostream& out, const Matrix& m) {
  wr_u64(out, static_cast<std::uint64_t>(m.rows()));
  wr_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) wr_f64(out, m(r, c));
}
void wr_trace(std::ostream& out, const std::vector<double>& v) {
  wr_u64(out, v.size());
  for (double x : v) wr_f64(out, x);
}

struct Reader {
  std::istream& in;
  std::string path;
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated factor artifact '" + path + "'");
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  Matrix mat() {
    const auto rows = static_cast<Eigen::Index>(u64());
    const auto cols = static_cast<Eigen::Index>(u64());
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 31))
      throw ParseError("factor artifact '" + path + "': implausible matrix header");
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = f64();
    return m;
  }
  std::vector<double> trace() {
    std::vector<double> v(u64());
    for (double& x : v) x = f64();
    return v;
  }
};

void wr_fit(std::ostream& out, const FactorFit& fit) {
  wr_u32(out, static_cast<std::uint32_t>(fit.kind));
  switch (fit.kind) {
    case FactorModelKind::Ppca: {
      const auto& f = *fit.ppca;
      wr_mat(out, f.loadings);
      wr_f64(out, f.noise_var);
      wr_f64(out, f.prior_scale);
      wr_mat(out, f.z_post_mean);
      wr_mat(out, f.z_post_cov);
      wr_trace(out, f.loglik_trace);
      wr_u32(out, f.converged ? 1 : 0);
      break;
    }
    case FactorModelKind::Pmf: {
      const auto& f = *fit.pmf;
      wr_mat(out, f.z_shape);
      wr_mat(out, f.z_rate);
      wr_mat(out, f.theta_shape);
      wr_mat(out, f.theta_rate);
      wr_f64(out, f.alpha);
      wr_f64(out, f.beta);
      wr_trace(out, f.elbo_trace);
      wr_u32(out, f.converged ? 1 : 0);
      break;
    }
    case FactorModelKind::Def: {
      const auto& f = *fit.def;
      wr_mat(out, f.params.z1_loc);
      wr_mat(out, f.params.z1_logs);
      wr_mat(out, f.params.z2_loc);
      wr_mat(out, f.params.z2_logs);
      wr_mat(out, f.params.w1_loc);
      wr_mat(out, f.params.w1_logs);
      wr_mat(out, f.params.w0_loc);
      wr_mat(out, f.params.w0_logs);
      wr_f64(out, f.alpha);
      wr_f64(out, f.beta);
      wr_f64(out, f.link_floor);
      wr_trace(out, f.elbo_trace);
      wr_i32(out, f.best_step);
      break;
    }
  }
}

FactorFit rd_fit(Reader& r) {
  FactorFit fit;
  fit.kind = static_cast<FactorModelKind>(r.u32());
  switch (fit.kind) {
    case FactorModelKind::Ppca: {
      PpcaFit f;
      f.loadings = r.mat();
      f.noise_var = r.f64();
      f.prior_scale = r.f64();
      f.z_post_mean = r.mat();
      f.z_post_cov = r.mat();
      f.loglik_trace = r.trace();
      f.converged = r.u32() != 0;
      fit.ppca = std::move(f);
      break;
    }
    case FactorModelKind::Pmf: {
      PmfFit f;
      f.z_shape = r.mat();
      f.z_rate = r.mat();
      f.theta_shape = r.mat();
      f.theta_rate = r.mat();
      f.alpha = r.f64();
      f.beta = r.f64();
      f.elbo_trace = r.trace();
      f.converged = r.u32() != 0;
      fit.pmf = std::move(f);
      break;
    }
    case FactorModelKind::Def: {
      DefFit f;
      f.params.z1_loc = r.mat();
      f.params.z1_logs = r.mat();
      f.params.z2_loc = r.mat();
      f.params.z2_logs = r.mat();
      f.params.w1_loc = r.mat();
      f.params.w1_logs = r.mat();
      f.params.w0_loc = r.mat();
      f.params.w0_logs = r.mat();
      f.alpha = r.f64();
      f.beta = r.f64();
      f.link_floor = r.f64();
      f.elbo_trace = r.trace();
      f.best_step = r.i32();
      fit.def = std::move(f);
      break;
    }
    default:
      throw ParseError("factor artifact '" + r.path + "': unknown model kind");
  }
  return fit;
}

}  // namespace

void save_factor_artifact(const FactorArtifact& artifact, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  wr_bytes(out, kMagic, sizeof(kMagic));
  wr_u32(out, kVersion);
  wr_u32(out, static_cast<std::uint32_t>(artifact.config.kind));
  wr_i32(out, artifact.config.ppca.k);
  wr_i32(out, artifact.config.pmf.k);
  wr_f64(out, artifact.config.pmf.alpha);
  wr_f64(out, artifact.config.pmf.beta);
  wr_i32(out, artifact.config.def.k1);
  wr_i32(out, artifact.config.def.k2);
  wr_f64(out, artifact.config.def.alpha);
  wr_f64(out, artifact.config.def.beta);
  wr_i32(out, artifact.config.def.steps);
  wr_f64(out, artifact.config.def.learning_rate);
  wr_f64(out, artifact.config.def.link_floor);
  wr_u32(out, artifact.config.def_concat_layer2 ? 1 : 0);
  wr_u64(out, artifact.seed);
  wr_f64(out, artifact.mask.fraction);
  wr_u64(out, artifact.mask.heldout.size());
  for (const auto& row : artifact.mask.heldout) {
    wr_u64(out, row.size());
    for (int j : row) wr_i32(out, j);
  }
  wr_fit(out, artifact.masked_fit);
  wr_fit(out, artifact.full_fit);
  if (!out) throw IoError("write failed for '" + path + "'");
}

FactorArtifact load_factor_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  Reader r{in, path};
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("'" + path + "' is not a factor artifact");
  const auto version = r.u32();
  if (version != kVersion)
    throw ParseError("factor artifact '" + path + "': unsupported version " +
                     std::to_string(version));
  FactorArtifact artifact;
  artifact.config.kind = static_cast<FactorModelKind>(r.u32());
  artifact.config.ppca.k = r.i32();
  artifact.config.pmf.k = r.i32();
  artifact.config.pmf.alpha = r.f64();
  artifact.config.pmf.beta = r.f64();
  artifact.config.def.k1 = r.i32();
  artifact.config.def.k2 = r.i32();
  artifact.config.def.alpha = r.f64();
  artifact.config.def.beta = r.f64();
  artifact.config.def.steps = r.i32();
  artifact.config.def.learning_rate = r.f64();
  artifact.config.def.link_floor = r.f64();
  artifact.config.def_concat_layer2 = r.u32() != 0;
  artifact.seed = r.u64();
  artifact.mask.fraction = r.f64();
  artifact.mask.heldout.resize(r.u64());
  for (auto& row : artifact.mask.heldout) {
    row.resize(r.u64());
    for (int& j : row) j = r.i32();
  }
  artifact.masked_fit = rd_fit(r);
  artifact.full_fit = rd_fit(r);
  return artifact;
}

}  // namespace deconf
