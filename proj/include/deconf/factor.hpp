#pragma once

#include <optional>
#include <string>

#include "deconf/def_model.hpp"
#include "deconf/mask.hpp"
#include "deconf/pmf.hpp"
#include "deconf/ppca.hpp"
#include "deconf/types.hpp"

namespace deconf {

struct FactorConfig {
  FactorModelKind kind = FactorModelKind::Ppca;
  PpcaConfig ppca;
  PmfConfig pmf;
  DefConfig def;
  bool def_concat_layer2 = false;  // append layer-2 means to the substitute
};

struct FactorFit {
  FactorModelKind kind = FactorModelKind::Ppca;
  std::optional<PpcaFit> ppca;
  std::optional<PmfFit> pmf;
  std::optional<DefFit> def;
};

FactorFit fit_factor(const ExposureMatrix& exposures, const FactorConfig& config,
                     std::uint64_t seed, const HoldoutMask* mask = nullptr);

// Posterior means of the per-patient latents.
SubstituteConfounder substitute_confounder(const FactorFit& fit,
                                           bool def_concat_layer2 = false);

// Check stage runs on the masked fit; the estimation stage consumes the
// full-data refit, so one artifact carries both plus the mask.
struct FactorArtifact {
  FactorConfig config;
  std::uint64_t seed = 0;
  HoldoutMask mask;
  FactorFit masked_fit;
  FactorFit full_fit;
};

FactorArtifact make_factor_artifact(const ExposureMatrix& exposures,
                                    const FactorConfig& config, std::uint64_t seed,
                                    double holdout_fraction);

void save_factor_artifact(const FactorArtifact& artifact, const std::string& path);
FactorArtifact load_factor_artifact(const std::string& path);

}  // namespace deconf
