#include "deconf/mask.hpp"

#include <algorithm>
#include <cmath>

#include "deconf/rng.hpp"
#include "deconf/types.hpp"

namespace deconf {

HoldoutMask make_holdout_mask(int n, int d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("holdout fraction must lie in (0, 1), got " +
                          std::to_string(fraction));
  if (n < 1 || d < 2) throw ValidationError("holdout mask needs n >= 1 and d >= 2");

  const double target = fraction * d;
  const long base = static_cast<long>(std::floor(target));
  const double frac = target - static_cast<double>(base);

  Rng rng(derive_seed(seed, seed_tag::mask));
  HoldoutMask mask;
  mask.fraction = fraction;
  mask.heldout.resize(n);

  std::vector<int> cols(d);
  for (int j = 0; j < d; ++j) cols[j] = j;

  std::size_t total = 0;
  for (int i = 0; i < n; ++i) {
    // stochastic rounding of the fractional part keeps the expected share of
    // held-out entries at `fraction` even when fraction*d is not integral
    long per_row = base + (frac > 0.0 && rng.bernoulli(frac) ? 1 : 0);
    per_row = std::min(per_row, static_cast<long>(d) - 1);  // keep >= 1 observed
    // partial Fisher-Yates: first per_row entries are the sample
    for (long t = 0; t < per_row; ++t) {
      const auto pick = t + static_cast<long>(rng.uniform_below(d - t));
      std::swap(cols[t], cols[pick]);
    }
    auto& row = mask.heldout[i];
    row.assign(cols.begin(), cols.begin() + per_row);
    std::sort(row.begin(), row.end());
    total += row.size();
  }
  if (total == 0) mask.heldout[0].push_back(0);  // the check needs an entry
  return mask;
}

}  // namespace deconf
