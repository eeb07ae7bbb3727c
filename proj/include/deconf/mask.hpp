#pragma once

#include <cstdint>
#include <vector>

namespace deconf {

// Per-patient held-out column indices.  Entries listed here are excluded
// from factor-model training likelihoods and scored by the predictive check.
struct HoldoutMask {
  std::vector<std::vector<int>> heldout;  // sorted, unique per row
  double fraction = 0.0;

  int n_rows() const { return static_cast<int>(heldout.size()); }

  std::size_t n_entries() const {
    std::size_t n = 0;
    for (const auto& row : heldout) n += row.size();
    return n;
  }

  bool is_heldout(int row, int col) const {
    for (int c : heldout[row])
      if (c == col) return true;
    return false;
  }
};

// round(fraction*d) distinct columns per row, sampled uniformly without
// replacement; clamped so every patient keeps at least one observed entry
// and at least one held-out entry.
HoldoutMask make_holdout_mask(int n, int d, double fraction, std::uint64_t seed);

}  // namespace deconf
