// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/descriptor.hpp"

#include <algorithm>
#include <cstdlib>

namespace pep {

int chebyshev(const GridPoint& a, const GridPoint& b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

std::string to_string(Provenance p) { return p == Provenance::kOriginal ? "original" : "mined"; }

int DescriptorSet::num_original() const {
  return static_cast<int>(std::count_if(items.begin(), items.end(), [](const auto& d) {
    return d.provenance == Provenance::kOriginal;
  }));
}

int DescriptorSet::num_mined() const { return size() - num_original(); }

const InstanceDescriptor* DescriptorSet::find(int id) const {
  for (const auto& d : items) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

}  // namespace pep

namespace pep {

bool is_local_peak(const double* score, int h, int w, int row, int col) {
  const double v = score[row * w + col];
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const int r = row + dr, c = col + dc;
      if (r < 0 || r >= h || c < 0 || c >= w) continue;
      const double n = score[r * w + c];
      if (n > v) return false;
      // Equal neighbour that precedes this cell wins the tie.
      if (n == v && GridPoint{r, c} < GridPoint{row, col}) return false;
    }
  }
  return true;
}

}  // namespace pep

namespace pep {

Window make_window(const GridPoint& center, int radius, int grid_h, int grid_w, bool full_map) {
  if (full_map) return {0, 0, grid_h, grid_w};
  const int r0 = std::max(0, center.row - radius), r1 = std::min(grid_h, center.row + radius + 1);
  const int c0 = std::max(0, center.col - radius), c1 = std::min(grid_w, center.col + radius + 1);
  return {r0, c0, r1 - r0, c1 - c0};
}

}  // namespace pep
