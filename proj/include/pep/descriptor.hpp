// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <string>
#include <vector>

#include "pep/tensor.hpp"

namespace pep {

/// Cell of a stage grid.
struct GridPoint {
  int row = 0;
  int col = 0;

  auto operator<=>(const GridPoint&) const = default;
};

/// Chebyshev distance between two cells.
int chebyshev(const GridPoint& a, const GridPoint& b);

enum class Provenance { kOriginal, kMined };

std::string to_string(Provenance p);

/// A candidate object: a C_D vector tagged with where it came from.
struct InstanceDescriptor {
  int id = 0;
  Tensor vector;
  int stage = 1;  // 1-based pyramid stage
  GridPoint location;
  int class_id = 1;
  double confidence = 0.0;
  Provenance provenance = Provenance::kOriginal;
  /// Originating original descriptor for mined ones, -1 otherwise.
  int source_id = -1;
};

/// Originals first, then mined descriptors; at most n_cap items.
struct DescriptorSet {
  std::vector<InstanceDescriptor> items;

  int size() const { return static_cast<int>(items.size()); }
  bool empty() const { return items.empty(); }
  int num_original() const;
  int num_mined() const;
  const InstanceDescriptor* find(int id) const;
};

}  // namespace pep

namespace pep {

/// True when `score[row,col]` beats all 3x3 neighbours of an h×w row-major
/// grid under the total order (higher score first, then smaller (row, col)).
/// Exactly one cell of any equal-score plateau within a 3x3 block survives.
bool is_local_peak(const double* score, int h, int w, int row, int col);

}  // namespace pep

namespace pep {

/// Rectangular block of a stage grid: rows [row0, row0+height), cols [col0, col0+width).
struct Window {
  int row0 = 0;
  int col0 = 0;
  int height = 0;
  int width = 0;

  bool contains(const GridPoint& p) const {
    return p.row >= row0 && p.row < row0 + height && p.col >= col0 && p.col < col0 + width;
  }
  bool operator==(const Window&) const = default;
};

/// Cells within Chebyshev distance `radius` of `center`, clipped to an
/// h×w grid. `full_map` returns the whole grid.
Window make_window(const GridPoint& center, int radius, int grid_h, int grid_w, bool full_map = false);

}  // namespace pep
