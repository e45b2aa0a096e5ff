// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pep/tensor.hpp"

namespace pep {

/// Row-major binary mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width) : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool v = true) { bits_[static_cast<std::size_t>(row) * width_ + col] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::uint8_t>& bits() { return bits_; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Half-open pixel box [row0, row1) × [col0, col1).
struct BoundingBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int height() const { return row1 - row0; }
  int width() const { return col1 - col0; }
  bool intersects(const BoundingBox& o) const {
    return row0 < o.row1 && o.row0 < row1 && col0 < o.col1 && o.col0 < col1;
  }
};

BoundingBox mask_bbox(const BinaryMask& mask);

struct GroundTruthInstance {
  int class_id = 1;
  /// Occlusion-clipped mask; all supervision uses this one.
  BinaryMask mask;
  /// Unoccluded shape (synthetic data only; equals `mask` otherwise).
  BinaryMask full_mask;
  /// Mass center of `mask` in continuous pixel coordinates (pixel centers at +0.5).
  double center_row = 0.0;
  double center_col = 0.0;
  BoundingBox bbox;
};

/// An image [C,H,W] in [0,1] plus its ground-truth instances.
struct Scene {
  std::string image_id;
  Tensor image;
  std::vector<GroundTruthInstance> instances;

  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
};

/// Fills center and bbox from the visible mask.
GroundTruthInstance make_instance(int class_id, BinaryMask visible, BinaryMask full);

/// Throws ValidationError unless masks match the image size, classes are
/// >= 1, masks are non-empty and centers equal the mask mass centers.
void validate_scene(const Scene& scene);

/// Mirrors image and masks left-right.
Scene flip_horizontal(const Scene& scene);

}  // namespace pep
