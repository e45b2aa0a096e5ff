// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pep/errors.hpp"

namespace pep {

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BoundingBox mask_bbox(const BinaryMask& mask) {
  BoundingBox b{mask.height(), mask.width(), 0, 0};
  bool any = false;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      any = true;
      b.row0 = std::min(b.row0, r);
      b.col0 = std::min(b.col0, c);
      b.row1 = std::max(b.row1, r + 1);
      b.col1 = std::max(b.col1, c + 1);
    }
  return any ? b : BoundingBox{};
}

namespace {

std::pair<double, double> mass_center(const BinaryMask& mask) {
  double sr = 0.0, sc = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      sr += r + 0.5;
      sc += c + 0.5;
      ++n;
    }
  if (n == 0) return {0.0, 0.0};
  return {sr / n, sc / n};
}

}  // namespace

GroundTruthInstance make_instance(int class_id, BinaryMask visible, BinaryMask full) {
  GroundTruthInstance inst;
  inst.class_id = class_id;
  inst.mask = std::move(visible);
  inst.full_mask = std::move(full);
  auto [r, c] = mass_center(inst.mask);
  inst.center_row = r;
  inst.center_col = c;
  inst.bbox = mask_bbox(inst.mask);
  return inst;
}

void validate_scene(const Scene& scene) {
  if (scene.image.rank() != 3) throw ValidationError("scene image must be [C,H,W]");
  const int h = scene.height(), w = scene.width();
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const auto& inst = scene.instances[i];
    const std::string tag = "scene " + scene.image_id + " instance " + std::to_string(i);
    if (inst.class_id < 1) throw ValidationError(tag + ": class_id must be >= 1");
    if (inst.mask.height() != h || inst.mask.width() != w) {
      throw ValidationError(tag + ": mask size differs from image");
    }
    if (inst.mask.empty()) throw ValidationError(tag + ": empty mask");
    auto [r, c] = mass_center(inst.mask);
    if (std::abs(r - inst.center_row) > 1e-9 || std::abs(c - inst.center_col) > 1e-9) {
      throw ValidationError(tag + ": center is not the mask mass center");
    }
  }
}

Scene flip_horizontal(const Scene& scene) {
  Scene out = scene;
  const int ch = scene.image.dim(0), h = scene.height(), w = scene.width();
  for (int c = 0; c < ch; ++c)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out.image.at(c, r, q) = scene.image.at(c, r, w - 1 - q);
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const auto& src = scene.instances[i];
    BinaryMask vis(h, w), full(src.full_mask.height(), src.full_mask.width());
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) {
        vis.set(r, q, src.mask.at(r, w - 1 - q));
        if (full.width() == w) full.set(r, q, src.full_mask.at(r, w - 1 - q));
      }
    out.instances[i] = make_instance(src.class_id, std::move(vis), std::move(full));
  }
  return out;
}

}  // namespace pep
