// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "pep/data.hpp"
#include "pep/errors.hpp"
#include "pep/nn.hpp"

namespace pep {

namespace {

constexpr int kMaxAttempts = 60;
constexpr std::size_t kMinVisibleArea = 16;
constexpr double kMinVisibleFraction = 0.3;
constexpr double kBackground = 0.08;

struct ShapeParams {
  ShapeClass kind = ShapeClass::kCircle;
  double center_row = 0.0;
  double center_col = 0.0;
  double size = 0.0;  // diameter of the circumscribed circle
  double angle = 0.0;
};

bool inside_shape(const ShapeParams& s, double y, double x) {
  const double dy = y - s.center_row, dx = x - s.center_col;
  const double radius = s.size / 2.0;
  switch (s.kind) {
    case ShapeClass::kCircle:
      return dx * dx + dy * dy <= radius * radius;
    case ShapeClass::kSquare: {
      const double half = radius * 0.8;
      const double u = std::cos(s.angle) * dx + std::sin(s.angle) * dy;
      const double v = -std::sin(s.angle) * dx + std::cos(s.angle) * dy;
      return std::abs(u) <= half && std::abs(v) <= half;
    }
    case ShapeClass::kTriangle: {
      std::array<std::pair<double, double>, 3> p;
      for (int k = 0; k < 3; ++k) {
        const double a = s.angle + k * 2.0 * std::numbers::pi / 3.0;
        p[k] = {s.center_col + radius * std::cos(a), s.center_row + radius * std::sin(a)};
      }
      auto cross = [&](int i, int j) {
        return (p[j].first - p[i].first) * (y - p[i].second) -
               (p[j].second - p[i].second) * (x - p[i].first);
      };
      const double c0 = cross(0, 1), c1 = cross(1, 2), c2 = cross(2, 0);
      return (c0 >= 0 && c1 >= 0 && c2 >= 0) || (c0 <= 0 && c1 <= 0 && c2 <= 0);
    }
  }
  return false;
}

BinaryMask draw(const ShapeParams& s, int size) {
  BinaryMask m(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (inside_shape(s, r + 0.5, c + 0.5)) m.set(r, c);
  return m;
}

BinaryMask subtract(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits().size(); ++i) {
    if (b.bits()[i]) out.bits()[i] = 0;
  }
  return out;
}

BoundingBox dilate(BoundingBox b, int d) {
  return {b.row0 - d, b.col0 - d, b.row1 + d, b.col1 + d};
}

struct Placed {
  ShapeParams shape;
  BinaryMask full;
  std::array<double, 3> color{};
};

// Visible masks of shapes drawn back to front.
std::vector<BinaryMask> visible_masks(const std::vector<Placed>& placed) {
  std::vector<BinaryMask> vis;
  for (std::size_t k = 0; k < placed.size(); ++k) {
    BinaryMask v = placed[k].full;
    for (std::size_t m = k + 1; m < placed.size(); ++m) v = subtract(v, placed[m].full);
    vis.push_back(std::move(v));
  }
  return vis;
}

}  // namespace

SynthSpec synth_spec_from(const DataConfig& config) {
  SynthSpec s;
  s.image_size = config.image_size;
  s.min_instances = config.min_instances;
  s.max_instances = config.max_instances;
  s.overlap_bias = config.overlap_bias;
  s.seed = config.seed;
  s.min_size_fraction = config.min_size_fraction;
  s.max_size_fraction = config.max_size_fraction;
  return s;
}

void validate(const SynthSpec& spec) {
  if (spec.image_size <= 0 || spec.image_size % 32 != 0) {
    throw ValidationError("size must be multiple of 32");
  }
  if (spec.min_instances < 1 || spec.max_instances < spec.min_instances) {
    throw ValidationError("instance range must be non-empty with min >= 1");
  }
  if (spec.overlap_bias < 0.0 || spec.overlap_bias > 1.0) {
    throw ValidationError("overlap bias must be in [0,1]");
  }
  if (spec.min_size_fraction <= 0.0 || spec.max_size_fraction < spec.min_size_fraction ||
      spec.max_size_fraction >= 1.0) {
    throw ValidationError("size fractions must satisfy 0 < min <= max < 1");
  }
}

Scene generate_scene(const SynthSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int size = spec.image_size;
  const int target =
      std::uniform_int_distribution<int>(spec.min_instances, spec.max_instances)(rng);

  std::vector<Placed> placed;
  for (int i = 0; i < target; ++i) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Placed cand;
      cand.shape.kind = static_cast<ShapeClass>(std::uniform_int_distribution<int>(1, 3)(rng));
      cand.shape.size = size * (spec.min_size_fraction +
                                unit(rng) * (spec.max_size_fraction - spec.min_size_fraction));
      cand.shape.angle = unit(rng) * 2.0 * std::numbers::pi;
      const double radius = cand.shape.size / 2.0;
      const bool adjacent = !placed.empty() && unit(rng) < spec.overlap_bias;
      int anchor = -1;
      if (adjacent) {
        anchor = std::uniform_int_distribution<int>(0, static_cast<int>(placed.size()) - 1)(rng);
        const ShapeParams& a = placed[anchor].shape;
        const double theta = unit(rng) * 2.0 * std::numbers::pi;
        const double dist = (0.35 + 0.35 * unit(rng)) * (a.size + cand.shape.size) / 2.0;
        cand.shape.center_row = a.center_row + dist * std::sin(theta);
        cand.shape.center_col = a.center_col + dist * std::cos(theta);
      } else {
        cand.shape.center_row = radius + unit(rng) * (size - 2.0 * radius);
        cand.shape.center_col = radius + unit(rng) * (size - 2.0 * radius);
      }
      for (auto& ch : cand.color) ch = 0.25 + 0.75 * unit(rng);

      if (cand.shape.center_row - radius < 0 || cand.shape.center_row + radius > size ||
          cand.shape.center_col - radius < 0 || cand.shape.center_col + radius > size) {
        continue;
      }
      cand.full = draw(cand.shape, size);
      if (cand.full.area() < kMinVisibleArea) continue;
      const BoundingBox box = mask_bbox(cand.full);
      if (!adjacent) {
        const bool clash = std::any_of(placed.begin(), placed.end(), [&](const Placed& p) {
          return dilate(mask_bbox(p.full), 1).intersects(box);
        });
        if (clash) continue;
      }
      // Neighbouring shapes need distinguishable colors.
      bool similar = false;
      for (const Placed& p : placed) {
        if (!dilate(mask_bbox(p.full), 1).intersects(box)) continue;
        double l1 = 0.0;
        for (int k = 0; k < 3; ++k) l1 += std::abs(p.color[k] - cand.color[k]);
        if (l1 < 0.45) similar = true;
      }
      if (similar) continue;

      std::vector<Placed> trial = placed;
      trial.push_back(cand);
      const auto vis = visible_masks(trial);
      bool ok = true;
      for (std::size_t k = 0; k + 1 < trial.size(); ++k) {
        const std::size_t need = std::max<std::size_t>(
            kMinVisibleArea,
            static_cast<std::size_t>(std::ceil(kMinVisibleFraction * trial[k].full.area())));
        if (vis[k].area() < need) ok = false;
      }
      if (ok && adjacent && !mask_bbox(vis[anchor]).intersects(box)) ok = false;
      if (!ok) continue;
      placed = std::move(trial);
      break;
    }
  }

  Scene scene;
  scene.image_id = "synth-" + std::to_string(spec.seed);
  scene.image = Tensor({3, size, size}, kBackground);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (double& v : scene.image.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  for (const Placed& p : placed) {
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        if (!p.full.at(r, c)) continue;
        for (int k = 0; k < 3; ++k) {
          scene.image.at(k, r, c) = std::clamp(p.color[k] + noise(rng), 0.0, 1.0);
        }
      }
  }
  // 8-bit quantization keeps in-memory scenes identical to their files.
  for (double& v : scene.image.values()) v = std::round(v * 255.0) / 255.0;
  const auto vis = visible_masks(placed);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    scene.instances.push_back(
        make_instance(static_cast<int>(placed[k].shape.kind), vis[k], placed[k].full));
  }
  return scene;
}

std::vector<Scene> generate_dataset(const SynthSpec& spec, int count) {
  if (count < 1) throw ValidationError("dataset size must be >= 1");
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    SynthSpec item = spec;
    item.seed = spec.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    Scene s = generate_scene(item);
    s.image_id = std::to_string(i);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace pep
