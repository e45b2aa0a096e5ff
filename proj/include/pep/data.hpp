// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pep/config.hpp"
#include "pep/scene.hpp"

namespace pep {

enum class ShapeClass { kCircle = 1, kSquare = 2, kTriangle = 3 };

inline const std::vector<std::string> kShapeClassNames{"circle", "square", "triangle"};

/// Parameters of the overlapping-shapes generator.
struct SynthSpec {
  int image_size = 64;
  int min_instances = 2;
  int max_instances = 5;
  /// Probability that a new shape is placed touching or overlapping an existing one.
  double overlap_bias = 0.7;
  std::uint64_t seed = 7;
  double min_size_fraction = 0.22;
  double max_size_fraction = 0.40;
};

SynthSpec synth_spec_from(const DataConfig& config);
void validate(const SynthSpec& spec);

/// Draws shapes back to front. Later shapes occlude earlier ones; a
/// placement that would leave an earlier shape mostly hidden is retried,
/// and after a bounded number of retries the scene keeps fewer instances.
Scene generate_scene(const SynthSpec& spec);

/// Scene i uses seed `spec.seed * 1000003 + i`, so items are independent.
std::vector<Scene> generate_dataset(const SynthSpec& spec, int count);

// Netpbm (P5 grayscale / P6 RGB, 8-bit) images in [0,1].
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& image);

/// Closed polygon in pixel coordinates, vertices as (x, y).
struct Polygon {
  std::vector<std::pair<double, double>> points;
};

struct AnnotatedObject {
  int category_id = 0;
  std::vector<Polygon> polygons;
};

/// One image entry of a COCO-style annotation file.
struct AnnotationRecord {
  int image_id = 0;
  std::string image_path;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedObject> objects;
};

struct CocoAnnotations {
  std::vector<AnnotationRecord> records;
  /// File category id -> contiguous class id 1..K (sorted by file id).
  std::map<int, int> category_remap;
  std::vector<std::string> category_names;
  /// Annotations dropped because a polygon was malformed.
  int skipped_annotations = 0;
};

/// Parses images / annotations / categories. Image paths resolve relative to
/// the annotation file; a missing image raises IoError naming the path.
/// RLE segmentations raise ValidationError("RLE unsupported").
CocoAnnotations load_coco_annotations(const std::string& annotation_file);

/// Pixel (r, c) is inside when its center (c+0.5, r+0.5) is inside under the
/// even-odd rule; multiple polygons of one object are unioned.
BinaryMask rasterize_polygons(const std::vector<Polygon>& polygons, int height, int width);

/// Reads the record's image and rasterizes its objects with the remap table.
Scene rasterize(const AnnotationRecord& record, const std::map<int, int>& category_remap);

/// Exact polygon encoding of a mask: one rectangle per horizontal run.
std::vector<Polygon> mask_to_polygons(const BinaryMask& mask);

/// Writes images/NNNNNN.ppm and annotations.json under `dir`.
void write_dataset(const std::string& dir, const std::vector<Scene>& scenes,
                   const std::vector<std::string>& category_names);

/// Loads a dataset directory written by write_dataset (or any COCO polygon set).
std::vector<Scene> load_dataset(const std::string& dir, std::vector<std::string>* category_names = nullptr);

/// Stable content hash of scenes (images and masks).
std::uint64_t dataset_hash(const std::vector<Scene>& scenes);

}  // namespace pep
