// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "pep/evaluation.hpp"

namespace pep {

/// Alternating run lengths over the row-major grid, starting with a run of zeros.
std::vector<int> run_length_encode(const BinaryMask& mask);
BinaryMask run_length_decode(const std::vector<int>& counts, int height, int width);

/// Text file: a "# pep-detections v1" header, then one line per instance
/// "image_id class_id score height width run0 run1 ...".
void write_detections(const std::string& path, const std::vector<Detection>& detections);
std::vector<Detection> read_detections(const std::string& path);

/// RGB color of the instance with the given index, fixed across runs.
std::array<double, 3> instance_color(int index);

/// Image [3,H,W] with each detection filled at `opacity` and its contour drawn solid.
Tensor render_overlay(const Tensor& image, const std::vector<Detection>& detections, double opacity);

}  // namespace pep
