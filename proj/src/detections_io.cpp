// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/detections_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pep/errors.hpp"

namespace pep {

namespace {
constexpr const char* kHeader = "# pep-detections v1";
}

std::vector<int> run_length_encode(const BinaryMask& mask) {
  std::vector<int> counts;
  bool current = false;
  int run = 0;
  for (std::uint8_t b : mask.bits()) {
    if ((b != 0) != current) {
      counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

BinaryMask run_length_decode(const std::vector<int>& counts, int height, int width) {
  BinaryMask mask(height, width);
  std::size_t pos = 0;
  bool value = false;
  for (int c : counts) {
    if (c < 0 || pos + c > mask.bits().size()) throw ValidationError("run lengths exceed the mask size");
    if (value) std::fill_n(mask.bits().begin() + pos, c, 1);
    pos += c;
    value = !value;
  }
  if (pos != mask.bits().size()) throw ValidationError("run lengths do not cover the mask");
  return mask;
}

void write_detections(const std::string& path, const std::vector<Detection>& detections) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detections file " + path);
  out << kHeader << '\n';
  out.precision(17);
  for (const Detection& d : detections) {
    if (d.image_id.empty() || d.image_id.find_first_of(" \t\n") != std::string::npos) {
      throw ValidationError("image id '" + d.image_id + "' cannot be written to a detections file");
    }
    out << d.image_id << ' ' << d.class_id << ' ' << d.score << ' ' << d.mask.height() << ' '
        << d.mask.width();
    for (int c : run_length_encode(d.mask)) out << ' ' << c;
    out << '\n';
  }
}

std::vector<Detection> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw ValidationError(path + ": missing '" + std::string(kHeader) + "' header");
  }
  std::vector<Detection> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    Detection d;
    int h = 0, w = 0;
    if (!(is >> d.image_id >> d.class_id >> d.score >> h >> w) || h <= 0 || w <= 0) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed detection");
    }
    std::vector<int> counts;
    for (int c; is >> c;) counts.push_back(c);
    if (!is.eof()) throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed run lengths");
    d.mask = run_length_decode(counts, h, w);
    out.push_back(std::move(d));
  }
  return out;
}

std::array<double, 3> instance_color(int index) {
  // Golden-ratio hue steps at full saturation.
  const double hue = std::fmod(0.13 + 0.618033988749895 * index, 1.0) * 6.0;
  const int sector = static_cast<int>(hue);
  const double f = hue - sector;
  switch (sector % 6) {
    case 0: return {1.0, f, 0.0};
    case 1: return {1.0 - f, 1.0, 0.0};
    case 2: return {0.0, 1.0, f};
    case 3: return {0.0, 1.0 - f, 1.0};
    case 4: return {f, 0.0, 1.0};
    default: return {1.0, 0.0, 1.0 - f};
  }
}

Tensor render_overlay(const Tensor& image, const std::vector<Detection>& detections, double opacity) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("overlay needs a [1|3,H,W] image");
  }
  const int h = image.dim(1), w = image.dim(2);
  Tensor out({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x) out.at(c, r, x) = image.at(image.dim(0) == 3 ? c : 0, r, x);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const BinaryMask& m = detections[i].mask;
    if (m.height() != h || m.width() != w) throw ShapeError("overlay: mask size differs from image");
    const auto color = instance_color(static_cast<int>(i));
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x) {
        if (!m.at(r, x)) continue;
        const bool edge = r == 0 || x == 0 || r == h - 1 || x == w - 1 || !m.at(r - 1, x) ||
                          !m.at(r + 1, x) || !m.at(r, x - 1) || !m.at(r, x + 1);
        const double a = edge ? 1.0 : opacity;
        for (int c = 0; c < 3; ++c) out.at(c, r, x) = (1.0 - a) * out.at(c, r, x) + a * color[c];
      }
  }
  return out;
}

}  // namespace pep
