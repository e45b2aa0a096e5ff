// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pep/errors.hpp"

namespace pep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Skips whitespace and '#' comments in a netpbm header.
int read_header_int(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

bool valid_polygon(const Polygon& poly, int width, int height) {
  if (poly.points.size() < 3) return false;
  for (const auto& [x, y] : poly.points) {
    if (!std::isfinite(x) || !std::isfinite(y)) return false;
    if (x < 0.0 || y < 0.0 || x > width || y > height) return false;
  }
  return true;
}

bool point_in_polygon(const Polygon& poly, double px, double py) {
  bool inside = false;
  const auto& p = poly.points;
  for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
    const auto [xi, yi] = p[i];
    const auto [xj, yj] = p[j];
    if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

}  // namespace

Tensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError("unsupported image format in " + path + " (expected binary PGM/PPM)");
  }
  const int w = read_header_int(in), h = read_header_int(in), maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw IoError("bad netpbm header in " + path);
  in.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError("truncated image " + path);
  Tensor img({channels, h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < channels; ++k) {
        img.at(k, r, c) = raw[(static_cast<std::size_t>(r) * w + c) * channels + k] / double(maxval);
      }
  return img;
}

void write_image(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_image expects [1|3, H, W]");
  }
  const int channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < channels; ++k) {
        const double v = std::clamp(image.at(k, r, c), 0.0, 1.0);
        raw[(static_cast<std::size_t>(r) * w + c) * channels + k] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing image " + path);
}

BinaryMask rasterize_polygons(const std::vector<Polygon>& polygons, int height, int width) {
  BinaryMask m(height, width);
  for (const Polygon& poly : polygons) {
    if (poly.points.size() < 3) continue;
    double x0 = width, y0 = height, x1 = 0.0, y1 = 0.0;
    for (const auto& [x, y] : poly.points) {
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
    const int r0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int r1 = std::min(height, static_cast<int>(std::ceil(y1)) + 1);
    const int c0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int c1 = std::min(width, static_cast<int>(std::ceil(x1)) + 1);
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        if (!m.at(r, c) && point_in_polygon(poly, c + 0.5, r + 0.5)) m.set(r, c);
      }
  }
  return m;
}

std::vector<Polygon> mask_to_polygons(const BinaryMask& mask) {
  std::vector<Polygon> polys;
  for (int r = 0; r < mask.height(); ++r) {
    int c = 0;
    while (c < mask.width()) {
      if (!mask.at(r, c)) {
        ++c;
        continue;
      }
      const int start = c;
      while (c < mask.width() && mask.at(r, c)) ++c;
      Polygon p;
      p.points = {{start, r}, {c, r}, {c, r + 1}, {start, r + 1}};
      polys.push_back(std::move(p));
    }
  }
  return polys;
}

CocoAnnotations load_coco_annotations(const std::string& annotation_file) {
  std::ifstream in(annotation_file);
  if (!in) throw IoError("cannot open annotation file " + annotation_file);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ValidationError("annotation file " + annotation_file + " is not valid JSON: " + e.what());
  }
  const fs::path base = fs::path(annotation_file).parent_path();
  CocoAnnotations out;

  try {
    std::vector<std::pair<int, std::string>> cats;
    for (const auto& c : root.value("categories", json::array())) {
      cats.emplace_back(c.at("id").get<int>(), c.value("name", std::string()));
    }
    std::sort(cats.begin(), cats.end());
    for (const auto& [id, name] : cats) {
      const int mapped = static_cast<int>(out.category_remap.size()) + 1;
      out.category_remap[id] = mapped;
      out.category_names.push_back(name);
    }

    std::map<int, std::size_t> by_id;
    for (const auto& img : root.value("images", json::array())) {
      AnnotationRecord rec;
      rec.image_id = img.at("id").get<int>();
      rec.width = img.at("width").get<int>();
      rec.height = img.at("height").get<int>();
      const fs::path p = base / img.at("file_name").get<std::string>();
      rec.image_path = p.string();
      if (!fs::exists(p)) throw IoError("missing image " + rec.image_path);
      by_id[rec.image_id] = out.records.size();
      out.records.push_back(std::move(rec));
    }

    for (const auto& ann : root.value("annotations", json::array())) {
      const int image_id = ann.at("image_id").get<int>();
      auto it = by_id.find(image_id);
      if (it == by_id.end()) {
        throw ValidationError("annotation references unknown image id " + std::to_string(image_id));
      }
      AnnotationRecord& rec = out.records[it->second];
      const json& seg = ann.at("segmentation");
      if (seg.is_object()) throw ValidationError("RLE unsupported (image id " + std::to_string(image_id) + ")");
      if (!seg.is_array()) throw ValidationError("segmentation must be a polygon list");
      AnnotatedObject obj;
      obj.category_id = ann.at("category_id").get<int>();
      if (!out.category_remap.count(obj.category_id)) {
        throw ValidationError("annotation uses undeclared category " + std::to_string(obj.category_id));
      }
      bool malformed = seg.empty();
      for (const auto& flat : seg) {
        if (!flat.is_array() || flat.size() % 2 != 0) {
          malformed = true;
          break;
        }
        Polygon poly;
        for (std::size_t k = 0; k + 1 < flat.size(); k += 2) {
          if (!flat[k].is_number() || !flat[k + 1].is_number()) {
            malformed = true;
            break;
          }
          poly.points.emplace_back(flat[k].get<double>(), flat[k + 1].get<double>());
        }
        if (malformed || !valid_polygon(poly, rec.width, rec.height)) {
          malformed = true;
          break;
        }
        obj.polygons.push_back(std::move(poly));
      }
      if (malformed) {
        ++out.skipped_annotations;
        continue;
      }
      rec.objects.push_back(std::move(obj));
    }
  } catch (const json::exception& e) {
    throw ValidationError("annotation file " + annotation_file + ": " + e.what());
  }
  return out;
}

Scene rasterize(const AnnotationRecord& record, const std::map<int, int>& category_remap) {
  Scene scene;
  scene.image_id = std::to_string(record.image_id);
  scene.image = read_image(record.image_path);
  if (scene.height() != record.height || scene.width() != record.width) {
    throw ValidationError("image " + record.image_path + " size differs from its annotation");
  }
  for (const AnnotatedObject& obj : record.objects) {
    auto it = category_remap.find(obj.category_id);
    if (it == category_remap.end()) {
      throw ValidationError("category " + std::to_string(obj.category_id) + " missing from remap table");
    }
    BinaryMask m = rasterize_polygons(obj.polygons, record.height, record.width);
    if (m.empty()) continue;
    BinaryMask full = m;
    scene.instances.push_back(make_instance(it->second, std::move(m), std::move(full)));
  }
  return scene;
}

void write_dataset(const std::string& dir, const std::vector<Scene>& scenes,
                   const std::vector<std::string>& category_names) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());
  json root;
  root["info"] = {{"description", "pep dataset"}, {"version", 1}};
  root["categories"] = json::array();
  for (std::size_t i = 0; i < category_names.size(); ++i) {
    root["categories"].push_back({{"id", static_cast<int>(i) + 1}, {"name", category_names[i]}});
  }
  root["images"] = json::array();
  root["annotations"] = json::array();
  int ann_id = 1;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.%s", i, s.image.dim(0) == 1 ? "pgm" : "ppm");
    write_image((fs::path(dir) / name).string(), s.image);
    const int image_id = static_cast<int>(i);
    root["images"].push_back(
        {{"id", image_id}, {"file_name", name}, {"width", s.width()}, {"height", s.height()}});
    for (const auto& inst : s.instances) {
      json seg = json::array();
      for (const Polygon& p : mask_to_polygons(inst.mask)) {
        json flat = json::array();
        for (const auto& [x, y] : p.points) {
          flat.push_back(x);
          flat.push_back(y);
        }
        seg.push_back(std::move(flat));
      }
      root["annotations"].push_back({{"id", ann_id++},
                                     {"image_id", image_id},
                                     {"category_id", inst.class_id},
                                     {"segmentation", std::move(seg)},
                                     {"area", inst.mask.area()},
                                     {"bbox", {inst.bbox.col0, inst.bbox.row0, inst.bbox.width(), inst.bbox.height()}},
                                     {"iscrowd", 0}});
    }
  }
  std::ofstream out(fs::path(dir) / "annotations.json");
  if (!out) throw IoError("cannot write annotations in " + dir);
  out << root.dump() << "\n";
}

std::vector<Scene> load_dataset(const std::string& dir, std::vector<std::string>* category_names) {
  const CocoAnnotations ann = load_coco_annotations((fs::path(dir) / "annotations.json").string());
  if (category_names) *category_names = ann.category_names;
  std::vector<Scene> scenes;
  for (const auto& rec : ann.records) scenes.push_back(rasterize(rec, ann.category_remap));
  return scenes;
}

std::uint64_t dataset_hash(const std::vector<Scene>& scenes) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const Scene& s : scenes) {
    mix(s.image.checksum());
    for (const auto& inst : s.instances) {
      mix(static_cast<std::uint64_t>(inst.class_id));
      for (std::uint8_t b : inst.mask.bits()) mix(b);
    }
  }
  return h;
}

}  // namespace pep
