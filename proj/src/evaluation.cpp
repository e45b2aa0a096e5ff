// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pep/errors.hpp"

namespace pep {

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("mask_iou: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
  std::size_t inter = 0, uni = 0;
  const auto& x = a.bits();
  const auto& y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += (x[i] && y[i]) ? 1 : 0;
    uni += (x[i] || y[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::array<std::pair<double, double>, 4> area_ranges(const EvalConfig& config, int canvas_height,
                                                     int canvas_width) {
  double s = 1.0;
  if (config.size_buckets == "scaled") {
    s = static_cast<double>(canvas_height) * canvas_width / (640.0 * 640.0);
  }
  constexpr double kMax = 1e10;
  return {{{0.0, kMax}, {0.0, 32.0 * 32.0 * s}, {32.0 * 32.0 * s, 96.0 * 96.0 * s}, {96.0 * 96.0 * s, kMax}}};
}

namespace {

constexpr int kIouCount = 10;
constexpr int kRecallPoints = 101;

double iou_threshold(int t) { return 0.5 + 0.05 * t; }

// Per (image, class, area range) matching outcome at every IoU threshold.
struct ImageResult {
  std::vector<double> scores;
  std::vector<int> order;  // detection ids, for stable merging
  std::vector<std::array<bool, kIouCount>> matched;
  std::vector<std::array<bool, kIouCount>> ignored;
  int num_gt = 0;  // non-ignored ground truth
};

ImageResult match_image(const std::vector<const Detection*>& dets, const std::vector<int>& det_ids,
                        const std::vector<const GroundTruthInstance*>& gts,
                        std::pair<double, double> range, int max_dets) {
  ImageResult res;
  // Ground truth outside the area range is ignored; ignored entries go last.
  std::vector<int> gt_order(gts.size());
  std::iota(gt_order.begin(), gt_order.end(), 0);
  std::vector<bool> gt_ignore(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const double area = static_cast<double>(gts[g]->mask.area());
    gt_ignore[g] = area < range.first || area > range.second;
    if (!gt_ignore[g]) ++res.num_gt;
  }
  std::stable_sort(gt_order.begin(), gt_order.end(), [&](int a, int b) { return !gt_ignore[a] && gt_ignore[b]; });

  std::vector<int> det_order(dets.size());
  std::iota(det_order.begin(), det_order.end(), 0);
  std::stable_sort(det_order.begin(), det_order.end(), [&](int a, int b) {
    if (dets[a]->score != dets[b]->score) return dets[a]->score > dets[b]->score;
    return det_ids[a] < det_ids[b];
  });
  if (static_cast<int>(det_order.size()) > max_dets) det_order.resize(max_dets);

  std::vector<std::vector<double>> ious(det_order.size(), std::vector<double>(gts.size()));
  for (std::size_t d = 0; d < det_order.size(); ++d)
    for (std::size_t g = 0; g < gts.size(); ++g) ious[d][g] = mask_iou(dets[det_order[d]]->mask, gts[g]->mask);

  res.scores.resize(det_order.size());
  res.order.resize(det_order.size());
  res.matched.assign(det_order.size(), {});
  res.ignored.assign(det_order.size(), {});
  for (std::size_t d = 0; d < det_order.size(); ++d) {
    res.scores[d] = dets[det_order[d]]->score;
    res.order[d] = det_ids[det_order[d]];
  }
  for (int t = 0; t < kIouCount; ++t) {
    std::vector<bool> gt_taken(gts.size(), false);
    for (std::size_t d = 0; d < det_order.size(); ++d) {
      double best = std::min(iou_threshold(t), 1.0 - 1e-10);
      int match = -1;
      for (int g : gt_order) {
        if (gt_taken[g]) continue;
        // Once matched to a real ground truth, stop before the ignored tail.
        if (match >= 0 && !gt_ignore[match] && gt_ignore[g]) break;
        if (ious[d][g] < best) continue;
        best = ious[d][g];
        match = g;
      }
      if (match >= 0) {
        gt_taken[match] = true;
        res.matched[d][t] = true;
        res.ignored[d][t] = gt_ignore[match];
      } else {
        const double area = static_cast<double>(dets[det_order[d]]->mask.area());
        res.ignored[d][t] = area < range.first || area > range.second;
      }
    }
  }
  return res;
}

// Interpolated precision at the 101 recall points, or empty when no ground truth counts.
std::vector<double> precision_curve(const std::vector<const ImageResult*>& images, int t) {
  int num_gt = 0;
  std::vector<std::pair<double, int>> entries;  // (score, global index) for stable ordering
  std::vector<std::pair<bool, bool>> flags;     // (matched, ignored)
  for (const ImageResult* r : images) {
    num_gt += r->num_gt;
    for (std::size_t d = 0; d < r->scores.size(); ++d) {
      entries.emplace_back(r->scores[d], static_cast<int>(flags.size()));
      flags.emplace_back(r->matched[d][t], r->ignored[d][t]);
    }
  }
  if (num_gt == 0) return {};
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> recall, precision;
  double tp = 0.0, fp = 0.0;
  for (const auto& [score, idx] : entries) {
    const auto [matched, ignored] = flags[idx];
    if (ignored) continue;
    (matched ? tp : fp) += 1.0;
    recall.push_back(tp / num_gt);
    precision.push_back(tp / (tp + fp + 1e-300));
  }
  for (int i = static_cast<int>(precision.size()) - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  std::vector<double> q(kRecallPoints, 0.0);
  for (int k = 0; k < kRecallPoints; ++k) {
    const double rt = k / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), rt);
    if (it != recall.end()) q[k] = precision[it - recall.begin()];
  }
  return q;
}

}  // namespace

EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<Scene>& scenes,
                    int num_classes, const EvalConfig& config) {
  EvalReport report;
  report.num_images = static_cast<int>(scenes.size());
  report.num_detections = static_cast<int>(detections.size());
  if (scenes.empty()) return report;

  std::map<std::string, int> image_index;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!image_index.emplace(scenes[i].image_id, static_cast<int>(i)).second) {
      throw ValidationError("evaluate: duplicate image id " + scenes[i].image_id);
    }
    for (const auto& g : scenes[i].instances) {
      if (g.class_id < 1 || g.class_id > num_classes) {
        throw ValidationError("evaluate: unknown ground-truth class " + std::to_string(g.class_id));
      }
      ++report.num_ground_truth;
    }
  }
  // dets[image][class] with the original input index as detection id.
  const std::size_t n_img = scenes.size();
  std::vector<std::vector<std::vector<const Detection*>>> dets(n_img, std::vector<std::vector<const Detection*>>(num_classes + 1));
  std::vector<std::vector<std::vector<int>>> det_ids(n_img, std::vector<std::vector<int>>(num_classes + 1));
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& d = detections[i];
    if (d.class_id < 1 || d.class_id > num_classes) {
      throw ValidationError("evaluate: unknown class id " + std::to_string(d.class_id));
    }
    auto it = image_index.find(d.image_id);
    if (it == image_index.end()) throw ValidationError("evaluate: unknown image id " + d.image_id);
    if (d.score < 0.0 || d.score > 1.0) throw ValidationError("evaluate: score outside [0,1]");
    dets[it->second][d.class_id].push_back(&d);
    det_ids[it->second][d.class_id].push_back(static_cast<int>(i));
  }

  const auto ranges = area_ranges(config, scenes.front().height(), scenes.front().width());
  // mean over (class, threshold) entries with defined precision, per range and threshold subset.
  auto average = [&](int range_idx, int t_lo, int t_hi) {
    double sum = 0.0;
    int count = 0;
    for (int c = 1; c <= num_classes; ++c) {
      std::vector<ImageResult> results;
      results.reserve(n_img);
      for (std::size_t i = 0; i < n_img; ++i) {
        std::vector<const GroundTruthInstance*> gts;
        for (const auto& g : scenes[i].instances)
          if (g.class_id == c) gts.push_back(&g);
        for (const Detection* d : dets[i][c]) {
          if (d->mask.height() != scenes[i].height() || d->mask.width() != scenes[i].width()) {
            throw ShapeError("evaluate: detection mask size differs from image " + scenes[i].image_id);
          }
        }
        results.push_back(match_image(dets[i][c], det_ids[i][c], gts, ranges[range_idx], config.max_dets));
      }
      std::vector<const ImageResult*> ptrs;
      for (const auto& r : results) ptrs.push_back(&r);
      for (int t = t_lo; t < t_hi; ++t) {
        const auto q = precision_curve(ptrs, t);
        if (q.empty()) continue;
        sum += std::accumulate(q.begin(), q.end(), 0.0);
        count += kRecallPoints;
      }
    }
    return count == 0 ? kUndefinedMetric : sum / count;
  };
  report.ap = average(0, 0, kIouCount);
  report.ap50 = average(0, 0, 1);
  report.ap75 = average(0, 5, 6);
  report.ap_small = average(1, 0, kIouCount);
  report.ap_medium = average(2, 0, kIouCount);
  report.ap_large = average(3, 0, kIouCount);
  return report;
}

std::vector<Detection> ground_truth_detections(const std::vector<Scene>& scenes) {
  std::vector<Detection> out;
  for (const Scene& s : scenes)
    for (const auto& g : s.instances) out.push_back({s.image_id, g.class_id, g.mask, 1.0});
  return out;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "AP=" << r.ap << "\nAP50=" << r.ap50 << "\nAP75=" << r.ap75 << "\nAP_S=" << r.ap_small
     << "\nAP_M=" << r.ap_medium << "\nAP_L=" << r.ap_large << "\nimages=" << r.num_images
     << "\ndetections=" << r.num_detections << "\nground_truth=" << r.num_ground_truth << "\n";
  return os.str();
}

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path);
  out << format_report(report);
}

}  // namespace pep
