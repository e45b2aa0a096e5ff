// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pep/detections_io.hpp"
#include "pep/errors.hpp"
#include "pep/nn.hpp"

using namespace pep;
namespace fs = std::filesystem;

TEST_CASE("run-length coding round trips and starts with a background run") {
  BinaryMask m(3, 4);
  m.set(0, 0);
  m.set(0, 1);
  m.set(2, 3);
  const auto runs = run_length_encode(m);
  CHECK(runs == std::vector<int>{0, 2, 9, 1});
  CHECK(run_length_decode(runs, 3, 4) == m);

  BinaryMask empty(2, 2);
  CHECK(run_length_encode(empty) == std::vector<int>{4});
  CHECK_THROWS_AS(run_length_decode({3}, 2, 2), ValidationError);
  CHECK_THROWS_AS(run_length_decode({3, 5}, 2, 2), ValidationError);

  Rng rng(4);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask r(7, 9);
    for (auto& b : r.bits()) b = coin(rng);
    CHECK(run_length_decode(run_length_encode(r), 7, 9) == r);
  }
}

TEST_CASE("detections file round trip") {
  const fs::path dir = fs::temp_directory_path() / "pep_test_dets";
  fs::create_directories(dir);
  BinaryMask a(4, 4), b(4, 4);
  a.set(1, 1);
  b.set(3, 0);
  b.set(3, 1);
  const std::vector<Detection> dets{{"img0", 2, a, 0.75}, {"img1", 1, b, 0.125}};
  write_detections((dir / "d.txt").string(), dets);
  const auto back = read_detections((dir / "d.txt").string());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].image_id == dets[i].image_id);
    CHECK(back[i].class_id == dets[i].class_id);
    CHECK(back[i].score == dets[i].score);
    CHECK(back[i].mask == dets[i].mask);
  }

  std::ofstream(dir / "bad.txt") << "img0 1 0.5 4 4 16\n";
  CHECK_THROWS_AS(read_detections((dir / "bad.txt").string()), ValidationError);
  CHECK_THROWS_AS(write_detections((dir / "x.txt").string(), {{"has space", 1, a, 0.5}}), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("overlay blends instance colors") {
  Tensor img({3, 4, 4});
  BinaryMask m(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m.set(r, c);
  const Tensor out = render_overlay(img, {{"i", 1, m, 0.9}}, 0.5);
  CHECK(out.shape() == img.shape());
  const auto color = instance_color(0);
  // Interior pixel: half of the color over a black image.
  CHECK(out.at(0, 1, 1) == doctest::Approx(0.5 * color[0]));
  CHECK(instance_color(0) != instance_color(1));
  CHECK(render_overlay(img, {}, 0.5).checksum() == img.checksum());
}
