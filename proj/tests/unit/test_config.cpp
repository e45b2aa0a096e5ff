// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "pep/config.hpp"
#include "pep/errors.hpp"

using namespace pep;

TEST_CASE("defaults validate and keep the documented recipe") {
  const RunConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.momentum == 0.9);
  CHECK(c.train.weight_decay == 0.0001);
  CHECK(c.train.alpha == 1.0);
  CHECK(c.train.delta == 1.0);
  CHECK(c.model.tau_conf == 0.3);
  CHECK(c.model.n_cap == 30);
  CHECK(c.model.window_radius == 8);
  CHECK(c.model.tau_merge == 0.5);
  CHECK(c.train.loss_reduction == Reduction::kMean);
}

TEST_CASE("partial files override only the named keys") {
  const RunConfig c = parse_config(R"({"model": {"tau_conf": 0.4}, "train": {"loss_reduction": "sum", "epochs": 10}})");
  CHECK(c.model.tau_conf == 0.4);
  CHECK(c.model.n_cap == 30);
  CHECK(c.train.loss_reduction == Reduction::kSum);
  CHECK(c.train.epochs == 10);
}

TEST_CASE("dump and parse round trip") {
  RunConfig c;
  c.model.k_max = 3;
  c.data.overlap_bias = 0.25;
  c.train.milestones = {0.5, 0.9};
  c.eval.size_buckets = "coco";
  const RunConfig back = parse_config(dump_config(c));
  CHECK(back.model.k_max == 3);
  CHECK(back.data.overlap_bias == 0.25);
  CHECK(back.train.milestones == std::vector<double>{0.5, 0.9});
  CHECK(back.eval.size_buckets == "coco");
  CHECK(dump_config(back) == dump_config(c));
}

TEST_CASE("invalid configs are rejected with a reason") {
  CHECK_THROWS_AS(parse_config("{not json"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"modle": {}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"tau_cnf": 0.1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"n_cap": "many"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"loss_reduction": "median"}})"), ValidationError);

  RunConfig c;
  c.data.image_size = 50;
  try {
    validate(c);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("size must be multiple of 32") != std::string::npos);
  }
  c = RunConfig{};
  c.train.milestones = {0.9, 0.5};
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = RunConfig{};
  c.model.tau_merge = 1.0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = RunConfig{};
  c.train.scale_ranges = {10, 20, 30};
  CHECK_THROWS_AS(validate(c), ValidationError);
}
