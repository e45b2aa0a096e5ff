// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth, train, eval, infer, gradcheck, print-config.
// Exit status: 0 success, 1 invalid input, 2 any other failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pep/checkpoint.hpp"
#include "pep/data.hpp"
#include "pep/detections_io.hpp"
#include "pep/errors.hpp"
#include "pep/gradcheck.hpp"
#include "pep/training.hpp"

namespace {

using namespace pep;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitFailure = 2;

struct SynthArgs {
  int n = 32;
  int size = 64;
  double overlap = 0.7;
  std::uint64_t seed = 7;
  int min_instances = 2;
  int max_instances = 5;
  std::string out = "data/synth";
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.image_size = a.size;
  spec.overlap_bias = a.overlap;
  spec.seed = a.seed;
  spec.min_instances = a.min_instances;
  spec.max_instances = a.max_instances;
  validate(spec);
  if (a.n < 1) throw ValidationError("--n must be >= 1");
  const auto scenes = generate_dataset(spec, a.n);
  write_dataset(a.out, scenes, kShapeClassNames);
  RunConfig snapshot;
  snapshot.data.image_size = a.size;
  snapshot.data.num_images = a.n;
  snapshot.data.overlap_bias = a.overlap;
  snapshot.data.seed = a.seed;
  snapshot.data.min_instances = a.min_instances;
  snapshot.data.max_instances = a.max_instances;
  write_run_manifest(a.out + "/run_manifest.json", snapshot, a.seed, dataset_hash(scenes), "synth");
  int instances = 0;
  for (const auto& s : scenes) instances += static_cast<int>(s.instances.size());
  std::cout << "wrote " << scenes.size() << " images, " << instances << " instances to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string data;
  long long seed = -1;
  int epochs = 0;
};

RunConfig config_from(const std::string& path) {
  RunConfig c = path.empty() ? RunConfig{} : load_config(path);
  validate(c);
  return c;
}

int cmd_train(const TrainArgs& a) {
  RunConfig config = config_from(a.config);
  if (!a.out.empty()) config.train.out_dir = a.out;
  if (!a.data.empty()) config.data.path = a.data;
  if (a.seed >= 0) config.train.seed = static_cast<std::uint64_t>(a.seed);
  if (a.epochs > 0) config.train.epochs = a.epochs;
  validate(config);
  const auto scenes = load_training_scenes(config);
  PepModel model(config, config.train.seed);
  TrainOptions opts;
  opts.on_step = [&](const StepRecord& r) {
    if (r.step == 1 || r.step % 50 == 0) std::cout << format_log_line(r) << std::endl;
  };
  const TrainResult res = train(model, scenes, opts);
  std::cout << std::fixed << std::setprecision(4) << "steps=" << res.steps << " early_stopped="
            << (res.early_stopped ? "yes" : "no") << " train_AP50=" << res.ap50 << " loss_ratio=" << res.loss_ratio
            << " seconds=" << res.seconds << "\n"
            << "checkpoint " << config.train.out_dir << "/checkpoint-final\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string report;
  std::string detections;
  std::string config;
  bool gt_as_detections = false;
  bool ablation = false;
};

int run_ablation_table(const EvalArgs& a) {
  RunConfig base = config_from(a.config);
  if (!a.data.empty()) base.data.path = a.data;
  const auto scenes = load_training_scenes(base);
  const auto rows = run_ablation(base, scenes);
  for (const auto& row : rows) std::cerr << row.name << " trained " << row.steps << " steps in " << row.seconds << " s\n";
  const std::string table = format_ablation(rows);
  std::cout << table;
  std::filesystem::create_directories(base.train.out_dir);
  std::ofstream(base.train.out_dir + "/ablation.txt") << table;
  return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  if (a.ablation) return run_ablation_table(a);
  if (a.data.empty()) throw ValidationError("eval needs --data");
  std::vector<std::string> names;
  const auto scenes = load_dataset(a.data, &names);
  std::vector<Detection> dets;
  int num_classes = static_cast<int>(names.size());
  if (a.gt_as_detections) {
    dets = ground_truth_detections(scenes);
  } else if (!a.detections.empty()) {
    dets = read_detections(a.detections);
  } else {
    if (a.checkpoint.empty()) throw ValidationError("eval needs --checkpoint, --detections or --gt-as-detections");
    const PepModel model = load_checkpoint(a.checkpoint);
    if (model.config().model.num_classes != num_classes) {
      throw ValidationError("dataset has " + std::to_string(num_classes) + " classes, checkpoint has " +
                            std::to_string(model.config().model.num_classes));
    }
    dets = model.infer(scenes);
  }
  const EvalReport report = evaluate(dets, scenes, num_classes);
  std::cout << format_report(report);
  if (!a.report.empty()) write_report(a.report, report);
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint;
  std::string image;
  std::string out = "detections.txt";
  std::string overlay;
};

int cmd_infer(const InferArgs& a) {
  const PepModel model = load_checkpoint(a.checkpoint);
  const Tensor image = read_image(a.image);
  const std::string id = std::filesystem::path(a.image).stem().string();
  const auto dets = model.infer(image, id);
  write_detections(a.out, dets);
  std::cout << dets.size() << " instances\n";
  for (const auto& d : dets) {
    std::cout << "  class=" << d.class_id << " score=" << std::fixed << std::setprecision(4) << d.score
              << " area=" << d.mask.area() << "\n";
  }
  if (!a.overlay.empty()) write_image(a.overlay, render_overlay(image, dets, model.config().infer.overlay_opacity));
  return kExitOk;
}

int cmd_gradcheck(const std::string& sabotage, std::uint64_t seed) {
  GradcheckOptions opts;
  opts.seed = seed;
  if (!sabotage.empty()) opts.sabotage = parse_loss_term(sabotage);
  const GradcheckReport report = run_gradcheck(opts);
  std::cout << format_gradcheck(report);
  int passed = 0;
  for (const auto& t : report.terms) passed += t.passed ? 1 : 0;
  std::cout << passed << "/" << report.terms.size() << " terms pass\n";
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perceive-excavate-purify instance segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic overlapping-shapes dataset");
  s->add_option("--n", synth.n, "Number of images");
  s->add_option("--size", synth.size, "Image side in pixels (multiple of 32)");
  s->add_option("--overlap", synth.overlap, "Probability of adjacent placement");
  s->add_option("--seed", synth.seed, "Dataset seed");
  s->add_option("--min-instances", synth.min_instances);
  s->add_option("--max-instances", synth.max_instances);
  s->add_option("--out", synth.out, "Output directory");

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train_args.config, "Config file (JSON)");
  t->add_option("--out", train_args.out, "Output directory (overrides train.out_dir)");
  t->add_option("--data", train_args.data, "Dataset directory (overrides data.path)");
  t->add_option("--seed", train_args.seed, "Training seed (overrides train.seed)");
  t->add_option("--epochs", train_args.epochs, "Epoch budget (overrides train.epochs)");

  EvalArgs eval_args;
  auto* e = app.add_subcommand("eval", "Evaluate mask AP");
  e->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory");
  e->add_option("--data", eval_args.data, "Dataset directory");
  e->add_option("--report", eval_args.report, "Write key=value report here");
  e->add_option("--detections", eval_args.detections, "Evaluate a detections file instead of a model");
  e->add_option("--config", eval_args.config, "Config for --ablation");
  e->add_flag("--gt-as-detections", eval_args.gt_as_detections, "Score the ground truth against itself");
  e->add_flag("--ablation", eval_args.ablation, "Train and score the four ablation configurations");

  InferArgs infer_args;
  auto* i = app.add_subcommand("infer", "Segment one image");
  i->add_option("--checkpoint", infer_args.checkpoint, "Checkpoint directory")->required();
  i->add_option("--image", infer_args.image, "PPM/PGM image")->required();
  i->add_option("--out", infer_args.out, "Detections file");
  i->add_option("--overlay", infer_args.overlay, "Write a color overlay (PPM)");

  std::string sabotage;
  std::uint64_t gc_seed = 0;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every loss term");
  g->add_option("--sabotage", sabotage, "Flip the gradient sign of one term (L_P, L_E, L_PE, L_Matrix, L_Mask)");
  g->add_option("--seed", gc_seed);

  std::string print_path;
  auto* p = app.add_subcommand("print-config", "Print the effective config");
  p->add_option("--config", print_path, "Config file to merge over the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train_args);
    if (e->parsed()) return cmd_eval(eval_args);
    if (i->parsed()) return cmd_infer(infer_args);
    if (g->parsed()) return cmd_gradcheck(sabotage, gc_seed);
    if (p->parsed()) {
      std::cout << dump_config(config_from(print_path));
      return kExitOk;
    }
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
