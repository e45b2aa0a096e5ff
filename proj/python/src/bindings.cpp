// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

// Python entry points. Configs cross the boundary as JSON text and images
// as float64 numpy arrays shaped [C, H, W]; masks come back as uint8 [H, W].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pep/checkpoint.hpp"
#include "pep/data.hpp"
#include "pep/errors.hpp"
#include "pep/evaluation.hpp"
#include "pep/gradcheck.hpp"
#include "pep/purifying.hpp"
#include "pep/semantics.hpp"
#include "pep/training.hpp"

namespace py = pybind11;
using namespace pep;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

MaskArray mask_to_array(const BinaryMask& m) {
  MaskArray out({m.height(), m.width()});
  std::copy(m.bits().begin(), m.bits().end(), out.mutable_data());
  return out;
}

BinaryMask array_to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be 2-D");
  BinaryMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits()[i] = a.data()[i] != 0;
  return m;
}

py::dict scene_to_dict(const Scene& s) {
  py::list instances;
  for (const auto& inst : s.instances) {
    py::dict d;
    d["class_id"] = inst.class_id;
    d["mask"] = mask_to_array(inst.mask);
    d["center"] = py::make_tuple(inst.center_row, inst.center_col);
    instances.append(d);
  }
  py::dict out;
  out["image_id"] = s.image_id;
  out["image"] = to_array(s.image);
  out["instances"] = instances;
  return out;
}

Scene dict_to_scene(const py::dict& d) {
  Scene s;
  s.image_id = d["image_id"].cast<std::string>();
  s.image = to_tensor(d["image"].cast<Array>());
  for (const auto& item : d["instances"].cast<py::list>()) {
    const auto inst = item.cast<py::dict>();
    const BinaryMask m = array_to_mask(inst["mask"].cast<MaskArray>());
    s.instances.push_back(make_instance(inst["class_id"].cast<int>(), m, m));
  }
  validate_scene(s);
  return s;
}

py::dict detection_to_dict(const Detection& det) {
  py::dict d;
  d["image_id"] = det.image_id;
  d["class_id"] = det.class_id;
  d["score"] = det.score;
  d["mask"] = mask_to_array(det.mask);
  return d;
}

Detection dict_to_detection(const py::dict& d) {
  return {d["image_id"].cast<std::string>(), d["class_id"].cast<int>(),
          array_to_mask(d["mask"].cast<MaskArray>()), d["score"].cast<double>()};
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["AP"] = r.ap;
  d["AP50"] = r.ap50;
  d["AP75"] = r.ap75;
  d["AP_S"] = r.ap_small;
  d["AP_M"] = r.ap_medium;
  d["AP_L"] = r.ap_large;
  d["images"] = r.num_images;
  d["detections"] = r.num_detections;
  d["ground_truth"] = r.num_ground_truth;
  return d;
}

py::dict losses_to_dict(const LossBreakdown& b) {
  py::dict d;
  d["L_P"] = b.l_p;
  d["L_E"] = b.l_e;
  d["L_PE"] = b.l_pe;
  d["L_Matrix"] = b.l_matrix;
  d["L_Mask"] = b.l_mask;
  d["total"] = b.total;
  return d;
}

std::vector<Scene> to_scenes(const py::list& scenes) {
  std::vector<Scene> out;
  for (const auto& s : scenes) out.push_back(dict_to_scene(s.cast<py::dict>()));
  return out;
}

}  // namespace

PYBIND11_MODULE(_pep, m) {
  m.doc() = "Perceive-excavate-purify instance segmentation (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config", [] { return dump_config(RunConfig{}); }, "Default run config as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return dump_config(parse_config(text)); },
        py::arg("text"), "Parses, validates and re-serializes a JSON config.");

  m.def("generate_scene",
        [](int size, int min_instances, int max_instances, double overlap_bias, std::uint64_t seed) {
          SynthSpec spec;
          spec.image_size = size;
          spec.min_instances = min_instances;
          spec.max_instances = max_instances;
          spec.overlap_bias = overlap_bias;
          spec.seed = seed;
          validate(spec);
          return scene_to_dict(generate_scene(spec));
        },
        py::arg("size") = 64, py::arg("min_instances") = 2, py::arg("max_instances") = 5,
        py::arg("overlap_bias") = 0.7, py::arg("seed") = 7);
  m.def("load_dataset", [](const std::string& dir) {
    py::list out;
    for (const Scene& s : load_dataset(dir)) out.append(scene_to_dict(s));
    return out;
  }, py::arg("path"));

  m.def("cross_entropy", [](const Array& probs, const Array& one_hot) {
    return cross_entropy(to_tensor(probs), to_tensor(one_hot));
  }, py::arg("probs"), py::arg("one_hot"));
  m.def("threshold_components", [](const Array& matrix, double tau) {
    return threshold_components(to_tensor(matrix), tau);
  }, py::arg("matrix"), py::arg("tau"), "Connected-component label (smallest member) per row.");
  m.def("render_mask", [](const Array& descriptor, const Array& basis) {
    return to_array(render_mask(to_tensor(descriptor), GeneralFeature{to_tensor(basis)}).probs);
  }, py::arg("descriptor"), py::arg("basis"));
  m.def("mask_iou", [](const MaskArray& a, const MaskArray& b) {
    return mask_iou(array_to_mask(a), array_to_mask(b));
  });
  m.def("evaluate", [](const py::list& detections, const py::list& scenes, int num_classes) {
    std::vector<Detection> dets;
    for (const auto& d : detections) dets.push_back(dict_to_detection(d.cast<py::dict>()));
    return report_to_dict(evaluate(dets, to_scenes(scenes), num_classes));
  }, py::arg("detections"), py::arg("scenes"), py::arg("num_classes"));

  m.def("gradcheck", [](std::uint64_t seed) {
    GradcheckOptions opts;
    opts.seed = seed;
    GradcheckReport report;
    {
      py::gil_scoped_release release;
      report = run_gradcheck(opts);
    }
    py::dict out;
    for (const auto& t : report.terms) {
      py::dict d;
      d["max_rel_error"] = t.max_rel_error;
      d["checked"] = t.checked;
      d["passed"] = t.passed;
      out[py::str(to_string(t.term))] = d;
    }
    return out;
  }, py::arg("seed") = 1);

  py::class_<PepModel>(m, "Model")
      .def(py::init([](const std::string& config_json, std::uint64_t seed) {
             return PepModel(parse_config(config_json), seed);
           }),
           py::arg("config_json") = "{}", py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const PepModel& self, const std::string& dir) { save_checkpoint(dir, self); })
      .def("config", [](const PepModel& self) { return dump_config(self.config()); })
      .def("num_parameters", [](const PepModel& self) { return self.store().total_size(); })
      .def("losses", [](const PepModel& self, const py::dict& scene, bool ground_truth) {
             ForwardOptions opts;
             opts.mode = ground_truth ? DescriptorMode::kGroundTruth : DescriptorMode::kPredicted;
             NoGradGuard no_grad;
             return losses_to_dict(self.forward(dict_to_scene(scene), opts).losses);
           }, py::arg("scene"), py::arg("ground_truth") = true)
      .def("infer", [](const PepModel& self, const Array& image, const std::string& image_id) {
             std::vector<Detection> dets;
             {
               const Tensor t = to_tensor(image);
               py::gil_scoped_release release;
               dets = self.infer(t, image_id);
             }
             py::list out;
             for (const Detection& d : dets) out.append(detection_to_dict(d));
             return out;
           }, py::arg("image"), py::arg("image_id") = "0")
      .def("train", [](PepModel& self, const py::object& scenes, bool write_outputs) {
             const std::vector<Scene> data =
                 scenes.is_none() ? load_training_scenes(self.config()) : to_scenes(scenes.cast<py::list>());
             TrainOptions opts;
             opts.write_outputs = write_outputs;
             TrainResult r;
             {
               py::gil_scoped_release release;
               r = train(self, data, opts);
             }
             py::dict out;
             out["steps"] = r.steps;
             out["early_stopped"] = r.early_stopped;
             out["ap50"] = r.ap50;
             out["loss_ratio"] = r.loss_ratio;
             out["seconds"] = r.seconds;
             py::list history;
             for (const StepRecord& s : r.history) history.append(losses_to_dict(s.losses));
             out["history"] = history;
             return out;
           }, py::arg("scenes") = py::none(), py::arg("write_outputs") = false);
}
