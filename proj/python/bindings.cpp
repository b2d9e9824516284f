#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/datagen.hpp"
#include "linkdiff/errors.hpp"
#include "linkdiff/eval.hpp"
#include "linkdiff/kinematics.hpp"
#include "linkdiff/mechanism_io.hpp"
#include "linkdiff/synthesis.hpp"
#include "linkdiff/train.hpp"

namespace py = pybind11;
using namespace linkdiff;

namespace {

using PointArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Curve curve_from_array(const PointArray& points) {
  if (points.ndim() != 2 || points.shape(1) != 2) throw DimMismatch("expected an (n, 2) array of points");
  Curve c;
  const auto view = points.unchecked<2>();
  for (py::ssize_t i = 0; i < view.shape(0); ++i) c.points.push_back({view(i, 0), view(i, 1)});
  return c;
}

py::array_t<double> curve_to_array(const Curve& curve) {
  py::array_t<double> out({static_cast<py::ssize_t>(curve.size()), py::ssize_t{2}});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    view(static_cast<py::ssize_t>(i), 0) = curve.points[i].x;
    view(static_cast<py::ssize_t>(i), 1) = curve.points[i].y;
  }
  return out;
}

py::array_t<double> features_of(const MechanismGraph& g) {
  const FeatureMatrix m = encode_mechanism(g);
  py::array_t<double> out({py::ssize_t{kMaxNodes}, py::ssize_t{kRowWidth}});
  auto view = out.mutable_unchecked<2>();
  for (int r = 0; r < kMaxNodes; ++r)
    for (int c = 0; c < kRowWidth; ++c) view(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return out;
}

MechanismGraph graph_from_features(const PointArray& rows) {
  if (rows.ndim() != 2 || rows.shape(1) != kRowWidth || rows.shape(0) > kMaxNodes)
    throw DimMismatch("expected an (n, 24) feature array with n <= 20");
  std::vector<FeatureRow> decoded(static_cast<std::size_t>(rows.shape(0)));
  const auto view = rows.unchecked<2>();
  for (py::ssize_t r = 0; r < rows.shape(0); ++r)
    for (int c = 0; c < kRowWidth; ++c) decoded[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = view(r, c);
  return decode_rows(decoded);
}

std::string graph_to_json(const MechanismGraph& g) { return mechanism_to_json({g, 0, std::nullopt}).dump(); }

MechanismGraph graph_from_json(const std::string& text) {
  return mechanism_from_json(nlohmann::json::parse(text), 1).graph;
}

py::dict report_to_dict(const ValidationReport& r) {
  py::dict d;
  d["ok"] = r.ok();
  d["topology_ok"] = r.topology_ok;
  d["kinematics_ok"] = r.kinematics_ok;
  d["failing_node"] = r.failing_node;
  d["failing_angle_index"] = r.failing_angle_index;
  d["failing_angle"] = r.failing_angle;
  d["reason"] = r.reason;
  return d;
}

py::dict outcome_to_dict(const SynthesisOutcome& o) {
  py::dict d;
  d["graph"] = o.graph;
  d["valid"] = o.valid;
  d["report"] = report_to_dict(o.report);
  d["attempts"] = o.attempts;
  d["warnings"] = o.warnings;
  d["passes"] = o.passes;
  d["samples"] = o.samples;
  return d;
}

Strategy strategy_from(const std::string& name) {
  const auto s = parse_strategy(name);
  if (!s) throw py::value_error("unknown strategy: " + name);
  return *s;
}

}  // namespace

PYBIND11_MODULE(_linkdiff, m) {
  m.doc() = "Planar linkage graphs, kinematics and diffusion-based synthesis.";

  const py::object base = py::register_exception<Error>(m, "LinkdiffError", PyExc_RuntimeError);
  py::register_exception<TopologyError>(m, "TopologyError", base);
  py::register_exception<KinematicError>(m, "KinematicError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<IoError>(m, "IoError", base);

  py::class_<MechanismGraph>(m, "MechanismGraph")
      .def(py::init<>())
      .def_static("motor",
                  [](std::pair<double, double> pivot, std::pair<double, double> crank) {
                    return MechanismGraph::motor({pivot.first, pivot.second}, {crank.first, crank.second});
                  })
      .def(
          "add_grounded", [](MechanismGraph& g, double x, double y) { return g.add_grounded({x, y}); }, py::arg("x"),
          py::arg("y"))
      .def(
          "add_revolute",
          [](MechanismGraph& g, double x, double y, int a, int b) { return g.add_revolute({x, y}, a, b); },
          py::arg("x"), py::arg("y"), py::arg("parent_a"), py::arg("parent_b"))
      .def_property_readonly("node_count", &MechanismGraph::node_count)
      .def("edges", &MechanismGraph::edges)
      .def("features", &features_of)
      .def_static("from_features", &graph_from_features)
      .def("to_json", &graph_to_json)
      .def_static("from_json", &graph_from_json)
      .def("__eq__", [](const MechanismGraph& a, const MechanismGraph& b) { return a == b; })
      .def("__repr__", [](const MechanismGraph& g) {
        return "<MechanismGraph nodes=" + std::to_string(g.node_count()) + ">";
      });

  m.def(
      "validate", [](const MechanismGraph& g, int n_angles) { return report_to_dict(validate(g, n_angles)); },
      py::arg("graph"), py::arg("n_angles") = kDefaultAngles);

  m.def(
      "simulate",
      [](const MechanismGraph& g, int n_angles) {
        const Trajectory t = simulate(g, n_angles);
        py::array_t<double> out({static_cast<py::ssize_t>(t.angles.size()), py::ssize_t{t.node_count}, py::ssize_t{2}});
        auto view = out.mutable_unchecked<3>();
        for (py::ssize_t a = 0; a < view.shape(0); ++a)
          for (int k = 0; k < t.node_count; ++k) {
            const Vec2 p = t.at(static_cast<int>(a), k);
            view(a, k, 0) = p.x;
            view(a, k, 1) = p.y;
          }
        return out;
      },
      py::arg("graph"), py::arg("n_angles") = kDefaultAngles,
      "Joint positions with shape (n_angles, node_count, 2).");

  m.def(
      "coupler_curve", [](const MechanismGraph& g, int n_angles) { return curve_to_array(trace_coupler_curve(g, n_angles)); },
      py::arg("graph"), py::arg("n_angles") = kDefaultAngles);

  m.def(
      "normalize_curve", [](const PointArray& p) { return curve_to_array(normalize_curve(curve_from_array(p)).curve); },
      py::arg("points"));

  m.def(
      "chamfer_distance",
      [](const PointArray& a, const PointArray& b) { return chamfer_distance(curve_from_array(a), curve_from_array(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "generate_dataset",
      [](int count, int min_nodes, int max_nodes, double extra_ground_prob, std::uint64_t seed, int workers) {
        DataGenConfig c;
        c.count = count;
        c.min_nodes = min_nodes;
        c.max_nodes = max_nodes;
        c.extra_ground_prob = extra_ground_prob;
        c.seed = seed;
        c.workers = workers;
        std::vector<MechanismGraph> graphs;
        for (DatasetRecord& r : generate_records(c)) graphs.push_back(std::move(r.graph));
        return graphs;
      },
      py::arg("count"), py::arg("min_nodes") = 4, py::arg("max_nodes") = 8, py::arg("extra_ground_prob") = 0.25,
      py::arg("seed") = 0, py::arg("workers") = 1);

  m.def(
      "write_dataset",
      [](const std::string& path, const std::vector<MechanismGraph>& graphs) {
        std::vector<DatasetRecord> records;
        for (const MechanismGraph& g : graphs) records.push_back(make_record(g, 0));
        write_dataset(path, records);
      },
      py::arg("path"), py::arg("graphs"));

  m.def(
      "train",
      [](const std::string& dataset, const std::string& checkpoint, int steps, int batch_size, std::uint64_t seed) {
        TrainConfig c;
        c.steps = steps;
        c.batch_size = batch_size;
        c.seed = seed;
        c.check();
        const DatasetSplit split = split_dataset(load_dataset(dataset));
        std::vector<double> losses;
        {
          py::gil_scoped_release release;
          Trainer trainer(c, TrainingSet::from_records(split.train));
          losses = trainer.run(steps);
          save_checkpoint(checkpoint, trainer.state());
        }
        return losses;
      },
      py::arg("dataset"), py::arg("checkpoint"), py::arg("steps") = 500, py::arg("batch_size") = 128,
      py::arg("seed") = 0, "Trains on the training split and writes a checkpoint. Returns per-step losses.");

  m.def(
      "synthesize",
      [](const PointArray& target, const std::string& checkpoint, const std::string& strategy, int k, int n_max,
         std::uint64_t seed) {
        SynthesisConfig c;
        c.strategy = strategy_from(strategy);
        c.max_retries = k;
        c.n_max = n_max;
        c.seed = seed;
        c.check();
        const Curve curve = curve_from_array(target);
        std::vector<SynthesisOutcome> outcomes;
        {
          py::gil_scoped_release release;
          const Checkpoint ck = load_checkpoint(checkpoint);
          DiffusionSampler sampler(ck.model);
          outcomes = batch_generate(std::span<const Curve>(&curve, 1), sampler, c);
        }
        return outcome_to_dict(outcomes.front());
      },
      py::arg("target"), py::arg("checkpoint"), py::arg("strategy") = "node-retry", py::arg("k") = 25,
      py::arg("n_max") = kMaxNodes, py::arg("seed") = 0);

  m.def(
      "evaluate_json",
      [](const std::string& dataset, const std::string& checkpoint, const std::vector<std::string>& strategies,
         int runs, int n_eval, int k, std::uint64_t seed, int workers) {
        ExperimentConfig c;
        c.strategies.clear();
        for (const std::string& s : strategies) c.strategies.push_back(strategy_from(s));
        c.runs = runs;
        c.n_eval = n_eval;
        c.max_retries = k;
        c.seed = seed;
        c.workers = workers;
        c.check();
        std::string text;
        {
          py::gil_scoped_release release;
          std::vector<Curve> curves;
          for (DatasetRecord& r : split_dataset(load_dataset(dataset)).eval) curves.push_back(std::move(r.curve));
          const Checkpoint ck = load_checkpoint(checkpoint);
          DiffusionSampler sampler(ck.model, workers);
          text = report_to_json(run_experiment(curves, sampler, c, checkpoint)).dump();
        }
        return text;
      },
      py::arg("dataset"), py::arg("checkpoint"),
      py::arg("strategies") = std::vector<std::string>{"one-shot", "graph-retry", "node-retry"}, py::arg("runs") = 3,
      py::arg("n_eval") = 200, py::arg("k") = 25, py::arg("seed") = 0, py::arg("workers") = 1);
}
