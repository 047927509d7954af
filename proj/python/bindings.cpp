#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ncevo/coverage.hpp"
#include "ncevo/data.hpp"
#include "ncevo/descriptor.hpp"
#include "ncevo/errors.hpp"
#include "ncevo/evolution.hpp"
#include "ncevo/experiment.hpp"
#include "ncevo/fitness.hpp"
#include "ncevo/nn.hpp"

namespace py = pybind11;
using namespace ncevo;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<int> to_labels_vector(const IntArray& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d label array");
  return std::vector<int>(a.data(), a.data() + a.shape(0));
}

std::vector<double> to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<int> to_numpy(const std::vector<int>& v) {
  py::array_t<int> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ActivationTrace to_trace(const DoubleArray& values, std::vector<std::size_t> widths) {
  return ActivationTrace::from_values(to_matrix(values), std::move(widths));
}

ActivationProfile to_profile(const DoubleArray& lower, const DoubleArray& upper) {
  return ActivationProfile{to_vector(lower), to_vector(upper), 0};
}

TrainConfig make_train(std::size_t epochs, std::size_t batch_size, double learning_rate, const std::string& optimizer) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.optimizer = parse_optimizer(optimizer);
  return cfg;
}

py::dict fitness_dict(const FitnessValue& v) {
  py::dict d;
  d["f"] = v.f;
  d["balanced_accuracy"] = v.balanced_accuracy;
  d["auxiliary"] = v.auxiliary;
  d["failed"] = v.failed;
  return d;
}

py::dict summary_dict(const SummaryRow& r) {
  py::dict d;
  d["dataset"] = r.dataset;
  d["q"] = r.q;
  d["strategy"] = r.strategy;
  d["repetitions"] = r.repetitions;
  d["mean_best_test_balanced_accuracy"] = r.mean_best_test_balanced_accuracy;
  d["max_test_balanced_accuracy"] = r.max_test_balanced_accuracy;
  d["mean_test_balanced_accuracy"] = r.mean_test_balanced_accuracy;
  return d;
}

#define TRAIN_ARGS                                                                                       \
  py::arg("epochs") = 50, py::arg("batch_size") = 10, py::arg("learning_rate") = 1e-3, \
      py::arg("optimizer") = "sgd"

}  // namespace

PYBIND11_MODULE(_ncevo, m) {
  m.doc() = "Coverage-guided neuroevolution of binary MLP classifiers";

  auto base = py::register_exception<Error>(m, "NcevoError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<ConstructionError>(m, "ConstructionError", base.ptr());

  // ---- descriptors ----
  py::class_<NetworkDescriptor>(m, "Descriptor")
      .def(py::init([](std::vector<std::size_t> widths, const std::string& activation, const std::string& init,
                       bool dropout, bool batch_norm) {
             return NetworkDescriptor::uniform(std::move(widths), parse_activation(activation),
                                               parse_initializer(init), dropout, batch_norm);
           }),
           py::arg("widths"), py::arg("activation") = "relu", py::arg("initializer") = "xavier",
           py::arg("dropout") = false, py::arg("batch_norm") = false)
      .def_static("from_text", [](const std::string& s) { return from_text(s); })
      .def("to_text", [](const NetworkDescriptor& d) { return to_text(d); })
      .def_property_readonly("widths", [](const NetworkDescriptor& d) { return d.hidden_widths; })
      .def_property_readonly("activations",
                             [](const NetworkDescriptor& d) {
                               std::vector<std::string> out;
                               for (auto a : d.activations) out.emplace_back(to_string(a));
                               return out;
                             })
      .def_property_readonly("initializers",
                             [](const NetworkDescriptor& d) {
                               std::vector<std::string> out;
                               for (auto i : d.initializers) out.emplace_back(to_string(i));
                               return out;
                             })
      .def_property_readonly("dropout", [](const NetworkDescriptor& d) { return d.dropout; })
      .def_property_readonly("batch_norm", [](const NetworkDescriptor& d) { return d.batch_norm; })
      .def_property_readonly("depth", &NetworkDescriptor::depth)
      .def_property_readonly("neuron_count", &NetworkDescriptor::neuron_count)
      .def("__eq__", [](const NetworkDescriptor& a, const NetworkDescriptor& b) { return a == b; })
      .def("__repr__", [](const NetworkDescriptor& d) { return "Descriptor('" + to_text(d) + "')"; });

  m.def(
      "random_descriptor",
      [](std::size_t max_depth, std::size_t max_width, std::uint64_t seed) {
        Rng rng(seed);
        return random_descriptor({max_depth, max_width}, rng);
      },
      py::arg("max_depth") = 8, py::arg("max_width") = 8, py::arg("seed") = 0);
  m.def(
      "validate",
      [](const NetworkDescriptor& d, std::size_t max_depth, std::size_t max_width) {
        return validate(d, {max_depth, max_width});
      },
      py::arg("descriptor"), py::arg("max_depth") = 8, py::arg("max_width") = 8);
  m.def(
      "mutate",
      [](const NetworkDescriptor& d, std::uint64_t seed, std::size_t max_depth, std::size_t max_width) {
        Rng rng(seed);
        const auto mut = mutate(d, {max_depth, max_width}, rng);
        return py::make_tuple(mut.descriptor, std::string(to_string(mut.op)));
      },
      py::arg("descriptor"), py::arg("seed"), py::arg("max_depth") = 8, py::arg("max_width") = 8);

  // ---- networks ----
  py::class_<Network>(m, "Network")
      .def_property_readonly("input_dim", &Network::input_dim)
      .def_property_readonly("hidden_layer_count", &Network::hidden_layer_count)
      .def("weights_text", [](const Network& n) {
        std::ostringstream os;
        write_weights(os, n);
        return os.str();
      });

  m.def(
      "build_network",
      [](const NetworkDescriptor& d, std::size_t input_dim, std::uint64_t seed) {
        return build_network(d, input_dim, seed);
      },
      py::arg("descriptor"), py::arg("input_dim"), py::arg("seed") = 0);
  m.def(
      "predict_proba", [](const Network& n, const DoubleArray& x) { return to_numpy(predict_proba(n, to_matrix(x))); },
      py::arg("network"), py::arg("features"));
  m.def(
      "trace",
      [](const Network& n, const DoubleArray& x) {
        const auto r = forward(n, to_matrix(x), true);
        return py::make_tuple(to_numpy(r.trace->values), r.trace->layer_widths);
      },
      py::arg("network"), py::arg("features"), "Hidden activations (instances x neurons) and per-layer widths.");
  m.def(
      "train",
      [](const Network& n, const DoubleArray& x, const IntArray& y, std::size_t epochs, std::size_t batch_size,
         double learning_rate, const std::string& optimizer, std::uint64_t seed) {
        auto cfg = make_train(epochs, batch_size, learning_rate, optimizer);
        cfg.seed = seed;
        const auto labels = to_labels_vector(y);
        py::gil_scoped_release release;
        return train(n, to_matrix(x), labels, cfg);
      },
      py::arg("network"), py::arg("features"), py::arg("labels"), TRAIN_ARGS, py::arg("seed") = 0);

  // ---- coverage ----
  m.def(
      "profile_bounds",
      [](const DoubleArray& values) {
        const auto p = profile_bounds(to_trace(values, {static_cast<std::size_t>(values.shape(1))}));
        return py::make_tuple(to_numpy(p.lower), to_numpy(p.upper));
      },
      py::arg("values"));
  m.def(
      "nc", [](const DoubleArray& v, std::vector<std::size_t> w, double t) { return nc(to_trace(v, std::move(w)), t); },
      py::arg("values"), py::arg("widths"), py::arg("threshold") = 0.0);
  m.def(
      "tknc",
      [](const DoubleArray& v, std::vector<std::size_t> w, std::size_t k) { return tknc(to_trace(v, std::move(w)), k); },
      py::arg("values"), py::arg("widths"), py::arg("k") = 1);
  m.def(
      "kmn",
      [](const DoubleArray& v, std::vector<std::size_t> w, const DoubleArray& lo, const DoubleArray& hi,
         std::size_t k) { return kmn(to_trace(v, std::move(w)), to_profile(lo, hi), k); },
      py::arg("values"), py::arg("widths"), py::arg("lower"), py::arg("upper"), py::arg("sections") = 100);
  m.def(
      "nbc",
      [](const DoubleArray& v, std::vector<std::size_t> w, const DoubleArray& lo, const DoubleArray& hi) {
        return nbc(to_trace(v, std::move(w)), to_profile(lo, hi));
      },
      py::arg("values"), py::arg("widths"), py::arg("lower"), py::arg("upper"));
  m.def(
      "snac",
      [](const DoubleArray& v, std::vector<std::size_t> w, const DoubleArray& lo, const DoubleArray& hi) {
        return snac(to_trace(v, std::move(w)), to_profile(lo, hi));
      },
      py::arg("values"), py::arg("widths"), py::arg("lower"), py::arg("upper"));

  // ---- scoring ----
  m.def(
      "balanced_accuracy",
      [](const IntArray& p, const IntArray& t) { return balanced_accuracy(to_labels_vector(p), to_labels_vector(t)); },
      py::arg("predicted"), py::arg("truth"));
  m.def(
      "cert", [](const DoubleArray& p) { return cert(to_vector(p)); }, py::arg("probabilities"));
  m.def("blend", &blend, py::arg("q"), py::arg("auxiliary"), py::arg("balanced_accuracy"));

  // ---- data ----
  py::class_<Dataset>(m, "Dataset")
      .def_readonly("name", &Dataset::name)
      .def_readonly("feature_names", &Dataset::feature_names)
      .def_readonly("dropped_rows", &Dataset::dropped_rows)
      .def_property_readonly("features", [](const Dataset& d) { return to_numpy(d.features); })
      .def_property_readonly("labels", [](const Dataset& d) { return to_numpy(d.labels); });
  m.def(
      "load_pmlb", [](const std::filesystem::path& p) { return load_pmlb(p); }, py::arg("path"));
  m.def(
      "find_dataset",
      [](const std::string& name, std::vector<std::filesystem::path> dirs) { return find_dataset(name, dirs); },
      py::arg("name"), py::arg("dirs"));

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("q", &DatasetSplit::q)
      .def_property_readonly("train_labeled_features",
                             [](const DatasetSplit& s) { return to_numpy(s.train_labeled.features); })
      .def_property_readonly("train_labeled_labels",
                             [](const DatasetSplit& s) { return to_numpy(s.train_labeled.labels); })
      .def_property_readonly("train_unlabeled", [](const DatasetSplit& s) { return to_numpy(s.train_unlabeled); })
      .def_property_readonly("val_features", [](const DatasetSplit& s) { return to_numpy(s.val.features); })
      .def_property_readonly("val_labels", [](const DatasetSplit& s) { return to_numpy(s.val.labels); })
      .def("test", [](const DatasetSplit& s) {
        const auto& t = s.test();
        return py::make_tuple(to_numpy(t.features), to_numpy(t.labels));
      })
      .def_property_readonly("test_reads", &DatasetSplit::test_reads);
  m.def(
      "make_split",
      [](const Dataset& d, double q, std::uint64_t split_seed, std::uint64_t mask_seed) {
        return make_split(d, q, {}, split_seed, mask_seed);
      },
      py::arg("dataset"), py::arg("q"), py::arg("split_seed") = 0, py::arg("mask_seed") = 1);

  // ---- fitness and search ----
  m.def(
      "evaluate_fitness",
      [](const std::string& strategy, const NetworkDescriptor& d, const DatasetSplit& s, std::uint64_t seed,
         std::size_t epochs, std::size_t batch_size, double learning_rate, const std::string& optimizer) {
        const auto spec = FitnessSpec::parse(strategy);
        const auto cfg = make_train(epochs, batch_size, learning_rate, optimizer);
        FitnessValue v;
        {
          py::gil_scoped_release release;
          v = evaluate_fitness(spec, d, s, cfg, seed);
        }
        return fitness_dict(v);
      },
      py::arg("strategy"), py::arg("descriptor"), py::arg("split"), py::arg("seed") = 0, TRAIN_ARGS);

  m.def(
      "evolve",
      [](const std::function<double(const NetworkDescriptor&, std::uint64_t)>& fitness, std::size_t population,
         std::size_t generations, std::uint64_t seed, std::size_t max_depth, std::size_t max_width) {
        GAConfig cfg;
        cfg.population_size = population;
        cfg.generations = generations;
        cfg.global_seed = seed;
        cfg.constraints = {max_depth, max_width};
        const auto r = evolve(cfg, [&](const NetworkDescriptor& d, std::uint64_t s) {
          const double f = fitness(d, s);
          return FitnessValue{f, f, 0.0, false};
        });
        py::list final_population;
        for (const auto& ind : r.final_population())
          final_population.append(py::make_tuple(ind.descriptor, ind.fitness->f));
        py::dict out;
        out["best_fitness"] = r.best_fitness;
        out["evaluations"] = r.evaluations();
        out["final_population"] = final_population;
        return out;
      },
      py::arg("fitness"), py::arg("population") = 20, py::arg("generations") = 30, py::arg("seed") = 0,
      py::arg("max_depth") = 8, py::arg("max_width") = 8,
      "Runs the GA with a Python fitness callable taking (descriptor, seed).");

  // ---- experiments ----
  m.def(
      "run_experiment",
      [](const std::string& config_text, std::optional<std::filesystem::path> output) {
        auto cfg = parse_config(config_text);
        if (output) cfg.output_dir = *output;
        ExperimentOutcome o;
        {
          py::gil_scoped_release release;
          o = run_experiment(cfg);
        }
        py::dict d;
        d["output_dir"] = o.output_dir;
        d["cells"] = o.cells.size();
        d["failed_cells"] = o.failed_cells;
        return d;
      },
      py::arg("config_text"), py::arg("output") = py::none(),
      "Runs the grid described by INI text; returns counts and the output directory.");
  m.def(
      "summarize",
      [](const std::filesystem::path& dir) {
        py::list rows;
        for (const auto& r : summarize(dir)) rows.append(summary_dict(r));
        return rows;
      },
      py::arg("results_dir"));
}
