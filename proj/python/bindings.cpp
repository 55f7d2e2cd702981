#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "contrastlab/augmentation.hpp"
#include "contrastlab/config.hpp"
#include "contrastlab/detector.hpp"
#include "contrastlab/errors.hpp"
#include "contrastlab/loss.hpp"
#include "contrastlab/telemetry.hpp"
#include "contrastlab/trainer.hpp"

namespace py = pybind11;
using namespace contrastlab;

namespace {

py::dict as_dict(const LossDecomposition& d) {
  py::dict out;
  out["total"] = d.total;
  out["positive_term"] = d.positive_term;
  out["negative_term"] = d.negative_term;
  return out;
}

py::array_t<double> as_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Tensor as_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Tensor::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

ExperimentConfig parse_config(const std::string& text) { return config_from_json(Json::parse(text, nullptr, true, true)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "NT-Xent loss decomposition, onset detection and tiny-mode training";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataIntegrityError>(m, "DataIntegrityError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  m.def("cosine_similarity", [](std::vector<double> u, std::vector<double> v) { return cosine_similarity(u, v); },
        py::arg("u"), py::arg("v"));
  m.def("similarity_matrix", [](const Matrix& z) { return similarity_matrix(EmbeddingBatch(z)); }, py::arg("z"));
  m.def(
      "ntxent_pair_loss",
      [](Index i, Index j, const Matrix& z, double temperature) {
        const EmbeddingBatch batch(z);
        if (i < 0 || j < 0 || i >= batch.rows() || j >= batch.rows()) throw InvalidArgument("row index out of range");
        return ntxent_pair_loss(i, j, similarity_matrix(batch), LossConfig{temperature});
      },
      py::arg("i"), py::arg("j"), py::arg("z"), py::arg("temperature") = 0.5);
  m.def(
      "ntxent_batch_loss",
      [](const Matrix& z, double temperature) { return ntxent_batch_loss(EmbeddingBatch(z), LossConfig{temperature}); },
      py::arg("z"), py::arg("temperature") = 0.5, "Mean loss over the 2N ordered positive pairs; pairs are rows (2k, 2k+1).");
  m.def(
      "decompose_loss",
      [](const Matrix& z, double temperature) {
        return as_dict(decompose_loss(EmbeddingBatch(z), LossConfig{temperature}));
      },
      py::arg("z"), py::arg("temperature") = 0.5);
  m.def(
      "ntxent_loss_with_gradient",
      [](const Matrix& z, double temperature) {
        auto r = ntxent_loss_with_gradient(EmbeddingBatch(z), LossConfig{temperature});
        return py::make_tuple(as_dict(r.loss), r.gradient);
      },
      py::arg("z"), py::arg("temperature") = 0.5);

  m.def(
      "make_views",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, std::uint64_t seed,
         const std::string& config_json) {
        AugmentationConfig cfg;
        if (!config_json.empty()) cfg = parse_config(config_json).augmentation;
        const ViewPair v = make_views(as_tensor(image), cfg, seed);
        return py::make_tuple(as_array(v.view_a), as_array(v.view_b));
      },
      py::arg("image"), py::arg("seed"), py::arg("config_json") = "");

  py::class_<OnsetReport>(m, "OnsetReport")
      .def_readonly("series_name", &OnsetReport::series_name)
      .def_readonly("onset_epoch", &OnsetReport::onset_epoch)
      .def_readonly("fired_epoch", &OnsetReport::fired_epoch)
      .def_readonly("minimum_value", &OnsetReport::minimum_value)
      .def_readonly("min_delta", &OnsetReport::min_delta)
      .def_property_readonly("fired", &OnsetReport::fired)
      .def("__repr__", [](const OnsetReport& r) { return "OnsetReport(" + to_json(r).dump() + ")"; });

  m.def(
      "detect_onset",
      [](const std::vector<int>& epochs, const std::vector<double>& values, std::size_t smoothing_window,
         std::optional<double> min_delta, double min_delta_fraction, std::size_t patience, std::size_t warmup,
         std::string name) {
        if (epochs.size() != values.size()) throw InvalidArgument("epochs and values differ in length");
        Series s;
        for (std::size_t i = 0; i < epochs.size(); ++i) s.push_back({epochs[i], values[i]});
        DetectorConfig cfg;
        cfg.smoothing_window = smoothing_window;
        cfg.min_delta = min_delta;
        cfg.min_delta_fraction = min_delta_fraction;
        cfg.patience = patience;
        cfg.warmup = warmup;
        return detect_onset(s, cfg, std::move(name));
      },
      py::arg("epochs"), py::arg("values"), py::arg("smoothing_window") = 11, py::arg("min_delta") = py::none(),
      py::arg("min_delta_fraction") = 0.01, py::arg("patience") = 25, py::arg("warmup") = 20, py::arg("name") = "");
  m.def(
      "compare_onsets",
      [](const OnsetReport& pos, const OnsetReport& total) { return std::string(order_name(compare_onsets(pos, total))); },
      py::arg("positive"), py::arg("total"));

  m.def(
      "read_series",
      [](const std::string& path, const std::string& split, const std::string& column) {
        std::vector<std::pair<int, double>> out;
        for (const auto& p : read_series(path, parse_split(split), parse_column(column))) out.emplace_back(p.epoch, p.value);
        return out;
      },
      py::arg("path"), py::arg("split") = "val", py::arg("column") = "positive_term");

  m.def("default_config_json", [](const std::string& preset) {
    if (preset == "tiny") return to_json(ExperimentConfig::tiny()).dump();
    if (preset == "cifar10") return to_json(ExperimentConfig{}).dump();
    throw InvalidArgument("preset must be 'tiny' or 'cifar10'");
  }, py::arg("preset") = "tiny");
  m.def("validation_errors", [](const std::string& config_json) { return validation_errors(parse_config(config_json)); },
        py::arg("config_json"));
  m.def(
      "run_json",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = parse_config(config_json);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run(cfg);
        }
        py::dict out;
        out["final_epoch"] = r.final_epoch;
        out["stop_reason"] = r.stop_reason;
        out["manifest_path"] = r.manifest_path;
        out["metrics_path"] = r.metrics_path;
        out["checkpoint_paths"] = r.checkpoint_paths;
        out["positive_onset"] = r.positive_onset;
        out["total_onset"] = r.total_onset;
        out["verdict"] = std::string(order_name(compare_onsets(r.positive_onset, r.total_onset)));
        return out;
      },
      py::arg("config_json"), "Runs an experiment from a JSON config document and returns its summary.");
}
