#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lutkan/lutkan.hpp"

namespace py = pybind11;
using namespace lutkan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error(ErrorKind::input_shape, "expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

CompileConfig make_config(int lut_size, const std::string& quant, const std::string& boundary,
                          const std::string& oob, const std::string& value_repr) {
  CompileConfig c{lut_size, parse_quant_scheme(quant), parse_boundary_mode(boundary),
                  parse_oob_policy(oob), parse_value_repr(value_repr)};
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lookup-table compilation and inference for KAN classifiers";

  static py::exception<Error> error(m, "LutkanError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<ModelSpec>(m, "Model")
      .def_property_readonly("topology", &ModelSpec::topology)
      .def_property_readonly("edge_count", &ModelSpec::edge_count)
      .def_property_readonly("parameter_count", &ModelSpec::parameter_count)
      .def_readwrite("threshold", &ModelSpec::threshold)
      .def("to_json", [](const ModelSpec& s) { return model_to_json(s, 2); })
      .def("save", [](const ModelSpec& s, const std::string& path) { save_model(s, path); })
      .def("__eq__", [](const ModelSpec& a, const ModelSpec& b) { return a == b; });

  m.def("load_model", [](const std::string& path) { return load_model(path); }, py::arg("path"));
  m.def("model_from_json", &model_from_json, py::arg("text"));
  m.def(
      "synth_model",
      [](const std::vector<std::size_t>& topology, std::uint64_t seed) { return synth_model(topology, seed); },
      py::arg("topology"), py::arg("seed") = 0);
  m.def(
      "synth_dataset",
      [](const ModelSpec& model, std::size_t rows, std::uint64_t seed, double oob_fraction) {
        const auto d = synth_dataset(model, rows, seed, oob_fraction);
        py::array_t<double> x({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.width())});
        std::copy(d.features.data().begin(), d.features.data().end(), x.mutable_data());
        return py::make_tuple(x, py::array_t<int>(static_cast<py::ssize_t>(d.labels.size()), d.labels.data()));
      },
      py::arg("model"), py::arg("rows"), py::arg("seed") = 1, py::arg("oob_fraction") = 0.0);

  py::class_<CompiledModel>(m, "CompiledModel")
      .def_property_readonly("lut_size", [](const CompiledModel& c) { return c.config.lut_size; })
      .def_property_readonly("quant", [](const CompiledModel& c) { return std::string(to_string(c.config.quant)); })
      .def_property_readonly("boundary",
                             [](const CompiledModel& c) { return std::string(to_string(c.config.boundary)); })
      .def_property_readonly("oob", [](const CompiledModel& c) { return std::string(to_string(c.config.oob)); })
      .def_readwrite("threshold", &CompiledModel::threshold)
      .def("to_bytes",
           [](const CompiledModel& c) {
             const auto b = serialize(c);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def("save", [](const CompiledModel& c, const std::string& path) { save_compiled(c, path); })
      .def("memory", [](const CompiledModel& c) {
        const auto mem = measure_memory(c);
        py::dict d;
        d["tables"] = mem.tables;
        d["quant_params"] = mem.quant_params;
        d["scales"] = mem.scales;
        d["header"] = mem.header;
        d["total"] = mem.total;
        return d;
      });

  m.def(
      "compile",
      [](const ModelSpec& model, int lut_size, const std::string& quant, const std::string& boundary,
         const std::string& oob, const std::string& value_repr) {
        return compile(model, make_config(lut_size, quant, boundary, oob, value_repr));
      },
      py::arg("model"), py::arg("lut_size") = 8, py::arg("quant") = "sym_int8", py::arg("boundary") = "half_open",
      py::arg("oob") = "zero_spline", py::arg("value_repr") = "spline_component");
  m.def("load_compiled", [](const std::string& path) { return load_compiled(path); }, py::arg("path"));
  m.def(
      "from_bytes",
      [](const py::bytes& b) {
        const std::string s = b;
        return deserialize(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      },
      py::arg("data"));

  m.def(
      "forward_reference",
      [](const ModelSpec& model, const Array& x, int threads) {
        const auto batch = to_matrix(x);
        std::vector<double> p;
        {
          py::gil_scoped_release release;
          p = forward_reference(model, batch, threads);
        }
        return to_array(p);
      },
      py::arg("model"), py::arg("x"), py::arg("threads") = 1);
  m.def(
      "forward_lut",
      [](const CompiledModel& model, const Array& x, int threads) {
        const auto batch = to_matrix(x);
        LutResult r;
        {
          py::gil_scoped_release release;
          r = forward_lut(model, batch, threads);
        }
        py::dict stats;
        stats["total_inputs"] = r.stats.total_inputs;
        stats["oob_events"] = r.stats.oob_events;
        stats["clipped_events"] = r.stats.clipped_events;
        stats["hidden_oob_events"] = r.stats.hidden_oob_events;
        return py::make_tuple(to_array(r.probabilities), stats);
      },
      py::arg("model"), py::arg("x"), py::arg("threads") = 1);

  m.def(
      "roc_auc",
      [](const std::vector<int>& y, const std::vector<double>& s) { return roc_auc(y, s); }, py::arg("labels"),
      py::arg("scores"));
  m.def(
      "pr_auc",
      [](const std::vector<int>& y, const std::vector<double>& s) { return pr_auc(y, s); }, py::arg("labels"),
      py::arg("scores"));
  m.def(
      "evaluate",
      [](const std::vector<int>& y, const std::vector<double>& s, double threshold) {
        return report_to_json(evaluate_scores(y, s, threshold, std::vector<bool>(y.size(), false)));
      },
      py::arg("labels"), py::arg("scores"), py::arg("threshold") = 0.5);
}
