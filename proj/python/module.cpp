// Python bindings for the simulation core. The module mirrors the CLI
// surface: compressor primitives, full experiment runs from config text, and
// the discrepancy simulation.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fedef/compressors.hpp"
#include "fedef/config.hpp"
#include "fedef/errors.hpp"
#include "fedef/federation_engine.hpp"
#include "fedef/metrics.hpp"

namespace py = pybind11;
using namespace fedef;

namespace {

LayoutPtr layout_from(const std::vector<std::size_t>& groups) {
  return make_layout(groups);
}

ParamVector vector_from(const std::vector<double>& values,
                        const std::vector<std::size_t>& groups) {
  return ParamVector(layout_from(groups), values);
}

std::vector<double> py_compress(const std::string& spec,
                                const std::vector<double>& values,
                                const std::vector<std::size_t>& groups,
                                std::uint64_t seed) {
  RngStream rng(seed);
  ParamVector back = materialize(
      compress(parse_compressor_spec(spec), vector_from(values, groups), rng));
  return {back.values().begin(), back.values().end()};
}

std::int64_t py_bit_cost(const std::string& spec,
                         const std::vector<double>& values,
                         const std::vector<std::size_t>& groups,
                         std::uint64_t seed) {
  RngStream rng(seed);
  return compress(parse_compressor_spec(spec), vector_from(values, groups), rng)
      .bit_cost();
}

double py_measure_deviation(const std::string& spec,
                            const std::vector<double>& values,
                            const std::vector<std::size_t>& groups,
                            std::uint64_t seed) {
  RngStream rng(seed);
  return measure_deviation(parse_compressor_spec(spec),
                           vector_from(values, groups), rng);
}

std::optional<double> py_deviation_bound(const std::string& spec,
                                         const std::vector<std::size_t>& groups) {
  return deviation_bound(parse_compressor_spec(spec), GroupLayout(groups));
}

py::dict record_dict(const RoundRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["grad_norm_sq"] = r.grad_norm_sq;
  d["train_loss"] = r.train_loss;
  d["bits_up_cum"] = r.bits_up_cum;
  d["bits_down_cum"] = r.bits_down_cum;
  d["q_a_sq"] = r.q_a_sq ? py::object(py::float_(*r.q_a_sq))
                         : py::object(py::none());
  d["participants"] = r.participants;
  d["restarts"] = r.restarts;
  return d;
}

py::dict py_run_experiment(const std::string& config_text) {
  ExperimentConfig cfg = parse_config_text(config_text);
  RunConfig rc = to_run_config(cfg);
  Problem problem = build_problem(cfg);
  RunSummary summary;
  std::vector<RoundRecord> records =
      run_experiment(std::move(problem), rc, &summary);

  py::list rows;
  for (const RoundRecord& r : records) rows.append(record_dict(r));
  py::dict out;
  out["records"] = rows;
  out["csv"] = render_csv(records);
  out["rounds"] = summary.rounds;
  out["final_grad_norm_sq"] = summary.final_grad_norm_sq;
  out["final_train_loss"] = summary.final_train_loss;
  out["bits_up_cum"] = summary.bits_up_cum;
  out["bits_down_cum"] = summary.bits_down_cum;
  out["restarts_total"] = summary.restarts_total;
  if (summary.virtual_iterate_monitored) {
    out["max_virtual_iterate_rel_err"] = summary.max_virtual_iterate_rel_err;
  }
  return out;
}

py::dict py_measure_qa(const std::string& dist, double s,
                       const std::string& spec_text, int trials, std::size_t n,
                       std::size_t d, double scale_param, std::uint64_t seed) {
  if (trials < 1) throw config_error("measure_qa: trials must be >= 1");
  SynthDist sd;
  if (dist == "gaussian") {
    sd = SynthDist::Gaussian;
  } else if (dist == "laplace") {
    sd = SynthDist::Laplace;
  } else {
    throw config_error("measure_qa: dist must be gaussian or laplace");
  }
  CompressorSpec spec = parse_compressor_spec(spec_text);
  RngStream rng(seed);
  double acc = 0.0, worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto grads = synth_client_gradients(sd, scale_param, n, d, s, rng);
    double q = measure_q_a(grads, spec, rng);
    acc += q;
    worst = std::max(worst, q);
  }
  py::dict out;
  out["mean_q_a_sq"] = acc / trials;
  out["max_q_a_sq"] = worst;
  auto bound = deviation_bound(spec, GroupLayout({d}));
  out["q_c_sq"] = bound ? py::object(py::float_(*bound))
                        : py::object(py::none());
  return out;
}

}  // namespace

PYBIND11_MODULE(fedef, m) {
  m.doc() = "compressed federated optimization simulator with error feedback";

  py::register_exception<config_error>(m, "ConfigError");
  py::register_exception<numeric_error>(m, "NumericError");
  py::register_exception<divergence_error>(m, "DivergenceError");

  m.def("compress", &py_compress, py::arg("spec"), py::arg("values"),
        py::arg("groups"), py::arg("seed") = 0,
        "Compress and materialize a grouped vector; spec like 'topk:0.1'.");
  m.def("bit_cost", &py_bit_cost, py::arg("spec"), py::arg("values"),
        py::arg("groups"), py::arg("seed") = 0);
  m.def("measure_deviation", &py_measure_deviation, py::arg("spec"),
        py::arg("values"), py::arg("groups"), py::arg("seed") = 0);
  m.def("deviation_bound", &py_deviation_bound, py::arg("spec"),
        py::arg("groups"));
  m.def("run_experiment", &py_run_experiment, py::arg("config_text"),
        "Run a full experiment from config text; returns records and summary.");
  m.def("measure_qa", &py_measure_qa, py::arg("dist"), py::arg("s"),
        py::arg("spec"), py::arg("trials") = 1000, py::arg("n") = 5,
        py::arg("d") = 1100, py::arg("scale_param") = 0.01,
        py::arg("seed") = 42);
  m.def("default_config", [] { return serialize_config(ExperimentConfig{}); });
}
