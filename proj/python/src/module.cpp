#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "coldgen/harness.hpp"

namespace py = pybind11;
using namespace coldgen;
using json = nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
json parse(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

RankedList ranked_from(const std::vector<ItemId>& items) {
  RankedList r;
  double lp = 0.0;
  for (const auto& i : items) r.entries.push_back({i, lp -= 1.0});
  return r;
}

Stage stage_from(const std::string& name) {
  for (Stage s : {Stage::kIngest, Stage::kSplit, Stage::kEncode, Stage::kTrain, Stage::kEval}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown stage '" + name + "'");
}

std::string run(const std::string& config, const std::string& root, bool force, const std::string& until) {
  const auto cfg = experiment_config_from_json(parse(config));
  ExperimentResult r;
  {
    py::gil_scoped_release release;
    r = run_experiment(cfg, {.root = root, .until = stage_from(until), .force = force});
  }
  json reports = json::array();
  for (const auto& rep : r.reports) reports.push_back(report_to_json(rep));
  return json{{"run_dir", r.run_dir.string()}, {"config_digest", r.config_digest}, {"reports", reports}}.dump();
}

}  // namespace

PYBIND11_MODULE(_coldgen, m) {
  m.doc() = "coldgen core bindings";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", error.ptr());

  m.def("recall_at_k", [](const std::vector<ItemId>& ranked, const ItemId& target, int k) {
    return recall_at_k(ranked_from(ranked), target, k);
  });
  m.def("ndcg_at_k", [](const std::vector<ItemId>& ranked, const ItemId& target, int k) {
    return ndcg_at_k(ranked_from(ranked), target, k);
  });
  m.def("paired_t_test", [](const std::vector<double>& a, const std::vector<double>& b) {
    auto r = paired_t_test(a, b);
    return py::dict(py::arg("t") = r.t, py::arg("p") = r.p, py::arg("df") = r.df, py::arg("mean_diff") = r.mean_diff);
  });

  m.def(
      "lloyd_kmeans",
      [](const Matrix& points, int k, std::uint64_t seed, int max_iter, double tol) {
        auto r = lloyd_kmeans(points, k, seed, {.max_iter = max_iter, .tol = tol});
        return py::dict(py::arg("centroids") = r.centroids, py::arg("assignments") = r.assignments,
                        py::arg("objective") = r.objective, py::arg("objective_trace") = r.objective_trace);
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 50, py::arg("tol") = 1e-6);

  py::class_<Codebook>(m, "Codebook")
      .def_property_readonly("kind", [](const Codebook& c) { return to_string(c.kind); })
      .def_readonly("dim", &Codebook::dim)
      .def_readonly("levels", &Codebook::levels)
      .def_readonly("codes_per_level", &Codebook::codes_per_level)
      .def_readonly("rotation", &Codebook::rotation)
      .def_readonly("distortion_trace", &Codebook::distortion_trace)
      .def_readonly("orthogonality_trace", &Codebook::orthogonality_trace)
      .def("quantize", [](const Codebook& c, const Vector& v) { return quantize(c, v); })
      .def("reconstruct", [](const Codebook& c, const std::vector<int>& codes) { return reconstruct(c, codes); })
      .def("node_sizes", [](const Codebook& c) { return bkm_node_sizes(c); })
      .def("digest", [](const Codebook& c) { return codebook_digest(c); })
      .def("to_json", [](const Codebook& c) { return codebook_to_json(c).dump(); });
  m.def("codebook_from_json", [](const std::string& text) { return codebook_from_json(json::parse(text)); });
  m.def("train_rq", [](const Matrix& x, int levels, int k, std::uint64_t seed) { return train_rq(x, levels, k, seed); },
        py::arg("embeddings"), py::arg("levels"), py::arg("k"), py::arg("seed") = 0);
  m.def("train_bkm", [](const Matrix& x, int depth, int k, std::uint64_t seed) { return train_bkm(x, depth, k, seed); },
        py::arg("embeddings"), py::arg("depth"), py::arg("k"), py::arg("seed") = 0);
  m.def(
      "train_opq",
      [](const Matrix& x, int subspaces, int k, std::uint64_t seed, int outer_iters) {
        return train_opq(x, subspaces, k, seed, outer_iters);
      },
      py::arg("embeddings"), py::arg("subspaces"), py::arg("k"), py::arg("seed") = 0, py::arg("outer_iters") = 8);

  m.def("default_config_json", [] { return to_json(ExperimentConfig{}).dump(); });
  m.def("normalize_config_json", [](const std::string& text) {
    auto c = experiment_config_from_json(parse(text));
    validate(c);
    return to_json(c).dump();
  });
  m.def("config_digest", [](const std::string& text) { return config_digest(experiment_config_from_json(parse(text))); });
  m.def("run_root", [] { return run_root(); });
  m.def("run_experiment", &run, py::arg("config"), py::arg("root") = "", py::arg("force") = false,
        py::arg("until") = "eval");
  m.def("synthesize", [](const std::string& text) {
    auto corpus = generate_synthetic(synth_config_from_json(parse(text)));
    return py::make_tuple(format_interactions(corpus.log), format_item_metadata(corpus.catalog));
  });
}
