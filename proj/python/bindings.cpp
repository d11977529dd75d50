#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "memadapter/cli.hpp"
#include "memadapter/contrastive.hpp"
#include "memadapter/corpus.hpp"
#include "memadapter/error.hpp"
#include "memadapter/fusion.hpp"
#include "memadapter/graph.hpp"
#include "memadapter/metrics.hpp"

namespace py = pybind11;
using namespace memadapter;

namespace {

std::vector<std::pair<std::string, std::string>> violations(const std::string& sub,
                                                            const std::string& full) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Violation& v : verify_subset(parse_evidence(sub), parse_full_graph(full)).violations) {
    out.emplace_back(std::string(to_string(v.kind)), v.element);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_memadapter, m) {
  m.doc() = "Memory-graph retrieval engine core";

  auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ParseError>(m, "ParseError", validation.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", validation.ptr());

  m.def("canonical_full_graph", [](const std::string& text) { return emit(parse_full_graph(text), EmitMode::full); },
        "Parse a full-graph document and return its canonical text.");
  m.def("canonical_evidence", [](const std::string& text) { return emit(parse_evidence(text)); },
        "Parse an evidence document and return its canonical text.");
  m.def("evidence_confidence", [](const std::string& text) { return parse_evidence(text).confidence; });
  m.def("verify_subset", &violations, py::arg("evidence"), py::arg("full_graph"),
        "Violations of an evidence document against a full graph as (kind, line) pairs.");

  m.def("normalize_answer", &normalize_answer);
  m.def("exact_match", &exact_match, py::arg("prediction"), py::arg("golds"));
  m.def("token_f1", &token_f1, py::arg("prediction"), py::arg("golds"));
  m.def("rouge1", &rouge1, py::arg("prediction"), py::arg("golds"));
  m.def("contains_answer", &contains_answer, py::arg("text"), py::arg("answer"));

  m.def("cosine_sim", &cosine_sim);
  m.def(
      "infonce_loss",
      [](const Vec& h_a, const Vec& h_t, const std::vector<Vec>& negatives, double tau) {
        const InfoNceResult r = infonce_loss(h_a, h_t, negatives, tau);
        return py::make_tuple(r.loss, r.grad_h_t);
      },
      py::arg("h_a"), py::arg("h_t"), py::arg("negatives"), py::arg("tau"),
      "Loss and its gradient with respect to h_t.");
  m.def("fuse_max", [](const std::vector<Vec>& vectors) { return fuse_max(vectors).values; });

  m.def(
      "generate_corpus_jsonl",
      [](std::size_t n, std::uint64_t seed) { return corpus_to_jsonl(generate_synthetic_corpus(n, seed)); },
      py::arg("n"), py::arg("seed") = 42);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit code, stdout, stderr).");
}
