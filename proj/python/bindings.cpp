// _core: the harness's main operations for Python. Structured results cross
// the boundary as JSON text; the package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "persona_harness/corpus.hpp"
#include "persona_harness/errors.hpp"
#include "persona_harness/identification_metrics.hpp"
#include "persona_harness/judge.hpp"
#include "persona_harness/overlap_metrics.hpp"
#include "persona_harness/pipeline.hpp"
#include "persona_harness/text.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json stage_json(const ph::StageResult& r) {
  return {{"stage", r.stage}, {"outputs", r.outputs}, {"problems", r.problems},
          {"notes", r.notes}, {"counts", r.counts},   {"text", r.text}};
}

ph::RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed,
                          std::optional<std::filesystem::path> out, const std::vector<std::string>& endpoints,
                          std::optional<bool> offline) {
  ph::RunOverrides ov;
  ov.seed = seed;
  ov.out_dir = std::move(out);
  for (const auto& e : endpoints) ov.endpoints.push_back(ph::parse_endpoint_override(e));
  ov.offline = offline;
  return ph::load_run_config(path, ov);
}

std::string run_stage(const std::string& stage, const ph::RunConfig& cfg, const std::vector<std::string>& disclosures,
                      std::optional<std::string> judge, std::optional<std::string> arm,
                      const std::vector<std::string>& slice) {
  ph::StageOptions opts;
  for (const auto& d : disclosures) {
    const auto v = ph::parse_disclosure(d);
    if (!v) throw ph::ConfigError("unknown disclosure '" + d + "'");
    opts.disclosures.push_back(*v);
  }
  opts.only_judge = std::move(judge);
  opts.only_arm = std::move(arm);
  opts.slice = slice;
  py::gil_scoped_release release;
  return stage_json(ph::run_stage(stage, cfg, opts)).dump();
}

std::string run_all(const ph::RunConfig& cfg) {
  std::vector<ph::StageResult> results;
  {
    py::gil_scoped_release release;
    results = ph::run_all(cfg);
  }
  json out = json::array();
  for (const auto& r : results) out.push_back(stage_json(r));
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Persona dialogue generation and author-identification harness (native core).";

  // Bases before derived types: translators are tried newest first.
  auto error = py::register_exception<ph::Error>(m, "HarnessError", PyExc_RuntimeError);
  py::register_exception<ph::SchemaError>(m, "SchemaError", error.ptr());
  py::register_exception<ph::ReferentialError>(m, "ReferentialError", error.ptr());
  auto config = py::register_exception<ph::ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ph::MissingArtifactError>(m, "MissingArtifactError", config.ptr());
  py::register_exception<ph::TransportError>(m, "TransportError", error.ptr());

  py::class_<ph::RunConfig>(m, "RunConfig")
      .def_readonly("seed", &ph::RunConfig::seed)
      .def_readonly("out_dir", &ph::RunConfig::out_dir)
      .def_readonly("offline", &ph::RunConfig::offline)
      .def("config_hash", &ph::RunConfig::config_hash)
      .def("effective_json", [](const ph::RunConfig& c) { return c.effective.dump(); });

  m.attr("STAGES") = ph::kStages;
  m.def("load_config", &load_config, py::arg("path"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
        py::arg("endpoints") = std::vector<std::string>{}, py::arg("offline") = py::none());
  m.def("run_stage", &run_stage, py::arg("stage"), py::arg("config"),
        py::arg("disclosures") = std::vector<std::string>{}, py::arg("judge") = py::none(),
        py::arg("arm") = py::none(), py::arg("slice") = std::vector<std::string>{});
  m.def("run_all", &run_all, py::arg("config"));

  m.def("tokens", [](const std::string& s) { return ph::text::alpha_tokens(s); }, py::arg("text"));
  m.def("porter_stem", [](const std::string& w) { return ph::text::porter_stem(w); }, py::arg("word"));
  m.def("bleu1", [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return ph::bleu1(c, r); },
        py::arg("candidate"), py::arg("reference"));
  m.def(
      "rouge1",
      [](const std::vector<std::string>& c, const std::vector<std::string>& r) {
        const auto x = ph::rouge1(c, r);
        return py::make_tuple(x.precision, x.recall, x.f1);
      },
      py::arg("candidate"), py::arg("reference"));
  m.def(
      "meteor_lite",
      [](const std::vector<std::string>& c, const std::vector<std::string>& r, bool stems) {
        ph::MeteorOptions o;
        o.stem_matching = stems;
        return ph::meteor_lite(c, r, o);
      },
      py::arg("candidate"), py::arg("reference"), py::arg("stem_matching") = true);

  m.def(
      "parse_guess",
      [](const std::string& reply) -> std::optional<std::string> {
        const auto g = ph::parse_guess(reply);
        if (!g) return std::nullopt;
        return std::string(1, *g);
      },
      py::arg("reply"));
  m.def(
      "macro_scores",
      [](const std::array<std::array<std::int64_t, 3>, 3>& counts) {
        ph::ConfusionMatrix cm;
        cm.counts = counts;
        const auto s = ph::macro_scores(cm);
        return py::dict(py::arg("accuracy") = s.accuracy, py::arg("precision") = s.precision,
                        py::arg("recall") = s.recall, py::arg("f1") = s.f1);
      },
      py::arg("counts"));

  m.def(
      "split_corpus",
      [](const std::filesystem::path& profiles, const std::filesystem::path& dialogues, std::uint64_t seed,
         std::array<double, 3> ratio) {
        const auto corpus = ph::load_corpus(profiles, dialogues);
        const auto s = ph::split_corpus(corpus, {ratio[0], ratio[1], ratio[2]}, seed);
        return json{{"train", s.train}, {"validation", s.validation}, {"test", s.test}}.dump();
      },
      py::arg("profiles"), py::arg("dialogues"), py::arg("seed"),
      py::arg("ratio") = std::array<double, 3>{0.8, 0.1, 0.1});
}
