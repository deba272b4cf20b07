#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "kinject/config.hpp"
#include "kinject/encoding.hpp"
#include "kinject/error.hpp"
#include "kinject/kg_store.hpp"
#include "kinject/matcher.hpp"
#include "kinject/pipeline.hpp"
#include "kinject/synthetic.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace kinject;

namespace {

ConfigMap make_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  ConfigMap map = path ? ConfigMap::load(*path) : ConfigMap();
  for (const auto& o : overrides) map.apply_override(o);
  return map;
}

py::dict report_dict(const StageReport& r) {
  py::dict d;
  d["stage"] = r.stage;
  d["fingerprint"] = r.fingerprint;
  d["checkpoint"] = r.checkpoint;
  d["best_step"] = r.best_step;
  d["dev_accuracy"] = r.dev_accuracy;
  d["test_accuracy"] = r.test_accuracy;
  d["initial_eval_loss"] = r.initial_eval_loss;
  d["final_eval_loss"] = r.final_eval_loss;
  d["loss_curve"] = r.loss_curve;
  d["seconds"] = r.seconds;
  return d;
}

// Owns the config its lookups are parameterized by.
struct PyKnowledgeBase {
  RunConfig config;
  KnowledgeBase kb;

  explicit PyKnowledgeBase(const ConfigMap& map)
      : config(make_run_config(map)), kb(load_knowledge(config)) {}

  MatchedSentence lookup(const std::string& text) const {
    return kb.lookup(text, config.max_ngram, config.per_subject_cap, config.per_sentence_cap);
  }

  py::dict match(const std::string& text) const {
    const auto m = lookup(text);
    py::list matches, facts;
    for (const auto& s : m.result.matches)
      matches.append(py::make_tuple(s.index, kb.triples.subject_key(s.subject)));
    for (const auto& f : m.result.facts)
      facts.append(py::make_tuple(f.index, join_words(f.triple.subject), join_words(f.triple.predicate),
                                  join_words(f.triple.object)));
    py::dict d;
    d["sentence"] = m.sentence.surfaces();
    d["matches"] = matches;
    d["facts"] = facts;
    return d;
  }

  py::dict encode(const std::string& text) const {
    const auto m = lookup(text);
    const auto seq = splice(m.sentence, m.result.facts, config.max_seq_len);
    std::vector<std::string> tokens, origins;
    std::vector<std::size_t> alphas, betas;
    for (const auto& t : seq.tokens) {
      tokens.push_back(t.text);
      origins.emplace_back(to_string(t.origin));
      alphas.push_back(t.alpha);
      betas.push_back(t.beta);
    }
    py::dict d;
    d["sentence_len"] = seq.sentence_len;
    d["tokens"] = tokens;
    d["alphas"] = alphas;
    d["betas"] = betas;
    d["origins"] = origins;
    return d;
  }

  static std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge-injection pipeline bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<UsageError>(m, "UsageError", base);
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base);

  py::class_<ConfigMap>(m, "Config")
      .def(py::init(&make_config), py::arg("path") = py::none(),
           py::arg("overrides") = std::vector<std::string>{})
      .def("set", &ConfigMap::set)
      .def("get", &ConfigMap::get)
      .def("apply_override", &ConfigMap::apply_override)
      .def("serialize", &ConfigMap::serialize)
      .def("fingerprint", &ConfigMap::fingerprint)
      .def("validate", [](const ConfigMap& c) { make_run_config(c); })
      .def("values", &ConfigMap::values)
      .def("__repr__", [](const ConfigMap& c) { return "<kinject.Config " + c.fingerprint() + ">"; });

  m.def("tokenize", [](const std::string& text) { return tokenize(text).surfaces(); }, py::arg("text"));
  m.def("position_code", &position_code, py::arg("alpha"), py::arg("beta"), py::arg("d_model"));

  py::class_<PyKnowledgeBase>(m, "KnowledgeBase")
      .def(py::init<const ConfigMap&>(), py::arg("config"))
      .def_property_readonly("triple_count", [](const PyKnowledgeBase& k) { return k.kb.triples.size(); })
      .def_property_readonly("surface_count", [](const PyKnowledgeBase& k) { return k.kb.dict.size(); })
      .def_property_readonly("warnings", [](const PyKnowledgeBase& k) { return k.kb.warnings; })
      .def("match", &PyKnowledgeBase::match, py::arg("text"))
      .def("encode", &PyKnowledgeBase::encode, py::arg("text"));

  using Checkpoint = std::optional<fs::path>;
  const auto release = py::call_guard<py::gil_scoped_release>();
  m.def("pretrain", [](const ConfigMap& c) { return stage1_pretrain(make_run_config(c)); }, py::arg("config"),
        release);
  m.def("finetune",
        [](const ConfigMap& c, const Checkpoint& ckpt) { return stage2_finetune(make_run_config(c), ckpt); },
        py::arg("config"), py::arg("checkpoint") = py::none(), release);
  m.def("inject_train",
        [](const ConfigMap& c, const Checkpoint& ckpt) { return stage3_inject_train(make_run_config(c), ckpt); },
        py::arg("config"), py::arg("checkpoint") = py::none(), release);
  py::class_<StageReport>(m, "StageReport")
      .def("to_dict", &report_dict)
      .def_readonly("stage", &StageReport::stage)
      .def_readonly("fingerprint", &StageReport::fingerprint)
      .def_readonly("checkpoint", &StageReport::checkpoint)
      .def_readonly("best_step", &StageReport::best_step)
      .def_readonly("dev_accuracy", &StageReport::dev_accuracy)
      .def_readonly("test_accuracy", &StageReport::test_accuracy)
      .def_readonly("initial_eval_loss", &StageReport::initial_eval_loss)
      .def_readonly("final_eval_loss", &StageReport::final_eval_loss)
      .def_readonly("loss_curve", &StageReport::loss_curve);

  m.def("ablate",
        [](const ConfigMap& c) {
          std::vector<std::tuple<std::size_t, double, double>> rows;
          for (const auto& r : ablate_triple_amount(make_run_config(c)))
            rows.emplace_back(r.budget, r.dev_accuracy, r.test_accuracy);
          return rows;
        },
        py::arg("config"), release);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("split", &EvalReport::split)
      .def_readonly("accuracy", &EvalReport::accuracy)
      .def_readonly("correct", &EvalReport::correct)
      .def_readonly("total", &EvalReport::total)
      .def_readonly("gold", &EvalReport::gold)
      .def_readonly("predictions", &EvalReport::predictions);
  m.def("evaluate",
        [](const ConfigMap& c, const fs::path& ckpt, const std::string& split) {
          return evaluate(make_run_config(c), ckpt, split);
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("split") = "test", release);

  m.def("gen_synth",
        [](const fs::path& out_dir, const std::string& kind, std::size_t entities, std::size_t noise_triples,
           std::size_t sentences_per_entity, std::uint64_t seed) {
          SyntheticOptions opt;
          if (kind == "knowledge") opt.kind = SyntheticKind::knowledge;
          else if (kind == "lexical") opt.kind = SyntheticKind::lexical;
          else throw ConfigError("kind must be knowledge or lexical");
          opt.entities = entities;
          opt.noise_triples = noise_triples;
          opt.sentences_per_entity = sentences_per_entity;
          opt.seed = seed;
          const auto corpus = generate_synthetic(opt);
          write_synthetic(corpus, out_dir);
          py::dict d;
          d["labels"] = corpus.labels;
          d["train"] = corpus.train.size();
          d["dev"] = corpus.dev.size();
          d["test"] = corpus.test.size();
          d["triples"] = corpus.kg.size();
          d["informative_triples"] = corpus.informative_triples;
          return d;
        },
        py::arg("out_dir"), py::arg("kind") = "knowledge", py::arg("entities") = 100,
        py::arg("noise_triples") = 900, py::arg("sentences_per_entity") = 8, py::arg("seed") = 7);
}
