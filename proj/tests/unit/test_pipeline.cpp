#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "kinject/backbone.hpp"
#include "kinject/error.hpp"
#include "kinject/pipeline.hpp"
#include "kinject/synthetic.hpp"
#include "kinject/text.hpp"

using namespace kinject;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("kinject_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small synthetic workspace; `map` points at its files.
struct Workspace {
  fs::path dir;
  ConfigMap map;
  SyntheticCorpus corpus;

  RunConfig config(const std::string& out = "run") {
    ConfigMap m = map;
    m.set("out_dir", (dir / out).string());
    return make_run_config(m);
  }
};

Workspace workspace(const std::string& name, SyntheticKind kind = SyntheticKind::knowledge,
                    std::size_t entities = 20) {
  Workspace ws;
  ws.dir = fresh_dir(name);
  SyntheticOptions opt;
  opt.kind = kind;
  opt.entities = entities;
  opt.noise_triples = 60;
  opt.seed = 3;
  ws.corpus = generate_synthetic(opt);
  write_synthetic(ws.corpus, ws.dir / "data");
  ws.map.set("train_path", (ws.dir / "data" / "train.tsv").string());
  ws.map.set("dev_path", (ws.dir / "data" / "dev.tsv").string());
  ws.map.set("test_path", (ws.dir / "data" / "test.tsv").string());
  ws.map.set("kg_path", (ws.dir / "data" / "kg.tsv").string());
  std::string labels;
  for (const auto& l : ws.corpus.labels) labels += (labels.empty() ? "" : ",") + l;
  ws.map.set("labels", labels);
  ws.map.set("steps_pretrain", "20");
  ws.map.set("steps_finetune", "20");
  ws.map.set("steps_inject", "20");
  ws.map.set("eval_every", "10");
  ws.map.set("batch_size", "8");
  return ws;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("accuracy_percent") {
  const std::vector<std::size_t> gold{0, 1, 1, 0};
  CHECK(accuracy_percent(gold, gold) == 100.0);
  const std::vector<std::size_t> pred{0, 1, 0, 0};
  CHECK(accuracy_percent(pred, gold) == 75.0);
  CHECK_THROWS_AS(accuracy_percent({}, {}), DataError);
}

TEST_CASE("dataset parsing") {
  std::istringstream good("pos\tgreat film\n# comment\n\nneg\tawful\n");
  const auto ds = parse_dataset(good, "train", {"neg", "pos"});
  REQUIRE(ds.size() == 2);
  CHECK(ds.examples[0].label == 1);
  CHECK(ds.examples[1].text == "awful");
  std::istringstream bad("pos\tfine\nmeh\tso so\n");
  try {
    parse_dataset(bad, "train", {"neg", "pos"}, "train.tsv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("train.tsv:2") != std::string::npos);
  }
  std::istringstream no_tab("pos great\n");
  CHECK_THROWS_AS(parse_dataset(no_tab, "train", {"neg", "pos"}), DataError);
}

TEST_CASE("synthetic corpus construction") {
  SyntheticOptions opt;
  const auto c = generate_synthetic(opt);
  CHECK(c.train.size() + c.dev.size() + c.test.size() == 800);
  CHECK(c.kg.size() == 1000);
  CHECK(c.informative_triples == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(c.kg.triples()[i].predicate == std::vector<std::string>{"has_genre"});
  // entities in dev/test never appear in training text
  std::set<std::string> train_words;
  for (const auto& ex : c.train.examples)
    for (const auto& w : normalize_words(ex.text)) train_words.insert(w);
  std::size_t unseen = 0;
  for (const auto& ex : c.test.examples) {
    bool all_known = true;
    for (const auto& w : normalize_words(ex.text)) all_known &= train_words.count(w) > 0;
    unseen += !all_known;
  }
  CHECK(unseen == c.test.size());
  const auto again = generate_synthetic(opt);
  CHECK(again.kg.triples() == c.kg.triples());
}

TEST_CASE("knowledge base lookup honours the budget") {
  auto ws = workspace("kb");
  auto cfg = ws.config();
  const auto kb = load_knowledge(cfg);
  CHECK(kb.triples.size() == ws.corpus.kg.size());
  ConfigMap m = ws.map;
  m.set("triple_budget", "0");
  const auto empty = load_knowledge(make_run_config(m));
  CHECK(empty.triples.size() == 0);
  const auto& ex = ws.corpus.test.examples[0];
  CHECK(empty.lookup(ex.text, 4, 1, 8).result.matches.empty());
  CHECK_FALSE(kb.lookup(ex.text, 4, 1, 8).result.facts.empty());
  m.set("kg_path", "");
  CHECK(load_knowledge(make_run_config(m)).triples.size() == 0);
}

TEST_CASE("stage 1: zero steps leaves the initialization") {
  auto ws = workspace("stage1_zero");
  ConfigMap m = ws.map;
  m.set("steps_pretrain", "0");
  m.set("out_dir", (ws.dir / "run").string());
  const auto cfg = make_run_config(m);
  const auto report = stage1_pretrain(cfg);

  ParameterStore store;
  Backbone bb(cfg.backbone, store, corpus_vocabulary(load_dataset(cfg.train_path, "train", cfg.labels)).size());
  bb.enable_lm_head(store, corpus_vocabulary(load_dataset(cfg.train_path, "train", cfg.labels)).size());
  save_checkpoint(store, ws.dir / "init.ckpt");
  CHECK(read_file(report.checkpoint) == read_file(ws.dir / "init.ckpt"));
  CHECK(report.initial_eval_loss == report.final_eval_loss);
}

TEST_CASE("stage 1: deterministic and loss decreases") {
  auto ws = workspace("stage1", SyntheticKind::knowledge, 110);
  ConfigMap m = ws.map;
  m.set("steps_pretrain", "200");
  m.set("lr_pretrain", "1e-3");
  m.set("batch_size", "16");
  m.set("out_dir", (ws.dir / "a").string());
  const auto a = stage1_pretrain(make_run_config(m));
  m.set("out_dir", (ws.dir / "b").string());
  const auto b = stage1_pretrain(make_run_config(m));
  CHECK(read_file(a.checkpoint) == read_file(b.checkpoint));
  CHECK(a.final_eval_loss == b.final_eval_loss);
  INFO("train sentences ", ws.corpus.train.size(), " loss ", a.initial_eval_loss, " -> ", a.final_eval_loss);
  CHECK(ws.corpus.train.size() >= 500);
  CHECK(a.final_eval_loss <= 0.7 * a.initial_eval_loss);
  CHECK(read_jsonl(ws.dir / "a" / "metrics_pretrain.jsonl") ==
        read_jsonl(ws.dir / "b" / "metrics_pretrain.jsonl"));
}

TEST_CASE("stage 1: empty corpus and zero mask rate") {
  auto ws = workspace("stage1_errors");
  std::ofstream(ws.dir / "empty.tsv").close();
  ConfigMap m = ws.map;
  m.set("out_dir", (ws.dir / "run").string());
  m.set("train_path", (ws.dir / "empty.tsv").string());
  CHECK_THROWS_AS(stage1_pretrain(make_run_config(m)), ConfigError);
  m = ws.map;
  m.set("out_dir", (ws.dir / "run").string());
  m.set("mask_rate", "0");
  CHECK_THROWS_AS(stage1_pretrain(make_run_config(m)), UsageError);
}

TEST_CASE("stage 2: lexical task is learned") {
  auto ws = workspace("lexical", SyntheticKind::lexical, 40);
  ConfigMap m = ws.map;
  m.set("steps_pretrain", "50");
  m.set("steps_finetune", "300");
  m.set("lr_finetune", "1e-3");
  m.set("batch_size", "16");
  m.set("out_dir", (ws.dir / "run").string());
  const auto cfg = make_run_config(m);
  stage1_pretrain(cfg);
  const auto report = stage2_finetune(cfg);
  CHECK(report.dev_accuracy >= 95.0);
}

TEST_CASE("stage 2: dev-best selection and evaluation") {
  auto ws = workspace("stage2");
  const auto cfg = ws.config();
  stage1_pretrain(cfg);
  const auto report = stage2_finetune(cfg);
  const auto records = read_jsonl(cfg.out_dir / "metrics_finetune.jsonl");
  double best = -1.0;
  for (const auto& r : records)
    if (r.contains("accuracy")) best = std::max(best, r["accuracy"].get<double>());
  CHECK(report.dev_accuracy == best);
  CHECK(records.back()["summary"] == true);
  CHECK(records.back()["fingerprint"] == cfg.fingerprint());

  const auto dev = evaluate(cfg, report.checkpoint, "dev");
  CHECK(dev.accuracy == report.dev_accuracy);
  const auto test = evaluate(cfg, report.checkpoint, "test");
  CHECK(test.accuracy == report.test_accuracy);

  // recount from the prediction dump
  std::ifstream dump(cfg.out_dir / "predictions_test.tsv");
  std::string line;
  std::size_t total = 0, correct = 0;
  while (std::getline(dump, line)) {
    std::istringstream fields(line);
    std::string idx, gold, pred;
    std::getline(fields, idx, '\t');
    std::getline(fields, gold, '\t');
    std::getline(fields, pred, '\t');
    ++total;
    correct += gold == pred;
  }
  CHECK(total == ws.corpus.test.size());
  CHECK(test.accuracy == doctest::Approx(100.0 * correct / total).epsilon(1e-12));
}

TEST_CASE("stage 2 does not depend on the knowledge graph") {
  auto ws = workspace("isolation");
  const auto with = ws.config("with");
  stage1_pretrain(with);
  const auto a = stage2_finetune(with);
  ConfigMap m = ws.map;
  m.set("kg_path", "");
  m.set("out_dir", (ws.dir / "without").string());
  const auto without = make_run_config(m);
  stage1_pretrain(without);
  const auto b = stage2_finetune(without);
  CHECK(read_file(a.checkpoint) == read_file(b.checkpoint));
  CHECK(a.test_accuracy == b.test_accuracy);
}

TEST_CASE("stage 3 consumes stage 2 and is deterministic") {
  auto ws = workspace("stage3");
  const auto cfg = ws.config();
  stage1_pretrain(cfg);
  const auto s2 = stage2_finetune(cfg);
  const auto a = stage3_inject_train(cfg);
  const std::string first = read_file(a.checkpoint);
  const std::string metrics = read_file(cfg.out_dir / "metrics_inject.jsonl");
  const auto b = stage3_inject_train(cfg, s2.checkpoint);
  CHECK(read_file(b.checkpoint) == first);
  CHECK(read_file(cfg.out_dir / "metrics_inject.jsonl") == metrics);

  // the frozen backbone and head are carried over unchanged
  const auto p2 = load_checkpoint(s2.checkpoint);
  const auto p3 = load_checkpoint(a.checkpoint);
  for (const auto& [name, t] : p2) {
    REQUIRE(p3.count(name));
    CHECK(encode_checkpoint({{name, t}}) == encode_checkpoint({{name, p3.at(name)}}));
  }
  CHECK(p3.count("injector.embedding") == 1);

  const auto eval = evaluate(cfg, a.checkpoint, "test");
  CHECK(eval.accuracy == a.test_accuracy);
}

TEST_CASE("stage 3 joint training moves the backbone") {
  auto ws = workspace("joint");
  ConfigMap m = ws.map;
  m.set("freeze_backbone_stage3", "false");
  m.set("out_dir", (ws.dir / "run").string());
  const auto cfg = make_run_config(m);
  stage1_pretrain(cfg);
  const auto s2 = stage2_finetune(cfg);
  const auto s3 = stage3_inject_train(cfg);
  const auto p2 = load_checkpoint(s2.checkpoint);
  const auto p3 = load_checkpoint(s3.checkpoint);
  CHECK(encode_checkpoint({{"x", p2.at("backbone.embedding")}}) ==
        encode_checkpoint({{"x", p3.at("backbone.embedding")}}));
  if (s3.best_step > 0) {
    CHECK(encode_checkpoint({{"x", p2.at("head.cls.w")}}) != encode_checkpoint({{"x", p3.at("head.cls.w")}}));
  }
}

TEST_CASE("mismatched checkpoints are config errors") {
  auto ws = workspace("mismatch");
  const auto cfg = ws.config();
  const auto s1 = stage1_pretrain(cfg);
  const auto s2 = stage2_finetune(cfg);
  ConfigMap m = ws.map;
  m.set("backbone.d_model", "8");
  m.set("injector.d_model", "8");
  m.set("out_dir", (ws.dir / "narrow").string());
  const auto narrow = make_run_config(m);
  CHECK_THROWS_AS(stage3_inject_train(narrow, s2.checkpoint), ConfigError);
  CHECK_THROWS_AS(stage2_finetune(narrow, s1.checkpoint), ConfigError);
  CHECK_THROWS_AS(evaluate(narrow, s2.checkpoint, "test"), ConfigError);
  // stage 1 checkpoint has no classifier
  CHECK_THROWS_AS(evaluate(cfg, s1.checkpoint, "test"), ConfigError);
  CHECK_THROWS_AS(stage3_inject_train(cfg, ws.dir / "missing.ckpt"), ConfigError);
}

TEST_CASE("ablation with a single zero budget is the control run") {
  auto ws = workspace("ablate");
  ConfigMap m = ws.map;
  m.set("ablate_budgets", "0");
  m.set("out_dir", (ws.dir / "run").string());
  const auto cfg = make_run_config(m);
  const auto rows = ablate_triple_amount(cfg);
  REQUIRE(rows.size() == 1);
  m.set("triple_budget", "0");
  m.set("out_dir", (ws.dir / "control").string());
  const auto control = stage3_inject_train(make_run_config(m), cfg.out_dir / "stage2.ckpt");
  CHECK(rows[0].dev_accuracy == control.dev_accuracy);
  CHECK(rows[0].test_accuracy == control.test_accuracy);
  std::ifstream tsv(cfg.out_dir / "ablation.tsv");
  std::string header, row, extra;
  std::getline(tsv, header);
  std::getline(tsv, row);
  CHECK(header == "#budget\tdev_acc\ttest_acc");
  CHECK(row.rfind("0\t", 0) == 0);
  CHECK_FALSE(std::getline(tsv, extra));
}
