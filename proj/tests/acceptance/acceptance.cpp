// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinject/backbone.hpp"
#include "kinject/encoding.hpp"
#include "kinject/injector.hpp"
#include "kinject/matcher.hpp"
#include "kinject/parameters.hpp"
#include "kinject/pipeline.hpp"
#include "kinject/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kinject;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string synthetic_labels() {
  const auto labels = generate_synthetic({}).labels;
  std::string out;
  for (const auto& l : labels) out += (out.empty() ? "" : ",") + l;
  return out;
}

// Learning rate and step count tuned so the synthetic task converges
// within the time limits; everything else stays at its default.
ConfigMap experiment_config(const fs::path& data, const fs::path& out) {
  static const std::string labels = synthetic_labels();
  ConfigMap map;
  map.set("out_dir", out.string());
  map.set("train_path", (data / "train.tsv").string());
  map.set("dev_path", (data / "dev.tsv").string());
  map.set("test_path", (data / "test.tsv").string());
  map.set("kg_path", (data / "kg.tsv").string());
  map.set("labels", labels);
  map.set("lr_pretrain", "1e-3");
  map.set("steps_inject", "600");
  return map;
}

// ---- gradients

Outcome gradient_suite() {
  std::istringstream kg(
      "Xiaomi\tis_a\tscience and technology company\n"
      "Hong Kong\tis_a\tcity\n"
      "Xiaomi\tfounded_by\tLei Jun\n");
  const auto store_kg = parse_triples(kg, "kg");
  auto matched = match_subjects(tokenize("Xiaomi listed in Hong Kong"), build_surface_dict(store_kg).dict);
  matched.result = gather_facts(matched.result, store_kg, 2, 8);
  const auto spliced = splice(matched.sentence, matched.result.facts);
  const auto plain = splice(tokenize("listed in a city"), {});
  Vocabulary vocab;
  for (const auto& t : spliced.tokens) vocab.add(t.text);
  for (const auto& t : plain.tokens) vocab.add(t.text);

  ParameterStore store;
  InjectorConfig ic;
  ic.layers = 2, ic.d_model = 8, ic.heads = 2, ic.d_ff = 16, ic.seed = 31;
  Injector injector(ic, store, vocab.size());
  BackboneConfig bc;
  bc.layers = 2, bc.d_model = 8, bc.heads = 2, bc.d_ff = 16, bc.num_classes = 2, bc.seed = 32;
  Backbone backbone(bc, store, vocab.size());
  backbone.enable_classifier(store);
  backbone.enable_lm_head(store, vocab.size());
  backbone.enable_tagger(store, 3);

  const std::size_t labels[] = {1, 0};
  auto loss = [&] {
    const Tensor plain_x = embed(plain, vocab, backbone.embedding(), 8);
    const Tensor seqs[] = {injector.inject(spliced, vocab), plain_x};
    const auto batch = make_batch(seqs);
    Tensor total = cross_entropy(backbone.classify(batch), labels);
    const Tensor lm_in[] = {plain_x};
    total = add(total, masked_lm_loss(backbone.lm_pretrain_forward(lm_in), {{0, 2}}, {{3, 5}}));
    const auto tags = backbone.tag(batch);
    const std::size_t rows[] = {0, 1, 2, 3};
    const std::size_t gold[] = {0, 2, 1, 0};
    return add(total, cross_entropy(gather_rows(tags[1], rows), gold));
  };
  const auto report = testing::gradient_check(testing::trainable_leaves(store), loss, 1e-4);
  Outcome o;
  o.pass = report.missing.empty() && report.max_rel_error < 1e-4;
  o.detail = fmt("%zu scalars in %zu tensors, max rel err %.3g at %s", report.checked,
                 store.names().size(), report.max_rel_error, report.worst.c_str());
  if (!report.missing.empty()) o.detail += ", no gradient: " + report.missing.front();
  return o;
}

// ---- encoding

Outcome encoding_suite() {
  std::istringstream kg(
      "Xiaomi\tis_a\tscience and technology company\n"
      "Hong Kong\tis_a\tcity\n");
  const auto store = parse_triples(kg, "kg");
  auto m = match_subjects(tokenize("Xiaomi listed in Hong Kong"), build_surface_dict(store).dict);
  m.result = gather_facts(m.result, store, 1, 8);
  const auto seq = splice(m.sentence, m.result.facts);
  const bool golden = seq.size() == 14 && seq.tokens[0].alpha == 1 && seq.tokens[0].beta == 1 &&
                      seq.tokens[4].alpha == 5 && seq.tokens[4].beta == 1 &&
                      seq.tokens[4].origin == Origin::subject;

  Rng rng(1234);
  std::size_t duplicates = 0, out_of_range = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(16);
    std::vector<Fact> facts;
    std::size_t index = 1;
    for (std::size_t k = rng.below(8); k > 0; --k) {
      index = std::min(n, index + rng.below(3));
      Triple t;
      for (std::size_t i = 1 + rng.below(3); i > 0; --i) t.subject.push_back("s");
      t.predicate.push_back("p");
      for (std::size_t i = 1 + rng.below(4); i > 0; --i) t.object.push_back("o");
      facts.push_back({index, t});
    }
    std::string text;
    for (std::size_t i = 0; i < n; ++i) text += "w" + std::to_string(i) + " ";
    const auto s = splice(tokenize(text), facts);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& t : s.tokens) {
      duplicates += !seen.emplace(t.alpha, t.beta).second;
      for (double v : position_code(t.alpha, t.beta, 16)) out_of_range += !(v >= -1.0 && v <= 1.0);
    }
  }
  Outcome o;
  o.pass = golden && duplicates == 0 && out_of_range == 0;
  o.detail = fmt("golden %s, duplicate pairs %zu, codes outside [-1,1] %zu", golden ? "ok" : "MISMATCH",
                 duplicates, out_of_range);
  return o;
}

// ---- matcher

Outcome matcher_oracle() {
  Rng rng(77);
  std::size_t mismatches = 0, misordered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = testing::random_matcher_instance(rng);
    const std::size_t max_ngram = 1 + rng.below(4);
    const auto dict = build_surface_dict(inst.store).dict;
    const auto m = match_subjects(tokenize(testing::join_sentence(inst.words)), dict, max_ngram);
    const auto oracle = testing::brute_force_match(inst.words, inst.surfaces, max_ngram);
    bool same = m.sentence.surfaces() == oracle.merged && m.result.matches.size() == oracle.matches.size();
    for (std::size_t k = 0; same && k < oracle.matches.size(); ++k) {
      same = m.result.matches[k].index == oracle.matches[k].first &&
             inst.store.subject_key(m.result.matches[k].subject) == oracle.matches[k].second;
    }
    mismatches += !same;
    const auto facts = gather_facts(m.result, inst.store, 1 + rng.below(3), 1 + rng.below(8)).facts;
    for (std::size_t k = 1; k < facts.size(); ++k) misordered += facts[k - 1].index > facts[k].index;
  }
  return {mismatches == 0 && misordered == 0,
          fmt("1000 instances, %zu oracle mismatches, %zu misordered facts", mismatches, misordered)};
}

// ---- training runs

struct EndToEnd {
  fs::path data, run;
  StageReport s1, s2, s3, control;
};

Outcome end_to_end(const fs::path& work, EndToEnd& e2e) {
  e2e.data = work / "data";
  e2e.run = work / "run";
  fs::remove_all(work);
  SyntheticOptions opt;
  write_synthetic(generate_synthetic(opt), e2e.data);
  const auto cfg = make_run_config(experiment_config(e2e.data, e2e.run));
  e2e.s1 = stage1_pretrain(cfg);
  e2e.s2 = stage2_finetune(cfg);
  e2e.s3 = stage3_inject_train(cfg);
  auto control_map = experiment_config(e2e.data, work / "control");
  control_map.set("triple_budget", "0");
  e2e.control = stage3_inject_train(make_run_config(control_map), e2e.run / "stage2.ckpt");

  const double base = e2e.s2.test_accuracy, k = e2e.s3.test_accuracy, ctl = e2e.control.test_accuracy;
  Outcome o;
  o.pass = base <= 60.0 && k >= 90.0 && std::abs(ctl - base) <= 2.0;
  o.detail = fmt("test acc: baseline %.2f (<=60), with KG %.2f (>=90), zero-triple control %.2f (baseline+-2)",
                 base, k, ctl);
  o.detail += fmt("; dev %.2f / %.2f / %.2f", e2e.s2.dev_accuracy, e2e.s3.dev_accuracy, e2e.control.dev_accuracy);
  return o;
}

Outcome ablation(const fs::path& work, const fs::path& data) {
  fs::remove_all(work);
  auto map = experiment_config(data, work);
  map.set("ablate_budgets", "10,100,500,1000");
  const auto rows = ablate_triple_amount(make_run_config(map));
  std::map<std::size_t, double> acc;
  std::string detail = "test acc by budget:";
  for (const auto& r : rows) {
    acc[r.budget] = r.test_accuracy;
    detail += fmt(" %zu=%.2f", r.budget, r.test_accuracy);
  }
  const bool pass = acc.at(100) >= acc.at(10) + 10.0 && std::abs(acc.at(500) - acc.at(100)) <= 2.0 &&
                    std::abs(acc.at(1000) - acc.at(100)) <= 2.0;
  return {pass, detail + " (need 100 >= 10+10, 500 and 1000 within 100+-2)"};
}

Outcome determinism(const EndToEnd& e2e, const fs::path& repeat) {
  fs::remove_all(repeat);
  const auto cfg = make_run_config(experiment_config(e2e.data, repeat));
  stage1_pretrain(cfg);
  stage2_finetune(cfg);
  stage3_inject_train(cfg);
  const auto first = make_run_config(experiment_config(e2e.data, e2e.run));
  evaluate(first, e2e.run / "stage3.ckpt", "test");
  evaluate(cfg, repeat / "stage3.ckpt", "test");
  const char* files[] = {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "metrics_pretrain.jsonl",
                         "metrics_finetune.jsonl", "metrics_inject.jsonl", "predictions_test.tsv",
                         "metrics_eval_test.jsonl"};
  std::size_t differ = 0;
  std::string which;
  for (const char* f : files) {
    if (read_bytes(e2e.run / f) != read_bytes(repeat / f)) {
      ++differ;
      which += std::string(" ") + f;
    }
  }
  return {differ == 0, fmt("%zu of %zu checkpoint/metrics/prediction files differ on repeat", differ, std::size(files)) + which};
}

Outcome checkpoint_round_trip(const EndToEnd& e2e, const fs::path& work) {
  fs::create_directories(work);
  std::size_t differ = 0;
  for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt"}) {
    const auto loaded = load_checkpoint(e2e.run / f);
    save_checkpoint(loaded, work / f);
    differ += read_bytes(e2e.run / f) != read_bytes(work / f);
  }
  // stage 3 ran on the stage-2 weights: the frozen backbone must be carried over
  const auto s2 = load_checkpoint(e2e.run / "stage2.ckpt");
  const auto s3 = load_checkpoint(e2e.run / "stage3.ckpt");
  std::size_t carried = 0, changed = 0;
  for (const auto& [name, t] : s2) {
    const auto it = s3.find(name);
    if (it == s3.end()) continue;
    ++carried;
    if (!std::equal(t.values().begin(), t.values().end(), it->second.values().begin(),
                    it->second.values().end()))
      ++changed;
  }
  const bool pass = differ == 0 && carried == s2.size() && changed == 0;
  return {pass, fmt("%zu of 3 re-saved checkpoints differ; stage 3 carries %zu/%zu stage-2 tensors, %zu changed",
                    differ, carried, s2.size(), changed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = "acceptance_work";
  app.add_option("--work-dir", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  work = fs::absolute(work);

  EndToEnd e2e;
  const std::vector<Criterion> criteria{
      {"gradient check of all injector and backbone parameters", 60, gradient_suite},
      {"dual-index encoding golden, uniqueness and range", 5, encoding_suite},
      {"greedy matcher equals brute-force oracle", 10, matcher_oracle},
      {"end-to-end synthetic: knowledge lifts accuracy, zero triples does not", 600,
       [&] { return end_to_end(work / "e2e", e2e); }},
      {"triple-amount ablation", 1200, [&] { return ablation(work / "ablation", work / "e2e" / "data"); }},
      {"repeat runs are byte-identical", 600, [&] { return determinism(e2e, work / "repeat"); }},
      {"checkpoint round trip and stage hand-off", 60,
       [&] { return checkpoint_round_trip(e2e, work / "roundtrip"); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail
              << fmt(" [%.1fs, limit %.0fs%s]", secs, c.limit_seconds, in_time ? "" : " EXCEEDED") << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
