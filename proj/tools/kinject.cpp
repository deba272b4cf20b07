#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "kinject/config.hpp"
#include "kinject/encoding.hpp"
#include "kinject/error.hpp"
#include "kinject/pipeline.hpp"
#include "kinject/synthetic.hpp"
#include "kinject/text.hpp"

namespace fs = std::filesystem;
using namespace kinject;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Globals& g) {
  ConfigMap map = g.config_path.empty() ? ConfigMap() : ConfigMap::load(g.config_path);
  for (const auto& o : g.overrides) map.apply_override(o);
  return make_run_config(map);
}

// Calls `fn` for every non-blank line of `input` ("-" = stdin).
template <typename Fn>
void for_each_line(const std::string& input, Fn fn) {
  std::ifstream file;
  if (input != "-") {
    file.open(input);
    if (!file) throw Error("cannot open " + input);
  }
  std::istream& in = input == "-" ? std::cin : file;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_words(line).empty()) continue;
    fn(line);
  }
}

void print_report(const StageReport& r) {
  std::cout << r.stage << " fingerprint=" << r.fingerprint << " checkpoint=" << r.checkpoint.string();
  if (r.stage == "pretrain") {
    std::cout << " mlm_loss " << r.initial_eval_loss << " -> " << r.final_eval_loss;
  } else {
    std::cout << " best_step=" << r.best_step << " dev=" << r.dev_accuracy
              << " test=" << r.test_accuracy;
  }
  std::cout << '\n';
  std::cerr << r.stage << " took " << r.seconds << " s\n";
}

void build_kg(const RunConfig& cfg) {
  if (!cfg.kg_path) throw ConfigError("build-kg needs kg_path");
  const KnowledgeBase kb = load_knowledge(cfg);
  for (const auto& w : kb.warnings) std::cerr << "warning: " << w << '\n';
  fs::create_directories(cfg.out_dir);
  save_triples(kb.triples, cfg.out_dir / "kg_normalized.tsv");
  std::ofstream dict(cfg.out_dir / "surface_dict.tsv", std::ios::trunc);
  for (const auto& [surface, entry] : kb.dict.entries()) {
    dict << surface << '\t' << kb.triples.subject_key(entry.subject) << '\t' << entry.frequency
         << '\n';
  }
  std::cout << "triples=" << kb.triples.size() << " subjects=" << kb.triples.subject_count()
            << " surfaces=" << kb.dict.size() << " skipped_rows=" << kb.skipped_rows << '\n';
}

void match(const RunConfig& cfg, const std::string& input) {
  const KnowledgeBase kb = load_knowledge(cfg);
  for_each_line(input, [&](const std::string& line) {
    const MatchedSentence m =
        kb.lookup(line, cfg.max_ngram, cfg.per_subject_cap, cfg.per_sentence_cap);
    std::string subjects, facts;
    for (const auto& s : m.result.matches) {
      if (!subjects.empty()) subjects += ';';
      subjects += kb.triples.subject_key(s.subject) + "@" + std::to_string(s.index);
    }
    for (const auto& f : m.result.facts) {
      if (!facts.empty()) facts += ';';
      facts += to_string(f.triple);
    }
    std::cout << line << '\t' << subjects << '\t' << facts << '\n';
  });
}

void encode(const RunConfig& cfg, const std::string& input) {
  const KnowledgeBase kb = load_knowledge(cfg);
  for_each_line(input, [&](const std::string& line) {
    const MatchedSentence m =
        kb.lookup(line, cfg.max_ngram, cfg.per_subject_cap, cfg.per_sentence_cap);
    const SplicedSequence seq = splice(m.sentence, m.result.facts, cfg.max_seq_len);
    nlohmann::json rec;
    rec["sentence"] = line;
    rec["sentence_len"] = seq.sentence_len;
    auto& tokens = rec["tokens"] = nlohmann::json::array();
    auto& alphas = rec["alphas"] = nlohmann::json::array();
    auto& betas = rec["betas"] = nlohmann::json::array();
    auto& origins = rec["origins"] = nlohmann::json::array();
    for (const auto& t : seq.tokens) {
      tokens.push_back(t.text);
      alphas.push_back(t.alpha);
      betas.push_back(t.beta);
      origins.push_back(std::string(to_string(t.origin)));
    }
    std::cout << rec.dump() << '\n';
  });
}

void gen_synth(const RunConfig& cfg) {
  SyntheticOptions opt;
  const std::string& kind = cfg.raw.get("synth.kind");
  if (kind == "knowledge") {
    opt.kind = SyntheticKind::knowledge;
  } else if (kind == "lexical") {
    opt.kind = SyntheticKind::lexical;
  } else {
    throw ConfigError("synth.kind must be knowledge or lexical");
  }
  opt.entities = cfg.raw.get_size("synth.entities");
  opt.noise_triples = cfg.raw.get_size("synth.noise_triples");
  opt.sentences_per_entity = cfg.raw.get_size("synth.sentences_per_entity");
  opt.seed = cfg.seed;
  const SyntheticCorpus corpus = generate_synthetic(opt);
  write_synthetic(corpus, cfg.out_dir);

  ConfigMap experiment = cfg.raw;
  const fs::path dir = fs::absolute(cfg.out_dir);
  experiment.set("train_path", (dir / "train.tsv").string());
  experiment.set("dev_path", (dir / "dev.tsv").string());
  experiment.set("test_path", (dir / "test.tsv").string());
  experiment.set("kg_path", (dir / "kg.tsv").string());
  std::string labels;
  for (const auto& l : corpus.labels) labels += (labels.empty() ? "" : ",") + l;
  experiment.set("labels", labels);
  std::ofstream(cfg.out_dir / "experiment.conf", std::ios::trunc) << experiment.serialize();
  std::cout << "train=" << corpus.train.size() << " dev=" << corpus.dev.size()
            << " test=" << corpus.test.size() << " triples=" << corpus.kg.size()
            << " informative=" << corpus.informative_triples << '\n'
            << "config " << (cfg.out_dir / "experiment.conf").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinject: knowledge injection pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file");
  app.add_option("--set", g.overrides, "override, key=value (repeatable)");
  app.fallthrough();

  std::string input = "-";
  std::string checkpoint;
  std::string split = "test";

  auto* build_kg_cmd = app.add_subcommand("build-kg", "load and normalize the KG, write the surface dictionary");
  auto* match_cmd = app.add_subcommand("match", "match KG subjects in sentences (TSV out)");
  match_cmd->add_option("--input", input, "sentence file, one per line ('-' = stdin)");
  auto* encode_cmd = app.add_subcommand("encode", "spliced sequence with position indices (JSON lines)");
  encode_cmd->add_option("--input", input, "sentence file, one per line ('-' = stdin)");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "stage 1: masked-token pretraining");
  auto* finetune_cmd = app.add_subcommand("finetune", "stage 2: task fine-tuning without knowledge");
  finetune_cmd->add_option("--checkpoint", checkpoint, "stage-1 checkpoint (default <out_dir>/stage1.ckpt)");
  auto* inject_cmd = app.add_subcommand("inject-train", "stage 3: train the knowledge injector");
  inject_cmd->add_option("--checkpoint", checkpoint, "stage-2 checkpoint (default <out_dir>/stage2.ckpt)");
  auto* ablate_cmd = app.add_subcommand("ablate", "stage 3 across triple budgets");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "stage-2 or stage-3 checkpoint")->required();
  eval_cmd->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  auto* synth_cmd = app.add_subcommand("gen-synth", "write the synthetic dataset, KG and experiment config");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve(g);
    const auto maybe = [&]() -> std::optional<fs::path> {
      if (checkpoint.empty()) return std::nullopt;
      return fs::path(checkpoint);
    };
    if (*build_kg_cmd) {
      build_kg(cfg);
    } else if (*match_cmd) {
      match(cfg, input);
    } else if (*encode_cmd) {
      encode(cfg, input);
    } else if (*pretrain_cmd) {
      print_report(stage1_pretrain(cfg));
    } else if (*finetune_cmd) {
      print_report(stage2_finetune(cfg, maybe()));
    } else if (*inject_cmd) {
      print_report(stage3_inject_train(cfg, maybe()));
    } else if (*ablate_cmd) {
      for (const auto& row : ablate_triple_amount(cfg)) {
        std::cout << row.budget << '\t' << row.dev_accuracy << '\t' << row.test_accuracy << '\n';
      }
    } else if (*eval_cmd) {
      const EvalReport r = evaluate(cfg, checkpoint, split);
      std::cout << r.split << " accuracy=" << r.accuracy << " (" << r.correct << "/" << r.total
                << ")\n";
    } else if (*synth_cmd) {
      gen_synth(cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
