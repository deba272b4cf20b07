#include "kinject/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <json.hpp>

#include "kinject/backbone.hpp"
#include "kinject/error.hpp"
#include "kinject/injector.hpp"
#include "kinject/random.hpp"
#include "kinject/text.hpp"

namespace kinject {

using json = nlohmann::json;
namespace fs = std::filesystem;

MatchedSentence KnowledgeBase::lookup(std::string_view text, std::size_t max_ngram,
                                      std::size_t per_subject_cap,
                                      std::size_t per_sentence_cap) const {
  const SentenceTokens tokens = tokenize(text);
  MatchedSentence matched;
  if (matcher_) {
    matched = matcher_->match(tokens, max_ngram);
  } else {
    matched.sentence = tokens;
  }
  matched.result = gather_facts(std::move(matched.result), triples, per_subject_cap,
                                per_sentence_cap);
  return matched;
}

KnowledgeBase make_knowledge_base(TripleStore triples,
                                  const std::optional<fs::path>& freq_path) {
  KnowledgeBase kb;
  kb.triples = std::move(triples);
  SurfaceDictBuild built = build_surface_dict(kb.triples, freq_path);
  kb.dict = std::move(built.dict);
  kb.skipped_rows = built.skipped_rows;
  kb.warnings = std::move(built.warnings);
  kb.matcher_.emplace(kb.dict);
  return kb;
}

KnowledgeBase load_knowledge(const RunConfig& config) {
  TripleStore triples;
  if (config.kg_path) {
    triples = load_triples(*config.kg_path);
    if (config.triple_budget) triples = triples.truncated(*config.triple_budget);
  }
  return make_knowledge_base(std::move(triples), config.kg_path ? config.freq_path : std::nullopt);
}

Vocabulary corpus_vocabulary(const Dataset& train) {
  Vocabulary vocab;
  for (const auto& ex : train.examples)
    for (const auto& word : normalize_words(ex.text)) vocab.add(word);
  return vocab;
}

Vocabulary knowledge_vocabulary(const Vocabulary& corpus, const KnowledgeBase& kb) {
  Vocabulary vocab = corpus;
  for (const Triple& t : kb.triples.triples()) {
    for (const auto* side : {&t.subject, &t.predicate, &t.object})
      for (const auto& w : *side) vocab.add(w);
    vocab.add(join_words(t.subject));
  }
  for (const auto& [surface, _] : kb.dict.entries()) vocab.add(surface);
  return vocab;
}

double accuracy_percent(std::span<const std::size_t> predictions,
                        std::span<const std::size_t> gold) {
  if (gold.empty()) throw DataError("accuracy of an empty split");
  if (predictions.size() != gold.size()) throw DimensionError("prediction count differs from gold");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predictions[i] == gold[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kEvalBatch = 32;
constexpr std::size_t kMlmEvalSentences = 256;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Turns gradient tracking off for every parameter for the guard's lifetime.
class NoGrad {
 public:
  explicit NoGrad(ParameterStore& store) : store_(store) {
    for (auto& [_, e] : store_.entries()) {
      flags_.push_back(e.value.requires_grad());
      e.value.set_requires_grad(false);
    }
  }
  ~NoGrad() {
    std::size_t i = 0;
    for (auto& [_, e] : store_.entries()) e.value.set_requires_grad(flags_[i++]);
  }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  ParameterStore& store_;
  std::vector<bool> flags_;
};

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path.string());
  }
  void write(const json& record) { out_ << record.dump() << '\n'; }

 private:
  std::ofstream out_;
};

// Epoch-wise shuffled minibatches.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::uint64_t seed, std::string_view stream)
      : rng_(seed, stream), order_(count) {
    for (std::size_t i = 0; i < count; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> next(std::size_t batch_size) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(batch_size, order_.size())) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      batch.push_back(order_[pos_++]);
    }
    return batch;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct Prepared {
  SplicedSequence sequence;
  std::size_t label = 0;
};

struct Model {
  ParameterStore store;
  Vocabulary vocab;
  std::optional<Backbone> backbone;
  std::optional<Vocabulary> knowledge_vocab;
  std::optional<Injector> injector;

  bool knowledge() const { return injector.has_value(); }

  Tensor input(const Prepared& p, const ForwardContext& ctx) const {
    if (injector) return injector->inject(p.sequence, *knowledge_vocab, ctx);
    return embed(p.sequence, vocab, backbone->embedding(), backbone->config().d_model);
  }

  Tensor logits(std::span<const Prepared* const> batch, const ForwardContext& ctx) const {
    std::vector<Tensor> inputs;
    inputs.reserve(batch.size());
    for (const Prepared* p : batch) inputs.push_back(input(*p, ctx));
    return backbone->classify(make_batch(inputs));
  }
};

Dataset load_split(const RunConfig& config, const std::string& split) {
  const fs::path& path = split == "train" ? config.train_path
                         : split == "dev" ? config.dev_path
                         : split == "test" ? config.test_path
                                           : throw ConfigError("unknown split '" + split + "'");
  if (path.empty()) throw ConfigError(split + "_path is not set");
  return load_dataset(path, split, config.labels);
}

std::vector<Prepared> prepare_plain(const Dataset& data, const RunConfig& config) {
  std::vector<Prepared> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) {
    out.push_back({splice(tokenize(ex.text), {}, config.max_seq_len), ex.label});
  }
  return out;
}

std::vector<Prepared> prepare_knowledge(const Dataset& data, const KnowledgeBase& kb,
                                        const RunConfig& config) {
  std::vector<Prepared> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) {
    const MatchedSentence m =
        kb.lookup(ex.text, config.max_ngram, config.per_subject_cap, config.per_sentence_cap);
    out.push_back({splice(m.sentence, m.result.facts, config.max_seq_len), ex.label});
  }
  return out;
}

std::vector<std::size_t> predict(Model& model, const std::vector<Prepared>& data) {
  NoGrad guard(model.store);
  std::vector<std::size_t> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    std::vector<const Prepared*> batch;
    for (std::size_t i = start; i < std::min(data.size(), start + kEvalBatch); ++i)
      batch.push_back(&data[i]);
    const Tensor logits = model.logits(batch, {});
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      out.push_back(best);
    }
  }
  return out;
}

double accuracy_on(Model& model, const std::vector<Prepared>& data) {
  if (data.empty()) throw DataError("accuracy of an empty split");
  std::vector<std::size_t> gold;
  for (const auto& p : data) gold.push_back(p.label);
  return accuracy_percent(predict(model, data), gold);
}

// Every parameter of `store` under one of `prefixes` must exist in the
// checkpoint with the same shape.
void load_required(ParameterStore& store, const std::map<std::string, Tensor>& checkpoint,
                   std::initializer_list<std::string_view> prefixes) {
  for (const auto& name : store.names()) {
    bool wanted = false;
    for (auto prefix : prefixes) wanted |= name.substr(0, prefix.size()) == prefix;
    if (!wanted) continue;
    auto it = checkpoint.find(name);
    if (it == checkpoint.end()) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    store.assign(name, it->second);
  }
}

std::map<std::string, Tensor> read_checkpoint(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " checkpoint " + path.string() + " not found");
  }
  return load_checkpoint(path);
}

json base_record(const std::string& stage, const RunConfig& config) {
  return json{{"stage", stage}, {"fingerprint", config.fingerprint()}};
}

struct LoopResult {
  std::size_t best_step = 0;
  double best_dev = 0.0;
  std::vector<double> loss_curve;
};

// Minibatch Adam on the classification loss with dev-best selection (ties
// keep the earlier step). The store ends holding the dev-best parameters.
LoopResult train_classifier(Model& model, const RunConfig& config, const std::string& stage,
                            const std::vector<Prepared>& train, const std::vector<Prepared>& dev,
                            std::size_t steps, const AdamOptions& adam, JsonlWriter& metrics) {
  if (train.empty()) throw DataError("empty training split");
  if (dev.empty()) throw DataError("empty dev split");
  BatchSampler sampler(train.size(), config.seed, "batches." + stage);
  Rng dropout_rng(config.seed, "dropout." + stage);
  const ForwardContext train_ctx{&dropout_rng, model.injector ? config.injector.dropout : 0.0};

  LoopResult result;
  result.best_dev = accuracy_on(model, dev);
  auto best = model.store.snapshot();
  {
    json rec = base_record(stage, config);
    rec.update({{"step", 0}, {"split", "dev"}, {"accuracy", result.best_dev}});
    metrics.write(rec);
  }

  double running = 0.0;
  std::size_t running_count = 0;
  for (std::size_t step = 1; step <= steps; ++step) {
    const auto indices = sampler.next(config.batch_size);
    std::vector<const Prepared*> batch;
    std::vector<std::size_t> labels;
    for (std::size_t i : indices) {
      batch.push_back(&train[i]);
      labels.push_back(train[i].label);
    }
    const Tensor loss = cross_entropy(model.logits(batch, train_ctx), labels);
    backward(loss);
    adam_step(model.store, adam);
    model.store.zero_grad();
    running += loss.item();
    ++running_count;

    if (step % config.eval_every == 0 || step == steps) {
      const double dev_acc = accuracy_on(model, dev);
      const double mean_loss = running / static_cast<double>(running_count);
      result.loss_curve.push_back(mean_loss);
      running = 0.0;
      running_count = 0;
      json rec = base_record(stage, config);
      rec.update({{"step", step}, {"split", "dev"}, {"accuracy", dev_acc}, {"train_loss", mean_loss}});
      metrics.write(rec);
      if (dev_acc > result.best_dev) {
        result.best_dev = dev_acc;
        result.best_step = step;
        best = model.store.snapshot();
      }
    }
  }
  model.store.load_from(best);
  return result;
}

std::vector<std::size_t> mask_positions(std::size_t length, double rate, Rng& rng) {
  std::vector<std::size_t> out;
  if (rate <= 0.0) return out;
  for (std::size_t i = 0; i < length; ++i)
    if (rng.bernoulli(rate)) out.push_back(i);
  if (out.empty()) out.push_back(rng.below(length));
  return out;
}

struct MaskedExample {
  const SplicedSequence* sequence;
  std::vector<std::size_t> ids;  // with masked positions replaced
  std::vector<std::size_t> positions;
  std::vector<std::size_t> targets;
};

MaskedExample mask_example(const SplicedSequence& seq, const Vocabulary& vocab, double rate,
                           Rng& rng) {
  MaskedExample ex{&seq, vocab.ids(seq), {}, {}};
  ex.positions = mask_positions(seq.size(), rate, rng);
  for (std::size_t p : ex.positions) {
    ex.targets.push_back(ex.ids[p]);
    ex.ids[p] = Vocabulary::kMask;
  }
  return ex;
}

Tensor mlm_loss(const Model& model, std::span<const MaskedExample> batch) {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> positions, targets;
  for (const auto& ex : batch) {
    inputs.push_back(embed_ids(*ex.sequence, ex.ids, model.backbone->embedding(),
                               model.backbone->config().d_model));
    positions.push_back(ex.positions);
    targets.push_back(ex.targets);
  }
  return masked_lm_loss(model.backbone->lm_pretrain_forward(inputs), positions, targets);
}

void write_summary(JsonlWriter& metrics, const RunConfig& config, const StageReport& report) {
  json rec = base_record(report.stage, config);
  rec["summary"] = true;
  rec["loss_curve"] = report.loss_curve;
  if (report.stage == "pretrain") {
    rec["initial_eval_loss"] = report.initial_eval_loss;
    rec["final_eval_loss"] = report.final_eval_loss;
  } else {
    rec["best_step"] = report.best_step;
    rec["dev_accuracy"] = report.dev_accuracy;
    rec["test_accuracy"] = report.test_accuracy;
  }
  metrics.write(rec);
}

}  // namespace

StageReport stage1_pretrain(const RunConfig& config) {
  const auto start = Clock::now();
  fs::create_directories(config.out_dir);
  const Dataset train = load_split(config, "train");
  if (train.empty()) throw ConfigError("stage 1 needs a non-empty corpus");

  Model model;
  model.vocab = corpus_vocabulary(train);
  model.backbone.emplace(config.backbone, model.store, model.vocab.size());
  model.backbone->enable_lm_head(model.store, model.vocab.size());

  const std::vector<Prepared> corpus = prepare_plain(train, config);

  // Fixed masking of a corpus prefix for loss tracking.
  Rng eval_rng(config.seed, "mlm.eval");
  std::vector<MaskedExample> eval_set;
  for (std::size_t i = 0; i < std::min(corpus.size(), kMlmEvalSentences); ++i) {
    eval_set.push_back(mask_example(corpus[i].sequence, model.vocab, config.mask_rate, eval_rng));
  }
  auto eval_loss = [&] {
    NoGrad guard(model.store);
    return mlm_loss(model, eval_set).item();
  };

  JsonlWriter metrics(config.out_dir / "metrics_pretrain.jsonl");
  StageReport report;
  report.stage = "pretrain";
  report.fingerprint = config.fingerprint();
  report.initial_eval_loss = eval_loss();
  {
    json rec = base_record(report.stage, config);
    rec.update({{"step", 0}, {"mlm_eval_loss", report.initial_eval_loss}});
    metrics.write(rec);
  }

  AdamOptions adam = config.adam;
  adam.lr = config.lr_pretrain;
  BatchSampler sampler(corpus.size(), config.seed, "batches.pretrain");
  Rng mask_rng(config.seed, "mlm.train");
  double running = 0.0;
  std::size_t running_count = 0;
  report.final_eval_loss = report.initial_eval_loss;
  for (std::size_t step = 1; step <= config.steps_pretrain; ++step) {
    std::vector<MaskedExample> batch;
    for (std::size_t i : sampler.next(config.batch_size)) {
      batch.push_back(mask_example(corpus[i].sequence, model.vocab, config.mask_rate, mask_rng));
    }
    const Tensor loss = mlm_loss(model, batch);
    backward(loss);
    adam_step(model.store, adam);
    model.store.zero_grad();
    running += loss.item();
    ++running_count;
    if (step % config.eval_every == 0 || step == config.steps_pretrain) {
      report.final_eval_loss = eval_loss();
      const double mean_loss = running / static_cast<double>(running_count);
      report.loss_curve.push_back(mean_loss);
      running = 0.0;
      running_count = 0;
      json rec = base_record(report.stage, config);
      rec.update({{"step", step}, {"mlm_eval_loss", report.final_eval_loss},
                  {"train_loss", mean_loss}});
      metrics.write(rec);
    }
  }

  report.checkpoint = config.out_dir / "stage1.ckpt";
  save_checkpoint(model.store, report.checkpoint);
  write_summary(metrics, config, report);
  report.seconds = seconds_since(start);
  return report;
}

StageReport stage2_finetune(const RunConfig& config, std::optional<fs::path> stage1_checkpoint) {
  const auto start = Clock::now();
  fs::create_directories(config.out_dir);
  const Dataset train = load_split(config, "train");
  const Dataset dev = load_split(config, "dev");
  const Dataset test = load_split(config, "test");

  Model model;
  model.vocab = corpus_vocabulary(train);
  model.backbone.emplace(config.backbone, model.store, model.vocab.size());
  model.backbone->enable_classifier(model.store);
  load_required(model.store,
                read_checkpoint(stage1_checkpoint.value_or(config.out_dir / "stage1.ckpt"), "stage-1"),
                {"backbone."});

  const auto train_set = prepare_plain(train, config);
  const auto dev_set = prepare_plain(dev, config);
  const auto test_set = prepare_plain(test, config);

  AdamOptions adam = config.adam;
  adam.lr = config.lr_finetune;
  JsonlWriter metrics(config.out_dir / "metrics_finetune.jsonl");
  const LoopResult loop = train_classifier(model, config, "finetune", train_set, dev_set,
                                           config.steps_finetune, adam, metrics);

  StageReport report;
  report.stage = "finetune";
  report.fingerprint = config.fingerprint();
  report.best_step = loop.best_step;
  report.dev_accuracy = loop.best_dev;
  report.test_accuracy = accuracy_on(model, test_set);
  report.loss_curve = loop.loss_curve;
  report.checkpoint = config.out_dir / "stage2.ckpt";
  save_checkpoint(model.store, report.checkpoint);
  write_summary(metrics, config, report);
  report.seconds = seconds_since(start);
  return report;
}

namespace {

void build_knowledge_model(Model& model, const RunConfig& config, const Dataset& train,
                           const KnowledgeBase& kb) {
  model.vocab = corpus_vocabulary(train);
  model.knowledge_vocab = knowledge_vocabulary(model.vocab, kb);
  model.backbone.emplace(config.backbone, model.store, model.vocab.size());
  model.backbone->enable_classifier(model.store);
  model.injector.emplace(config.injector, model.store, model.knowledge_vocab->size());
}

}  // namespace

StageReport stage3_inject_train(const RunConfig& config, std::optional<fs::path> stage2_checkpoint) {
  const auto start = Clock::now();
  fs::create_directories(config.out_dir);
  const Dataset train = load_split(config, "train");
  const Dataset dev = load_split(config, "dev");
  const Dataset test = load_split(config, "test");
  const KnowledgeBase kb = load_knowledge(config);

  Model model;
  build_knowledge_model(model, config, train, kb);
  load_required(model.store,
                read_checkpoint(stage2_checkpoint.value_or(config.out_dir / "stage2.ckpt"), "stage-2"),
                {"backbone.", "head.cls."});

  // The plain embedding table is not on the knowledge path.
  model.store.set_trainable("backbone.embedding", false);
  if (config.freeze_backbone_stage3) {
    model.store.set_trainable("backbone.", false);
    model.store.set_trainable("head.", false);
  } else {
    model.store.set_lr_scale("backbone.", 0.1);
    model.store.set_lr_scale("head.", 0.1);
  }

  const auto train_set = prepare_knowledge(train, kb, config);
  const auto dev_set = prepare_knowledge(dev, kb, config);
  const auto test_set = prepare_knowledge(test, kb, config);

  AdamOptions adam = config.adam;
  adam.lr = config.lr_inject;
  JsonlWriter metrics(config.out_dir / "metrics_inject.jsonl");
  const LoopResult loop = train_classifier(model, config, "inject", train_set, dev_set,
                                           config.steps_inject, adam, metrics);

  StageReport report;
  report.stage = "inject";
  report.fingerprint = config.fingerprint();
  report.best_step = loop.best_step;
  report.dev_accuracy = loop.best_dev;
  report.test_accuracy = accuracy_on(model, test_set);
  report.loss_curve = loop.loss_curve;
  report.checkpoint = config.out_dir / "stage3.ckpt";
  save_checkpoint(model.store, report.checkpoint);
  write_summary(metrics, config, report);
  report.seconds = seconds_since(start);
  return report;
}

std::vector<AblationRow> ablate_triple_amount(const RunConfig& config) {
  if (config.ablate_budgets.empty()) throw ConfigError("ablate_budgets is empty");
  fs::create_directories(config.out_dir);
  const fs::path stage2 = config.out_dir / "stage2.ckpt";
  if (!fs::exists(stage2)) {
    if (!fs::exists(config.out_dir / "stage1.ckpt")) stage1_pretrain(config);
    stage2_finetune(config);
  }
  std::vector<AblationRow> rows;
  for (std::size_t budget : config.ablate_budgets) {
    ConfigMap raw = config.raw;
    raw.set("triple_budget", std::to_string(budget));
    raw.set("out_dir", (config.out_dir / "ablate" / ("budget_" + std::to_string(budget))).string());
    const StageReport report = stage3_inject_train(make_run_config(raw), stage2);
    rows.push_back({budget, report.dev_accuracy, report.test_accuracy});
  }
  std::ofstream out(config.out_dir / "ablation.tsv", std::ios::trunc);
  if (!out) throw Error("cannot write ablation.tsv");
  out << "#budget\tdev_acc\ttest_acc\n";
  for (const auto& row : rows) {
    out << row.budget << '\t' << json(row.dev_accuracy).dump() << '\t'
        << json(row.test_accuracy).dump() << '\n';
  }
  return rows;
}

EvalReport evaluate(const RunConfig& config, const fs::path& checkpoint, const std::string& split) {
  const auto params = read_checkpoint(checkpoint, "evaluation");
  const Dataset train = load_split(config, "train");
  const Dataset data = load_split(config, split);
  if (data.empty()) throw DataError(split + " split is empty");

  Model model;
  std::vector<Prepared> prepared;
  if (params.count("injector.embedding")) {
    const KnowledgeBase kb = load_knowledge(config);
    build_knowledge_model(model, config, train, kb);
    prepared = prepare_knowledge(data, kb, config);
  } else {
    model.vocab = corpus_vocabulary(train);
    model.backbone.emplace(config.backbone, model.store, model.vocab.size());
    model.backbone->enable_classifier(model.store);
    prepared = prepare_plain(data, config);
  }
  load_required(model.store, params, {""});

  EvalReport report;
  report.split = split;
  report.predictions = predict(model, prepared);
  for (const auto& p : prepared) report.gold.push_back(p.label);
  report.total = report.gold.size();
  for (std::size_t i = 0; i < report.total; ++i)
    report.correct += report.predictions[i] == report.gold[i];
  report.accuracy = accuracy_percent(report.predictions, report.gold);

  fs::create_directories(config.out_dir);
  std::ofstream dump(config.out_dir / ("predictions_" + split + ".tsv"), std::ios::trunc);
  for (std::size_t i = 0; i < report.total; ++i) {
    dump << i << '\t' << config.labels[report.gold[i]] << '\t'
         << config.labels[report.predictions[i]] << '\n';
  }
  JsonlWriter metrics(config.out_dir / ("metrics_eval_" + split + ".jsonl"));
  json rec = base_record("eval", config);
  rec.update({{"split", split}, {"checkpoint", checkpoint.filename().string()},
              {"accuracy", report.accuracy}, {"correct", report.correct}, {"total", report.total}});
  metrics.write(rec);
  return report;
}

}  // namespace kinject
