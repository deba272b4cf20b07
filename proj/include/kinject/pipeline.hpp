#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kinject/config.hpp"
#include "kinject/dataset.hpp"
#include "kinject/encoding.hpp"
#include "kinject/kg_store.hpp"
#include "kinject/matcher.hpp"

namespace kinject {

// Triple store cut to the configured budget plus its surface dictionary.
struct KnowledgeBase {
  TripleStore triples;
  SurfaceDict dict;
  std::size_t skipped_rows = 0;
  std::vector<std::string> warnings;

  // tokenize -> match_subjects -> gather_facts
  MatchedSentence lookup(std::string_view text, std::size_t max_ngram,
                         std::size_t per_subject_cap, std::size_t per_sentence_cap) const;

 private:
  friend KnowledgeBase make_knowledge_base(TripleStore, const std::optional<std::filesystem::path>&);
  std::optional<SubjectMatcher> matcher_;
};

KnowledgeBase make_knowledge_base(TripleStore triples,
                                  const std::optional<std::filesystem::path>& freq_path);
// Empty knowledge base when the config names no KG.
KnowledgeBase load_knowledge(const RunConfig& config);

// Words of the training texts, in first-occurrence order after the reserved
// ids.
Vocabulary corpus_vocabulary(const Dataset& train);
// `corpus` followed by every KG word, subject key and surface form.
Vocabulary knowledge_vocabulary(const Vocabulary& corpus, const KnowledgeBase& kb);

struct StageReport {
  std::string stage;
  std::string fingerprint;
  std::filesystem::path checkpoint;
  std::size_t best_step = 0;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  // Masked-LM loss on a fixed masking of the corpus (stage 1 only).
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  std::vector<double> loss_curve;  // mean training loss per evaluation interval
  double seconds = 0.0;            // wall clock; never written to metrics files
};

// Stage 1: masked-token pretraining of the backbone on the training texts.
// Writes <out_dir>/stage1.ckpt and metrics_pretrain.jsonl.
StageReport stage1_pretrain(const RunConfig& config);

// Stage 2: task fine-tuning on plain embeddings (no injector), starting from
// `stage1_checkpoint` (default <out_dir>/stage1.ckpt). Keeps the dev-best
// parameters in <out_dir>/stage2.ckpt.
StageReport stage2_finetune(const RunConfig& config,
                            std::optional<std::filesystem::path> stage1_checkpoint = {});

// Stage 3: trains a freshly initialized injector on the task through the
// stage-2 backbone (frozen unless freeze_backbone_stage3 is false, then
// trained at 0.1x lr). Writes <out_dir>/stage3.ckpt.
StageReport stage3_inject_train(const RunConfig& config,
                                std::optional<std::filesystem::path> stage2_checkpoint = {});

struct AblationRow {
  std::size_t budget = 0;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Stage 3 once per budget in config.ablate_budgets, sharing stages 1-2 (run
// first when <out_dir>/stage2.ckpt is missing). Writes <out_dir>/ablation.tsv.
std::vector<AblationRow> ablate_triple_amount(const RunConfig& config);

struct EvalReport {
  std::string split;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> gold;
  std::vector<std::size_t> predictions;
};

// Accuracy in percent; DataError on empty input.
double accuracy_percent(std::span<const std::size_t> predictions,
                        std::span<const std::size_t> gold);

// Evaluates a stage-2 (plain) or stage-3 (knowledge) checkpoint on "train",
// "dev" or "test". Writes predictions_<split>.tsv and metrics_eval_<split>.jsonl
// into out_dir.
EvalReport evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                    const std::string& split);

}  // namespace kinject
