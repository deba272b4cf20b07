#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kinject/parameters.hpp"
#include "kinject/transformer.hpp"

namespace kinject {

struct BackboneConfig {
  std::size_t layers = 2;
  std::size_t d_model = 128;
  std::size_t heads = 2;
  std::size_t d_ff = 512;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Continuous inputs padded to a common length. `valid[b][t]` is false exactly
// at padded positions.
struct TaskBatch {
  std::vector<Tensor> inputs;
  std::vector<std::vector<bool>> valid;
  std::vector<std::size_t> labels;               // classification
  std::vector<std::vector<std::size_t>> tags;    // tagging, per valid position
};

// Pads every sequence with zero rows up to the longest one.
TaskBatch make_batch(std::span<const Tensor> sequences, std::vector<std::size_t> labels = {});

// Encoder stack over embeddings (never token ids) plus swappable task heads.
//
// Parameters: backbone.embedding (table used for the plain, knowledge-free
// input path), backbone.enc.<i>.*, head.cls.*, head.lm.*, head.tag.*.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterStore& store, std::size_t vocab_size);

  const BackboneConfig& config() const { return config_; }
  const Tensor& embedding() const { return embedding_; }

  void enable_classifier(ParameterStore& store);
  void enable_lm_head(ParameterStore& store, std::size_t vocab_size);
  void enable_tagger(ParameterStore& store, std::size_t num_tags);

  // L x d -> L x d with attention restricted to valid keys.
  Tensor encode(const Tensor& x, const std::vector<bool>& valid) const;

  // B x num_classes; mean-pools valid positions.
  Tensor classify(const TaskBatch& batch) const;
  // One L x num_tags matrix per sequence.
  std::vector<Tensor> tag(const TaskBatch& batch) const;
  // L x vocab logits for every position of each sequence.
  std::vector<Tensor> lm_pretrain_forward(std::span<const Tensor> inputs) const;

 private:
  void check_input(const Tensor& x) const;

  BackboneConfig config_;
  Tensor embedding_;
  std::vector<EncoderLayerWeights> layers_;
  std::optional<std::pair<Tensor, Tensor>> classifier_, lm_head_, tagger_;
};

// Cross-entropy over masked positions only. Throws UsageError when no
// position is masked.
Tensor masked_lm_loss(std::span<const Tensor> logits,
                      const std::vector<std::vector<std::size_t>>& masked_positions,
                      const std::vector<std::vector<std::size_t>>& targets);

}  // namespace kinject
