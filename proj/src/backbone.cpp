#include "kinject/backbone.hpp"

#include <algorithm>

#include "kinject/error.hpp"

namespace kinject {

void BackboneConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || d_ff == 0 || num_classes == 0) {
    throw ConfigError("backbone counts must be at least 1");
  }
  if (d_model % heads != 0) {
    throw ConfigError("backbone d_model " + std::to_string(d_model) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (d_model % 2 != 0) throw ConfigError("backbone d_model must be even");
}

TaskBatch make_batch(std::span<const Tensor> sequences, std::vector<std::size_t> labels) {
  TaskBatch batch;
  std::size_t longest = 0;
  for (const Tensor& s : sequences) longest = std::max(longest, s.rows());
  for (const Tensor& s : sequences) {
    const std::size_t pad = longest - s.rows();
    std::vector<bool> valid(longest, true);
    std::fill(valid.begin() + static_cast<std::ptrdiff_t>(s.rows()), valid.end(), false);
    if (pad == 0) {
      batch.inputs.push_back(s);
    } else {
      const Tensor parts[] = {s, Tensor::zeros({pad, s.cols()})};
      batch.inputs.push_back(concat_rows(parts));
    }
    batch.valid.push_back(std::move(valid));
  }
  batch.labels = std::move(labels);
  return batch;
}

Backbone::Backbone(const BackboneConfig& config, ParameterStore& store, std::size_t vocab_size)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  embedding_ = store.create("backbone.embedding", {vocab_size, d}, Init::row_uniform, config_.seed);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    layers_.push_back(make_encoder_layer(store, "backbone.enc." + std::to_string(i), d,
                                         config_.d_ff, config_.seed));
  }
}

void Backbone::enable_classifier(ParameterStore& store) {
  classifier_.emplace(
      store.create("head.cls.w", {config_.d_model, config_.num_classes}, Init::fan_in_uniform,
                   config_.seed),
      store.create("head.cls.b", {config_.num_classes}, Init::zeros, config_.seed));
}

void Backbone::enable_lm_head(ParameterStore& store, std::size_t vocab_size) {
  lm_head_.emplace(store.create("head.lm.w", {config_.d_model, vocab_size}, Init::fan_in_uniform,
                                config_.seed),
                   store.create("head.lm.b", {vocab_size}, Init::zeros, config_.seed));
}

void Backbone::enable_tagger(ParameterStore& store, std::size_t num_tags) {
  tagger_.emplace(store.create("head.tag.w", {config_.d_model, num_tags}, Init::fan_in_uniform,
                               config_.seed),
                  store.create("head.tag.b", {num_tags}, Init::zeros, config_.seed));
}

void Backbone::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.d_model) {
    throw ConfigError("backbone expects width " + std::to_string(config_.d_model) +
                      " embeddings, got " + shape_string(x.shape()));
  }
}

Tensor Backbone::encode(const Tensor& x, const std::vector<bool>& valid) const {
  check_input(x);
  return encoder_stack(x, layers_, config_.heads, &valid, ForwardContext{});
}

Tensor Backbone::classify(const TaskBatch& batch) const {
  if (!classifier_) throw UsageError("classifier head not enabled");
  std::vector<Tensor> pooled;
  pooled.reserve(batch.inputs.size());
  for (std::size_t b = 0; b < batch.inputs.size(); ++b) {
    pooled.push_back(masked_mean_rows(encode(batch.inputs[b], batch.valid[b]), batch.valid[b]));
  }
  return add(matmul(concat_rows(pooled), classifier_->first), classifier_->second);
}

std::vector<Tensor> Backbone::tag(const TaskBatch& batch) const {
  if (!tagger_) throw UsageError("tagging head not enabled");
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < batch.inputs.size(); ++b) {
    out.push_back(add(matmul(encode(batch.inputs[b], batch.valid[b]), tagger_->first),
                      tagger_->second));
  }
  return out;
}

std::vector<Tensor> Backbone::lm_pretrain_forward(std::span<const Tensor> inputs) const {
  if (!lm_head_) throw UsageError("language-model head not enabled");
  std::vector<Tensor> out;
  for (const Tensor& x : inputs) {
    const std::vector<bool> valid(x.rows(), true);
    out.push_back(add(matmul(encode(x, valid), lm_head_->first), lm_head_->second));
  }
  return out;
}

Tensor masked_lm_loss(std::span<const Tensor> logits,
                      const std::vector<std::vector<std::size_t>>& masked_positions,
                      const std::vector<std::vector<std::size_t>>& targets) {
  if (masked_positions.size() != logits.size() || targets.size() != logits.size()) {
    throw DimensionError("masked_lm_loss: batch sizes differ");
  }
  std::vector<Tensor> rows;
  std::vector<std::size_t> flat_targets;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (masked_positions[b].size() != targets[b].size()) {
      throw DimensionError("masked_lm_loss: positions and targets differ in length");
    }
    if (masked_positions[b].empty()) continue;
    rows.push_back(gather_rows(logits[b], masked_positions[b]));
    flat_targets.insert(flat_targets.end(), targets[b].begin(), targets[b].end());
  }
  if (rows.empty()) throw UsageError("no masked positions in batch");
  return cross_entropy(concat_rows(rows), flat_targets);
}

}  // namespace kinject
