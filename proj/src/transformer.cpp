#include "kinject/transformer.hpp"

#include <cmath>

#include "kinject/error.hpp"

namespace kinject {

namespace {

constexpr double kMaskedScore = -1e9;

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace

AttentionWeights make_attention(ParameterStore& store, const std::string& prefix,
                                std::size_t d, std::uint64_t seed) {
  AttentionWeights w;
  w.wq = store.create(prefix + ".wq", {d, d}, Init::fan_in_uniform, seed);
  w.bq = store.create(prefix + ".bq", {d}, Init::zeros, seed);
  w.wk = store.create(prefix + ".wk", {d, d}, Init::fan_in_uniform, seed);
  w.bk = store.create(prefix + ".bk", {d}, Init::zeros, seed);
  w.wv = store.create(prefix + ".wv", {d, d}, Init::fan_in_uniform, seed);
  w.bv = store.create(prefix + ".bv", {d}, Init::zeros, seed);
  w.wo = store.create(prefix + ".wo", {d, d}, Init::fan_in_uniform, seed);
  w.bo = store.create(prefix + ".bo", {d}, Init::zeros, seed);
  return w;
}

FeedForwardWeights make_feed_forward(ParameterStore& store, const std::string& prefix,
                                     std::size_t d, std::size_t d_ff, std::uint64_t seed) {
  FeedForwardWeights w;
  w.w1 = store.create(prefix + ".w1", {d, d_ff}, Init::fan_in_uniform, seed);
  w.b1 = store.create(prefix + ".b1", {d_ff}, Init::zeros, seed);
  w.w2 = store.create(prefix + ".w2", {d_ff, d}, Init::fan_in_uniform, seed);
  w.b2 = store.create(prefix + ".b2", {d}, Init::zeros, seed);
  return w;
}

NormWeights make_norm(ParameterStore& store, const std::string& prefix, std::size_t d) {
  return {store.create(prefix + ".gain", {d}, Init::ones, 0),
          store.create(prefix + ".bias", {d}, Init::zeros, 0)};
}

EncoderLayerWeights make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                       std::size_t d, std::size_t d_ff, std::uint64_t seed) {
  return {make_attention(store, prefix + ".attn", d, seed), make_norm(store, prefix + ".ln1", d),
          make_feed_forward(store, prefix + ".ff", d, d_ff, seed),
          make_norm(store, prefix + ".ln2", d)};
}

DecoderLayerWeights make_decoder_layer(ParameterStore& store, const std::string& prefix,
                                       std::size_t d, std::size_t d_ff, std::uint64_t seed) {
  return {make_attention(store, prefix + ".self", d, seed), make_norm(store, prefix + ".ln1", d),
          make_attention(store, prefix + ".cross", d, seed), make_norm(store, prefix + ".ln2", d),
          make_feed_forward(store, prefix + ".ff", d, d_ff, seed),
          make_norm(store, prefix + ".ln3", d)};
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& memory,
                            const AttentionWeights& w, std::size_t heads,
                            const std::vector<bool>* key_valid, const ForwardContext& ctx) {
  const std::size_t d = w.wq.rows();
  if (queries.cols() != d || memory.cols() != d) {
    throw ConfigError("attention width " + std::to_string(d) + " does not match inputs " +
                      shape_string(queries.shape()) + " / " + shape_string(memory.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor q = affine(queries, w.wq, w.bq);
  const Tensor k = affine(memory, w.wk, w.bk);
  const Tensor v = affine(memory, w.wv, w.bv);

  Tensor mask;
  if (key_valid) {
    if (key_valid->size() != memory.rows()) {
      throw DimensionError("key mask length does not match memory rows");
    }
    std::vector<double> bias(memory.rows());
    for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = (*key_valid)[j] ? 0.0 : kMaskedScore;
    mask = Tensor::constant({1, memory.rows()}, std::move(bias));
  }

  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask.defined()) scores = add(scores, mask);
    const Tensor weights = ctx.drop(softmax(scores, 1));
    outputs.push_back(matmul(weights, vh));
  }
  const Tensor merged = heads == 1 ? outputs[0] : concat_cols(outputs);
  return affine(merged, w.wo, w.bo);
}

Tensor feed_forward(const Tensor& x, const FeedForwardWeights& w, const ForwardContext& ctx) {
  const Tensor hidden = ctx.drop(gelu(affine(x, w.w1, w.b1)));
  return affine(hidden, w.w2, w.b2);
}

Tensor apply_norm(const Tensor& x, const NormWeights& w) {
  return layer_norm(x, w.gain, w.bias, kLayerNormEps);
}

Tensor encoder_layer(const Tensor& x, const EncoderLayerWeights& w, std::size_t heads,
                     const std::vector<bool>* key_valid, const ForwardContext& ctx) {
  const Tensor h = apply_norm(add(x, multi_head_attention(x, x, w.attention, heads, key_valid, ctx)),
                              w.norm1);
  return apply_norm(add(h, feed_forward(h, w.feed_forward, ctx)), w.norm2);
}

Tensor encoder_stack(const Tensor& x, std::span<const EncoderLayerWeights> layers,
                     std::size_t heads, const std::vector<bool>* key_valid,
                     const ForwardContext& ctx) {
  Tensor h = x;
  for (const auto& layer : layers) h = encoder_layer(h, layer, heads, key_valid, ctx);
  return h;
}

Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerWeights& w,
                     std::size_t heads, const ForwardContext& ctx) {
  Tensor h = apply_norm(add(x, multi_head_attention(x, x, w.self_attention, heads, nullptr, ctx)),
                        w.norm1);
  h = apply_norm(add(h, multi_head_attention(h, memory, w.cross_attention, heads, nullptr, ctx)),
                 w.norm2);
  return apply_norm(add(h, feed_forward(h, w.feed_forward, ctx)), w.norm3);
}

}  // namespace kinject
