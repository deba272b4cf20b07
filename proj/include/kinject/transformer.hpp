#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kinject/parameters.hpp"
#include "kinject/random.hpp"
#include "kinject/tensor.hpp"

namespace kinject {

inline constexpr double kLayerNormEps = 1e-5;

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
  Tensor w1, b1, w2, b2;
};

struct NormWeights {
  Tensor gain, bias;
};

struct EncoderLayerWeights {
  AttentionWeights attention;
  NormWeights norm1;
  FeedForwardWeights feed_forward;
  NormWeights norm2;
};

struct DecoderLayerWeights {
  AttentionWeights self_attention;
  NormWeights norm1;
  AttentionWeights cross_attention;
  NormWeights norm2;
  FeedForwardWeights feed_forward;
  NormWeights norm3;
};

AttentionWeights make_attention(ParameterStore& store, const std::string& prefix,
                                std::size_t d_model, std::uint64_t seed);
FeedForwardWeights make_feed_forward(ParameterStore& store, const std::string& prefix,
                                     std::size_t d_model, std::size_t d_ff, std::uint64_t seed);
NormWeights make_norm(ParameterStore& store, const std::string& prefix, std::size_t d_model);
EncoderLayerWeights make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                       std::size_t d_model, std::size_t d_ff, std::uint64_t seed);
DecoderLayerWeights make_decoder_layer(ParameterStore& store, const std::string& prefix,
                                       std::size_t d_model, std::size_t d_ff, std::uint64_t seed);

// Dropout is active only when an RNG is supplied.
struct ForwardContext {
  Rng* rng = nullptr;
  double dropout = 0.0;

  Tensor drop(const Tensor& x) const { return rng ? kinject::dropout(x, dropout, *rng) : x; }
};

// Scaled dot-product multi-head attention of `queries` over `memory`. Keys
// whose `key_valid` flag is false receive zero weight.
Tensor multi_head_attention(const Tensor& queries, const Tensor& memory,
                            const AttentionWeights& w, std::size_t heads,
                            const std::vector<bool>* key_valid, const ForwardContext& ctx);

Tensor feed_forward(const Tensor& x, const FeedForwardWeights& w, const ForwardContext& ctx);

Tensor apply_norm(const Tensor& x, const NormWeights& w);

// Post-norm encoder layer: x = norm(x + attn(x)); x = norm(x + ffn(x)).
Tensor encoder_layer(const Tensor& x, const EncoderLayerWeights& w, std::size_t heads,
                     const std::vector<bool>* key_valid, const ForwardContext& ctx);
Tensor encoder_stack(const Tensor& x, std::span<const EncoderLayerWeights> layers,
                     std::size_t heads, const std::vector<bool>* key_valid,
                     const ForwardContext& ctx);

// Post-norm decoder layer without a causal mask.
Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerWeights& w,
                     std::size_t heads, const ForwardContext& ctx);

}  // namespace kinject
