#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kinject/encoding.hpp"
#include "kinject/matcher.hpp"
#include "kinject/parameters.hpp"
#include "kinject/transformer.hpp"

namespace kinject {

struct InjectorConfig {
  std::size_t layers = 3;
  std::size_t d_model = 128;
  std::size_t heads = 2;
  std::size_t d_ff = 512;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  // 3 layers, width 128, 2 heads.
  static InjectorConfig base();
  // 4 layers, 3 heads; width 132 so the heads split evenly.
  static InjectorConfig large();

  void validate() const;
};

// Knowledge injection layer: an encoder over the spliced sentence+facts
// sequence and a non-autoregressive decoder whose queries are the sentence
// tokens. The output has one row per sentence token.
//
// Parameters: injector.embedding, injector.enc.<i>.*, injector.dec.<i>.*
class Injector {
 public:
  Injector(const InjectorConfig& config, ParameterStore& store, std::size_t vocab_size);

  const InjectorConfig& config() const { return config_; }
  const Tensor& embedding() const { return embedding_; }
  std::span<const EncoderLayerWeights> encoder_layers() const { return encoder_; }
  std::span<const DecoderLayerWeights> decoder_layers() const { return decoder_; }

  // spliced_len x d_model -> spliced_len x d_model
  Tensor encode(const Tensor& embedded, const ForwardContext& ctx = {}) const;
  // sent_len x d_model queries over memory -> sent_len x d_model
  Tensor decode(const Tensor& sentence_embedded, const Tensor& memory,
                const ForwardContext& ctx = {}) const;
  // splice -> embed -> encode -> decode
  Tensor inject(const SentenceTokens& sentence, std::span<const Fact> facts,
                const Vocabulary& vocab, std::size_t max_len = kUnlimited,
                const ForwardContext& ctx = {}) const;
  Tensor inject(const SplicedSequence& spliced, const Vocabulary& vocab,
                const ForwardContext& ctx = {}) const;

 private:
  void check_width(const Tensor& x) const;

  InjectorConfig config_;
  Tensor embedding_;
  std::vector<EncoderLayerWeights> encoder_;
  std::vector<DecoderLayerWeights> decoder_;
};

}  // namespace kinject
