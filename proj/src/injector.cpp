#include "kinject/injector.hpp"

#include "kinject/error.hpp"

namespace kinject {

InjectorConfig InjectorConfig::base() {
  InjectorConfig c;
  c.layers = 3, c.d_model = 128, c.heads = 2, c.d_ff = 4 * 128;
  return c;
}

InjectorConfig InjectorConfig::large() {
  InjectorConfig c;
  c.layers = 4, c.d_model = 132, c.heads = 3, c.d_ff = 4 * 132;
  return c;
}

void InjectorConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || d_ff == 0) {
    throw ConfigError("injector layer, width, head and d_ff counts must be at least 1");
  }
  if (d_model % heads != 0) {
    throw ConfigError("injector d_model " + std::to_string(d_model) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (d_model % 2 != 0) throw ConfigError("injector d_model must be even");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("injector dropout must be in [0, 1)");
}

Injector::Injector(const InjectorConfig& config, ParameterStore& store, std::size_t vocab_size)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  embedding_ = store.create("injector.embedding", {vocab_size, d}, Init::row_uniform, config_.seed);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    encoder_.push_back(make_encoder_layer(store, "injector.enc." + std::to_string(i), d,
                                          config_.d_ff, config_.seed));
  }
  for (std::size_t i = 0; i < config_.layers; ++i) {
    decoder_.push_back(make_decoder_layer(store, "injector.dec." + std::to_string(i), d,
                                          config_.d_ff, config_.seed));
  }
}

void Injector::check_width(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.d_model) {
    throw ConfigError("injector expects width " + std::to_string(config_.d_model) + ", got " +
                      shape_string(x.shape()));
  }
}

Tensor Injector::encode(const Tensor& embedded, const ForwardContext& ctx) const {
  check_width(embedded);
  return encoder_stack(embedded, encoder_, config_.heads, nullptr, ctx);
}

Tensor Injector::decode(const Tensor& sentence_embedded, const Tensor& memory,
                        const ForwardContext& ctx) const {
  check_width(sentence_embedded);
  check_width(memory);
  if (sentence_embedded.rows() > memory.rows()) {
    throw ConsistencyError("decoder queries outnumber the spliced memory");
  }
  Tensor h = sentence_embedded;
  for (const auto& layer : decoder_) h = decoder_layer(h, memory, layer, config_.heads, ctx);
  return h;
}

Tensor Injector::inject(const SplicedSequence& spliced, const Vocabulary& vocab,
                        const ForwardContext& ctx) const {
  SplicedSequence sentence_only;
  sentence_only.sentence_len = spliced.sentence_len;
  sentence_only.tokens.assign(spliced.tokens.begin(),
                              spliced.tokens.begin() + static_cast<std::ptrdiff_t>(spliced.sentence_len));
  const Tensor memory = encode(embed(spliced, vocab, embedding_, config_.d_model), ctx);
  return decode(embed(sentence_only, vocab, embedding_, config_.d_model), memory, ctx);
}

Tensor Injector::inject(const SentenceTokens& sentence, std::span<const Fact> facts,
                        const Vocabulary& vocab, std::size_t max_len,
                        const ForwardContext& ctx) const {
  return inject(splice(sentence, facts, max_len), vocab, ctx);
}

}  // namespace kinject
