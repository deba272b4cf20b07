#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kinject/matcher.hpp"
#include "kinject/tensor.hpp"

namespace kinject {

enum class Origin { sentence, subject, predicate, object };
std::string_view to_string(Origin origin);

// A token of the spliced sequence with its dual position index: `alpha`
// counts along the whole sequence, `beta` is the sentence position of the
// word the token belongs to (its own position for sentence tokens). Both are
// 1-based.
struct SplicedToken {
  std::string text;
  std::size_t alpha = 0;
  std::size_t beta = 0;
  Origin origin = Origin::sentence;
};

// Sentence tokens first, then each fact flattened as S, P, O words, facts in
// the order of their matched sentence positions.
struct SplicedSequence {
  std::vector<SplicedToken> tokens;
  std::size_t sentence_len = 0;

  std::size_t size() const { return tokens.size(); }
};

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

// Facts must be ordered by index and point inside the sentence
// (ConsistencyError otherwise). When the result would exceed `max_len`,
// trailing facts are dropped whole; a sentence longer than `max_len` is a
// DataError.
SplicedSequence splice(const SentenceTokens& sentence, std::span<const Fact> facts,
                       std::size_t max_len = kUnlimited);

// sin/cos code of an integer position, even components sin, odd cos.
std::vector<double> sinusoidal_code(std::size_t pos, std::size_t d_model);
// Code of pos = alpha + beta.
std::vector<double> position_code(std::size_t alpha, std::size_t beta, std::size_t d_model);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kMask = 2;

  Vocabulary();

  // Returns the id, adding the token if new.
  std::size_t add(const std::string& token);
  // UNK for unknown tokens.
  std::size_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  std::vector<std::size_t> ids(const SplicedSequence& seq) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Row t = table[id_t] + position_code(alpha_t, beta_t).
Tensor embed(const SplicedSequence& seq, const Vocabulary& vocab, const Tensor& table,
             std::size_t d_model);
// Same with explicit ids (e.g. after masking).
Tensor embed_ids(const SplicedSequence& seq, std::span<const std::size_t> ids,
                 const Tensor& table, std::size_t d_model);

}  // namespace kinject
