#include "kinject/encoding.hpp"

#include <cmath>

#include "kinject/error.hpp"

namespace kinject {

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::sentence: return "SENTENCE";
    case Origin::subject: return "SUBJ";
    case Origin::predicate: return "PRED";
    case Origin::object: return "OBJ";
  }
  return "?";
}

SplicedSequence splice(const SentenceTokens& sentence, std::span<const Fact> facts,
                       std::size_t max_len) {
  const std::size_t n = sentence.size();
  if (n > max_len) {
    throw DataError("sentence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                    std::to_string(max_len));
  }
  SplicedSequence out;
  out.sentence_len = n;
  for (std::size_t i = 0; i < n; ++i) {
    out.tokens.push_back({sentence.tokens[i].surface, i + 1, i + 1, Origin::sentence});
  }
  std::size_t previous = 0;
  for (const Fact& fact : facts) {
    if (fact.index < 1 || fact.index > n) {
      throw ConsistencyError("fact index " + std::to_string(fact.index) +
                             " outside sentence of " + std::to_string(n) + " tokens");
    }
    if (fact.index < previous) {
      throw ConsistencyError("facts not ordered by matched index (" +
                             std::to_string(fact.index) + " after " +
                             std::to_string(previous) + ")");
    }
    previous = fact.index;
  }
  for (const Fact& fact : facts) {
    if (out.size() + fact.triple.token_count() > max_len) break;
    auto append = [&](const std::vector<std::string>& words, Origin origin) {
      for (const auto& w : words) out.tokens.push_back({w, out.size() + 1, fact.index, origin});
    };
    append(fact.triple.subject, Origin::subject);
    append(fact.triple.predicate, Origin::predicate);
    append(fact.triple.object, Origin::object);
  }
  return out;
}

std::vector<double> sinusoidal_code(std::size_t pos, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("d_model must be a positive even number, got " + std::to_string(d_model));
  }
  std::vector<double> code(d_model);
  const double p = static_cast<double>(pos);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double angle =
        p / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    code[2 * i] = std::sin(angle);
    code[2 * i + 1] = std::cos(angle);
  }
  return code;
}

std::vector<double> position_code(std::size_t alpha, std::size_t beta, std::size_t d_model) {
  if (alpha < 1 || beta < 1) throw ConfigError("position indices are 1-based");
  return sinusoidal_code(alpha + beta, d_model);
}

Vocabulary::Vocabulary() {
  for (const char* reserved : {"<pad>", "<unk>", "<mask>"}) add(reserved);
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const SplicedSequence& seq) const {
  std::vector<std::size_t> out;
  out.reserve(seq.size());
  for (const auto& t : seq.tokens) out.push_back(id(t.text));
  return out;
}

Tensor embed_ids(const SplicedSequence& seq, std::span<const std::size_t> ids,
                 const Tensor& table, std::size_t d_model) {
  if (table.rank() != 2 || table.cols() != d_model) {
    throw ConfigError("embedding table " + shape_string(table.shape()) +
                      " does not have width " + std::to_string(d_model));
  }
  std::vector<double> codes;
  codes.reserve(seq.size() * d_model);
  for (const auto& t : seq.tokens) {
    const auto code = position_code(t.alpha, t.beta, d_model);
    codes.insert(codes.end(), code.begin(), code.end());
  }
  return add(gather_rows(table, ids), Tensor::constant({seq.size(), d_model}, std::move(codes)));
}

Tensor embed(const SplicedSequence& seq, const Vocabulary& vocab, const Tensor& table,
             std::size_t d_model) {
  if (table.rank() != 2 || table.rows() != vocab.size()) {
    throw ConfigError("embedding table " + shape_string(table.shape()) +
                      " does not match vocabulary of " + std::to_string(vocab.size()));
  }
  const auto ids = vocab.ids(seq);
  return embed_ids(seq, ids, table, d_model);
}

}  // namespace kinject
