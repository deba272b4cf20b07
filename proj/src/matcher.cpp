#include "kinject/matcher.hpp"

#include "kinject/error.hpp"
#include "kinject/text.hpp"

namespace kinject {

std::vector<std::string> SentenceTokens::surfaces() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

SentenceTokens tokenize(std::string_view text) {
  SentenceTokens out;
  for (auto& raw : normalize(text)) {
    out.tokens.push_back({std::move(raw.text), raw.begin, raw.end, false});
  }
  if (out.tokens.empty()) throw DataError("empty sentence");
  return out;
}

SubjectMatcher::SubjectMatcher(const SurfaceDict& dict) : nodes_(1) {
  for (const auto& [surface, entry] : dict.entries()) {
    std::size_t node = 0;
    for (const std::string& word : split(surface, ' ')) {
      auto it = nodes_[node].next.find(word);
      if (it == nodes_[node].next.end()) {
        const std::size_t child = nodes_.size();
        nodes_[node].next.emplace(word, child);
        nodes_.emplace_back();
        node = child;
      } else {
        node = it->second;
      }
    }
    nodes_[node].subject = entry.subject;
  }
}

std::optional<std::size_t> SubjectMatcher::step(std::size_t node,
                                                const std::string& word) const {
  auto it = nodes_[node].next.find(word);
  if (it == nodes_[node].next.end()) return std::nullopt;
  return it->second;
}

MatchedSentence SubjectMatcher::match(const SentenceTokens& tokens,
                                      std::size_t max_ngram) const {
  if (max_ngram == 0) throw ConfigError("max_ngram must be at least 1");
  MatchedSentence out;
  const auto& in = tokens.tokens;
  std::size_t i = 0;
  while (i < in.size()) {
    // Walk the trie token by token; a token may already hold several words.
    std::size_t node = 0, words = 0, best_end = 0;
    std::optional<SubjectId> best;
    for (std::size_t j = i; j < in.size(); ++j) {
      bool alive = true;
      for (const std::string& word : split(in[j].surface, ' ')) {
        if (++words > max_ngram) { alive = false; break; }
        auto next = step(node, word);
        if (!next) { alive = false; break; }
        node = *next;
      }
      if (!alive) break;
      if (nodes_[node].subject) {
        best = nodes_[node].subject;
        best_end = j + 1;
      }
    }
    if (best) {
      SentenceToken merged = in[i];
      for (std::size_t j = i + 1; j < best_end; ++j) merged.surface += " " + in[j].surface;
      merged.end = in[best_end - 1].end;
      merged.merged = merged.surface.find(' ') != std::string::npos;
      out.sentence.tokens.push_back(std::move(merged));
      out.result.matches.push_back({out.sentence.size(), *best});
      i = best_end;
    } else {
      out.sentence.tokens.push_back(in[i]);
      ++i;
    }
  }
  return out;
}

MatchedSentence match_subjects(const SentenceTokens& tokens, const SurfaceDict& dict,
                               std::size_t max_ngram) {
  return SubjectMatcher(dict).match(tokens, max_ngram);
}

MatchResult gather_facts(MatchResult result, const TripleStore& store,
                         std::size_t per_subject_cap, std::size_t per_sentence_cap) {
  if (per_subject_cap == 0 || per_sentence_cap == 0) {
    throw ConfigError("fact caps must be at least 1");
  }
  result.facts.clear();
  for (const SubjectMatch& m : result.matches) {
    for (Triple& t : facts_for(store, m.subject, per_subject_cap)) {
      if (result.facts.size() >= per_sentence_cap) return result;
      result.facts.push_back({m.index, std::move(t)});
    }
  }
  return result;
}

}  // namespace kinject
