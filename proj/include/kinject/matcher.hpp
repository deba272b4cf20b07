#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kinject/kg_store.hpp"

namespace kinject {

struct SentenceToken {
  std::string surface;  // words joined by single spaces
  std::size_t begin = 0;  // byte span in the source text
  std::size_t end = 0;
  bool merged = false;  // true when several words were merged into this token
};

struct SentenceTokens {
  std::vector<SentenceToken> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> surfaces() const;
};

// Normalized tokens of a sentence, no merging. Throws DataError when the
// text has no tokens.
SentenceTokens tokenize(std::string_view text);

// `index` is the 1-based position in the merged sentence.
struct SubjectMatch {
  std::size_t index = 0;
  SubjectId subject;
  bool operator==(const SubjectMatch&) const = default;
};

struct Fact {
  std::size_t index = 0;
  Triple triple;
  bool operator==(const Fact&) const = default;
};

struct MatchResult {
  std::vector<SubjectMatch> matches;
  std::vector<Fact> facts;
};

struct MatchedSentence {
  SentenceTokens sentence;  // matched n-grams merged into single tokens
  MatchResult result;
};

// Greedy longest-match subject lookup over a word trie compiled from a
// surface dictionary. `max_ngram` bounds the number of words in a match.
class SubjectMatcher {
 public:
  explicit SubjectMatcher(const SurfaceDict& dict);

  MatchedSentence match(const SentenceTokens& tokens, std::size_t max_ngram) const;

 private:
  struct Node {
    std::unordered_map<std::string, std::size_t> next;
    std::optional<SubjectId> subject;
  };

  std::optional<std::size_t> step(std::size_t node, const std::string& word) const;

  std::vector<Node> nodes_;
};

MatchedSentence match_subjects(const SentenceTokens& tokens, const SurfaceDict& dict,
                               std::size_t max_ngram = 4);

// Attaches facts in matched-index order: at most `per_subject_cap` per match,
// then the first `per_sentence_cap` overall.
MatchResult gather_facts(MatchResult result, const TripleStore& store,
                         std::size_t per_subject_cap, std::size_t per_sentence_cap);

}  // namespace kinject
