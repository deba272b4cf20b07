#include <doctest.h>

#include <sstream>

#include "kinject/error.hpp"
#include "kinject/matcher.hpp"
#include "oracles.hpp"

using namespace kinject;
using namespace kinject::testing;

namespace {

using Words = std::vector<std::string>;

TripleStore example_store() {
  std::istringstream in(
      "Xiaomi\tis_a\tscience and technology company\n"
      "Hong Kong\tis_a\tcity\n"
      "Xiaomi\tfounded_by\tLei Jun\n");
  return parse_triples(in, "kg");
}

Words subject_keys(const MatchedSentence& m, const TripleStore& store) {
  Words out;
  for (const auto& s : m.result.matches) out.push_back(store.subject_key(s.subject));
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Xiaomi listed in Hong Kong").surfaces() ==
        Words{"xiaomi", "listed", "in", "hong", "kong"});
  CHECK(tokenize("Hello.").surfaces() == Words{"hello"});
  CHECK(tokenize("  a  b ").surfaces() == Words{"a", "b"});
  CHECK_THROWS_AS(tokenize("   \t "), DataError);
  CHECK_THROWS_AS(tokenize(""), DataError);
}

TEST_CASE("tokenize keeps ordered spans into the source") {
  const std::string text = "  (Hong) Kong, again!";
  const auto t = tokenize(text);
  REQUIRE(t.size() == 3);
  CHECK(text.substr(t.tokens[0].begin, t.tokens[0].end - t.tokens[0].begin) == "Hong");
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.tokens[i - 1].end <= t.tokens[i].begin);
}

TEST_CASE("the running example merges hong kong") {
  const auto store = example_store();
  const auto dict = build_surface_dict(store).dict;
  const auto m = match_subjects(tokenize("Xiaomi listed in Hong Kong"), dict);
  CHECK(m.sentence.surfaces() == Words{"xiaomi", "listed", "in", "hong kong"});
  REQUIRE(m.result.matches.size() == 2);
  CHECK(m.result.matches[0].index == 1);
  CHECK(m.result.matches[1].index == 4);
  CHECK(subject_keys(m, store) == Words{"xiaomi", "hong kong"});
  CHECK(m.sentence.tokens[3].merged);
  CHECK_FALSE(m.sentence.tokens[0].merged);
}

TEST_CASE("empty dictionary leaves the sentence alone") {
  const auto tokens = tokenize("Xiaomi listed in Hong Kong");
  const auto m = match_subjects(tokens, SurfaceDict{});
  CHECK(m.sentence.surfaces() == tokens.surfaces());
  CHECK(m.result.matches.empty());
}

TEST_CASE("overlapping candidates resolve greedily from the left") {
  TripleStore store;
  store.add({{"new", "york"}, {"is_a"}, {"city"}});
  store.add({{"york", "city"}, {"is_a"}, {"club"}});
  const auto dict = build_surface_dict(store).dict;
  const auto m = match_subjects(tokenize("new york city"), dict);
  CHECK(m.sentence.surfaces() == Words{"new york", "city"});
  CHECK(subject_keys(m, store) == Words{"new york"});
  const auto oracle = brute_force_match({"new", "york", "city"}, {"new york", "york city"}, 4);
  CHECK(oracle.merged == m.sentence.surfaces());
}

TEST_CASE("max_ngram bounds the words in a match") {
  TripleStore store;
  store.add({{"a", "b", "c"}, {"p"}, {"o"}});
  store.add({{"a"}, {"p"}, {"o"}});
  const auto dict = build_surface_dict(store).dict;
  CHECK(match_subjects(tokenize("a b c"), dict, 3).sentence.surfaces() == Words{"a b c"});
  CHECK(match_subjects(tokenize("a b c"), dict, 2).sentence.surfaces() == Words{"a", "b", "c"});
  CHECK_THROWS_AS(match_subjects(tokenize("a"), dict, 0), ConfigError);
}

TEST_CASE("merged span covers the source words") {
  const auto store = example_store();
  const auto dict = build_surface_dict(store).dict;
  const std::string text = "Xiaomi listed in Hong   Kong!";
  const auto m = match_subjects(tokenize(text), dict);
  const auto& hk = m.sentence.tokens[3];
  CHECK(text.substr(hk.begin, hk.end - hk.begin) == "Hong   Kong");
}

TEST_CASE("gather_facts") {
  const auto store = example_store();
  const auto dict = build_surface_dict(store).dict;
  const auto m = match_subjects(tokenize("Xiaomi listed in Hong Kong"), dict);
  const auto facts = gather_facts(m.result, store, 1, 8).facts;
  REQUIRE(facts.size() == 2);
  CHECK(facts[0].index == 1);
  CHECK(facts[0].triple == store.triples()[0]);
  CHECK(facts[1].index == 4);
  CHECK(facts[1].triple == store.triples()[1]);

  const auto capped = gather_facts(m.result, store, 1, 1).facts;
  REQUIRE(capped.size() == 1);
  CHECK(capped[0].index == 1);

  const auto all = gather_facts(m.result, store, 5, 8).facts;
  CHECK(all.size() == 3);
  CHECK(all[1].triple == store.triples()[2]);

  CHECK(gather_facts({}, store, 1, 8).facts.empty());
  CHECK_THROWS_AS(gather_facts(m.result, store, 0, 8), ConfigError);
}

TEST_CASE("greedy matcher equals the brute-force oracle on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_matcher_instance(rng);
    const std::size_t max_ngram = 1 + rng.below(4);
    const auto dict = build_surface_dict(inst.store).dict;
    const auto m = match_subjects(tokenize(join_sentence(inst.words)), dict, max_ngram);
    const auto oracle = brute_force_match(inst.words, inst.surfaces, max_ngram);
    REQUIRE(m.sentence.surfaces() == oracle.merged);
    REQUIRE(m.result.matches.size() == oracle.matches.size());
    for (std::size_t k = 0; k < oracle.matches.size(); ++k) {
      CHECK(m.result.matches[k].index == oracle.matches[k].first);
      CHECK(inst.store.subject_key(m.result.matches[k].subject) == oracle.matches[k].second);
    }
    // merging never changes the concatenated text
    CHECK(join_sentence(m.sentence.surfaces()) == join_sentence(inst.words));
    // facts come in non-decreasing index order, every index is a match
    const auto facts = gather_facts(m.result, inst.store, 1 + rng.below(3), 1 + rng.below(8)).facts;
    for (std::size_t k = 1; k < facts.size(); ++k) CHECK(facts[k - 1].index <= facts[k].index);
    for (const auto& f : facts) {
      bool found = false;
      for (const auto& s : m.result.matches) found |= s.index == f.index;
      CHECK(found);
    }
    // idempotence on the merged sentence
    const auto again = SubjectMatcher(dict).match(m.sentence, max_ngram);
    CHECK(again.sentence.surfaces() == m.sentence.surfaces());
    REQUIRE(again.result.matches.size() == m.result.matches.size());
    for (std::size_t k = 0; k < again.result.matches.size(); ++k) {
      CHECK(again.result.matches[k] == m.result.matches[k]);
    }
  }
}
