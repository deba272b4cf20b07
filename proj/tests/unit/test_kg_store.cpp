#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "kinject/error.hpp"
#include "kinject/kg_store.hpp"
#include "kinject/random.hpp"

using namespace kinject;

namespace {

using Words = std::vector<std::string>;

TripleStore parse(const std::string& text) {
  std::istringstream in(text);
  return parse_triples(in, "kg.tsv");
}

const char* kExampleKg =
    "# example store\n"
    "Xiaomi\tis_a\tscience and technology company\n"
    "Hong Kong\tis_a\tcity\n"
    "Xiaomi\tfounded_by\tLei Jun\n";

}  // namespace

TEST_CASE("parse_triples normalizes each side") {
  const auto store = parse(kExampleKg);
  REQUIRE(store.size() == 3);
  const Triple& t = store.triples()[0];
  CHECK(t.subject == Words{"xiaomi"});
  CHECK(t.predicate == Words{"is_a"});
  CHECK(t.object == Words{"science", "and", "technology", "company"});
  CHECK(store.triples()[1].subject == Words{"hong", "kong"});
  CHECK(store.subject_count() == 2);
}

TEST_CASE("empty input gives an empty store") {
  CHECK(parse("").size() == 0);
  CHECK(parse("# only a comment\n\n").size() == 0);
}

TEST_CASE("parse errors carry the line number") {
  try {
    parse("a\tb\tc\nbad line\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("kg.tsv:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("a\tb\tc\td\n"), ParseError);
  try {
    parse("a\t\tc\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("a\t...\tc\n"), ParseError);
}

TEST_CASE("CRLF lines are accepted") {
  const auto store = parse("a\tb\tc\r\nd\te\tf\r\n");
  CHECK(store.size() == 2);
  CHECK(store.triples()[0].object == Words{"c"});
}

TEST_CASE("surface dictionary defaults to triple counts") {
  const auto store = parse(kExampleKg);
  const auto built = build_surface_dict(store);
  const SurfaceEntry* x = built.dict.find("xiaomi");
  REQUIRE(x != nullptr);
  CHECK(x->frequency == 2);
  CHECK(built.dict.find("hong kong")->frequency == 1);
  CHECK(build_surface_dict(TripleStore{}).dict.empty());
}

TEST_CASE("frequency file overrides and homonyms") {
  const auto store = parse(
      "Apple\tis_a\tfruit\n"
      "Apple Inc\tis_a\tcompany\n"
      "Xiaomi\tis_a\tcompany\n"
      "Xiaomi\tbased_in\tbeijing\n");
  std::istringstream freq(
      "xiaomi\txiaomi\t100\n"
      "apple\tapple\t5\n"
      "apple\tapple inc\t9\n"
      "mi\txiaomi\t3\n"
      "mi\tapple\t3\n"
      "ghost\tnobody\t7\n");
  const auto built = build_surface_dict(store, freq, "freq.tsv");
  CHECK(built.dict.find("xiaomi")->frequency == 100);
  const SurfaceEntry* apple = built.dict.find("apple");
  CHECK(store.subject_key(apple->subject) == "apple inc");
  CHECK(apple->frequency == 9);
  // tie goes to the earlier row
  CHECK(store.subject_key(built.dict.find("mi")->subject) == "xiaomi");
  CHECK(built.skipped_rows == 1);
  REQUIRE(built.warnings.size() == 1);
  CHECK(built.warnings[0].find("freq.tsv:6") != std::string::npos);

  std::istringstream bad("xiaomi\txiaomi\tmany\n");
  CHECK_THROWS_AS(build_surface_dict(store, bad, "freq.tsv"), ParseError);
}

TEST_CASE("facts_for is a prefix of the subject's triples") {
  const auto store = parse(kExampleKg);
  const SubjectId xiaomi = *store.find_subject("xiaomi");
  const auto one = facts_for(store, xiaomi, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == store.triples()[0]);
  CHECK(facts_for(store, xiaomi, 10).size() == 2);
  const auto hk = facts_for(store, *store.find_subject("hong kong"), 1);
  REQUIRE(hk.size() == 1);
  CHECK(to_string(hk[0]) == "hong kong|is_a|city");
  CHECK(facts_for(store, SubjectId{99}, 3).empty());
  CHECK_FALSE(store.find_subject("beijing").has_value());
}

TEST_CASE("round trip through a file keeps order and content") {
  Rng rng(3);
  TripleStore store;
  for (int i = 0; i < 200; ++i) {
    Triple t;
    for (auto* side : {&t.subject, &t.predicate, &t.object}) {
      const std::size_t n = 1 + rng.below(3);
      for (std::size_t k = 0; k < n; ++k) side->push_back("w" + std::to_string(rng.below(40)));
    }
    store.add(t);
  }
  const auto path = std::filesystem::temp_directory_path() / "kinject_roundtrip_kg.tsv";
  save_triples(store, path);
  const auto back = load_triples(path);
  CHECK(back.triples() == store.triples());
  std::filesystem::remove(path);
}

TEST_CASE("every dictionary entry has at least one fact") {
  Rng rng(8);
  TripleStore store;
  for (int i = 0; i < 100; ++i) {
    store.add({{"s" + std::to_string(rng.below(30))}, {"p"}, {"o" + std::to_string(i)}});
  }
  const auto built = build_surface_dict(store);
  for (const auto& [surface, entry] : built.dict.entries()) {
    CHECK_FALSE(facts_for(store, entry.subject, 1).empty());
  }
  const auto again = build_surface_dict(store);
  CHECK(again.dict.size() == built.dict.size());
}

TEST_CASE("truncated keeps the first triples") {
  const auto store = parse(kExampleKg);
  CHECK(store.truncated(0).size() == 0);
  const auto two = store.truncated(2);
  CHECK(two.size() == 2);
  CHECK(two.triples()[1] == store.triples()[1]);
  CHECK(store.truncated(50).size() == 3);
}

TEST_CASE("store rejects an empty side") {
  TripleStore store;
  CHECK_THROWS_AS(store.add({{}, {"p"}, {"o"}}), DataError);
}
