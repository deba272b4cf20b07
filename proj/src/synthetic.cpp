#include "kinject/synthetic.hpp"

#include <array>
#include <set>

#include "kinject/error.hpp"
#include "kinject/random.hpp"
#include "kinject/text.hpp"

namespace kinject {

namespace {

constexpr std::array<const char*, 8> kTemplates = {
    "i watched {} last night",
    "{} was on tv again",
    "my friend recommended {} to me",
    "we talked about {} after dinner",
    "the cinema showed {} today",
    "{} is playing this weekend",
    "everyone keeps mentioning {}",
    "she finally saw {} yesterday",
};

// Genres 0,1 -> label 0; genres 2,3 -> label 1.
constexpr std::array<const char*, 4> kGenres = {"comedy", "musical", "horror", "thriller"};

constexpr std::array<const char*, 4> kPositive = {"great", "wonderful", "brilliant", "moving"};
constexpr std::array<const char*, 4> kNegative = {"awful", "boring", "dreadful", "clumsy"};
constexpr std::array<const char*, 4> kNoisePredicates = {"related_to", "made_by", "located_in",
                                                         "released_in"};

std::string fill(std::string_view pattern, const std::string& slot) {
  std::string out(pattern);
  const auto pos = out.find("{}");
  return out.replace(pos, 2, slot);
}

std::string make_word(Rng& rng) {
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::string w;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(kOnsets.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  w += kOnsets[rng.below(kOnsets.size())];
  return w;
}

Triple triple_of(const std::string& s, const std::string& p, const std::string& o) {
  return {normalize_words(s), normalize_words(p), normalize_words(o)};
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& options) {
  if (options.entities < 10) throw ConfigError("synthetic corpus needs at least 10 entities");
  if (options.sentences_per_entity == 0) throw ConfigError("sentences_per_entity must be positive");
  Rng rng(options.seed, "synthetic");

  std::set<std::string> reserved;
  for (const char* t : kTemplates)
    for (const auto& w : normalize_words(fill(t, ""))) reserved.insert(w);
  for (auto list : {kPositive, kNegative})
    for (const char* w : list) reserved.insert(w);
  for (const char* g : kGenres) reserved.insert(g);

  struct Entity {
    std::string name;
    std::size_t label;
    std::size_t genre;
    bool two_words;
  };
  std::vector<Entity> entities;
  auto fresh_word = [&] {
    while (true) {
      std::string w = make_word(rng);
      if (reserved.insert(w).second) return w;
    }
  };
  for (std::size_t i = 0; i < options.entities; ++i) {
    Entity e;
    e.label = i % 2;
    e.two_words = (i / 2) % 5 == 0;
    e.name = e.two_words ? fresh_word() + " " + fresh_word() : fresh_word();
    e.genre = 2 * e.label + rng.below(2);
    entities.push_back(std::move(e));
  }

  SyntheticCorpus corpus;
  if (options.kind == SyntheticKind::knowledge) {
    corpus.labels = {"0", "1"};
  } else {
    corpus.labels = {"neg", "pos"};
  }
  corpus.train.split = "train";
  corpus.dev.split = "dev";
  corpus.test.split = "test";

  // Stratified split by (label, two_words).
  for (std::size_t label = 0; label < 2; ++label) {
    for (bool two : {false, true}) {
      std::vector<std::size_t> group;
      for (std::size_t i = 0; i < entities.size(); ++i)
        if (entities[i].label == label && entities[i].two_words == two) group.push_back(i);
      rng.shuffle(group);
      const std::size_t n_train = group.size() * 6 / 10;
      const std::size_t n_dev = (group.size() - n_train) / 2;
      for (std::size_t k = 0; k < group.size(); ++k) {
        const Entity& e = entities[group[k]];
        Dataset& target = k < n_train ? corpus.train : k < n_train + n_dev ? corpus.dev : corpus.test;
        for (std::size_t s = 0; s < options.sentences_per_entity; ++s) {
          std::string text = fill(kTemplates[s % kTemplates.size()], e.name);
          std::size_t y = e.label;
          if (options.kind == SyntheticKind::lexical) {
            y = rng.below(2);
            const auto& words = y == 1 ? kPositive : kNegative;
            text += std::string(" and it was ") + words[rng.below(words.size())];
          }
          target.examples.push_back({std::move(text), y});
        }
      }
    }
  }
  rng.shuffle(corpus.train.examples);
  rng.shuffle(corpus.dev.examples);
  rng.shuffle(corpus.test.examples);

  std::vector<std::size_t> order(entities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i : order) {
    corpus.kg.add(triple_of(entities[i].name, "has_genre", kGenres[entities[i].genre]));
  }
  corpus.informative_triples = corpus.kg.size();

  // Noise: facts about template words and extra facts about entities, none
  // correlated with the label.
  std::vector<std::string> noise_subjects;
  for (const char* t : kTemplates)
    for (const auto& w : normalize_words(fill(t, "")))
      if (std::find(noise_subjects.begin(), noise_subjects.end(), w) == noise_subjects.end())
        noise_subjects.push_back(w);
  for (const auto& e : entities) noise_subjects.push_back(e.name);
  for (std::size_t i = 0; i < options.noise_triples; ++i) {
    const std::string& subject = noise_subjects[rng.below(noise_subjects.size())];
    const char* predicate = kNoisePredicates[rng.below(kNoisePredicates.size())];
    corpus.kg.add(triple_of(subject, predicate, "item_" + std::to_string(rng.below(200))));
  }
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(corpus.train, corpus.labels, dir / "train.tsv");
  save_dataset(corpus.dev, corpus.labels, dir / "dev.tsv");
  save_dataset(corpus.test, corpus.labels, dir / "test.tsv");
  save_triples(corpus.kg, dir / "kg.tsv");
}

}  // namespace kinject
