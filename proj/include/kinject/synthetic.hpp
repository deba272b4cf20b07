#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kinject/dataset.hpp"
#include "kinject/kg_store.hpp"

namespace kinject {

enum class SyntheticKind {
  // Label = a genre attribute stored only in the knowledge graph. Dev/test
  // entities never occur in training text, so text alone carries no label
  // signal.
  knowledge,
  // Label = sentiment word present in the text; separable without a KG.
  lexical,
};

struct SyntheticOptions {
  SyntheticKind kind = SyntheticKind::knowledge;
  std::size_t entities = 100;
  std::size_t noise_triples = 900;
  std::size_t sentences_per_entity = 8;
  std::uint64_t seed = 7;
};

// Splits are stratified by (label, words in entity name) 60/20/20, so every
// template sees each label equally often in dev and test.
struct SyntheticCorpus {
  std::vector<std::string> labels;
  Dataset train, dev, test;
  // One informative triple per entity (in shuffled entity order) followed by
  // the noise triples.
  TripleStore kg;
  std::size_t informative_triples = 0;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

// Writes train.tsv, dev.tsv, test.tsv and kg.tsv into `dir`.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace kinject
