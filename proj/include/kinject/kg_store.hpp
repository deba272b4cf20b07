#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kinject {

// One (subject, predicate, object) fact; each side is a normalized word list.
struct Triple {
  std::vector<std::string> subject;
  std::vector<std::string> predicate;
  std::vector<std::string> object;

  std::size_t token_count() const {
    return subject.size() + predicate.size() + object.size();
  }
  bool operator==(const Triple&) const = default;
};

std::string to_string(const Triple& triple);  // "s|p|o"

// Index of a distinct subject in a TripleStore, in first-occurrence order.
struct SubjectId {
  std::size_t value = 0;
  auto operator<=>(const SubjectId&) const = default;
};

class TripleStore {
 public:
  void add(Triple triple);

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }
  std::size_t subject_count() const { return subject_keys_.size(); }

  // Key = subject words joined by single spaces.
  std::optional<SubjectId> find_subject(const std::string& key) const;
  const std::string& subject_key(SubjectId id) const { return subject_keys_.at(id.value); }
  // Triple indices for a subject, insertion order; empty for unknown ids.
  std::span<const std::size_t> triples_of(SubjectId id) const;

  // The first `count` triples, as if the file had been cut there.
  TripleStore truncated(std::size_t count) const;

 private:
  std::vector<Triple> triples_;
  std::vector<std::string> subject_keys_;
  std::unordered_map<std::string, std::size_t> subject_index_;
  std::vector<std::vector<std::size_t>> by_subject_;
};

// `S<TAB>P<TAB>O` lines; '#' comments and blank lines skipped.
TripleStore parse_triples(std::istream& in, const std::string& source = "<stream>");
TripleStore load_triples(const std::filesystem::path& path);
void write_triples(const TripleStore& store, std::ostream& out);
void save_triples(const TripleStore& store, const std::filesystem::path& path);

struct SurfaceEntry {
  SubjectId subject;
  std::uint64_t frequency = 0;
  bool operator==(const SurfaceEntry&) const = default;
};

// Surface form (normalized words joined by spaces) -> subject.
class SurfaceDict {
 public:
  const std::map<std::string, SurfaceEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const SurfaceEntry* find(const std::string& surface) const;

  void insert(std::string surface, SurfaceEntry entry) {
    entries_.insert_or_assign(std::move(surface), entry);
  }

 private:
  std::map<std::string, SurfaceEntry> entries_;
};

struct SurfaceDictBuild {
  SurfaceDict dict;
  std::size_t skipped_rows = 0;
  std::vector<std::string> warnings;
};

// One entry per subject surface form. Without a frequency file the
// frequency is the subject's triple count. Rows of `freq_file`
// (`surface<TAB>subject<TAB>count`) replace the default entry for their
// surface; when several subjects share a surface the highest count wins,
// ties going to the earliest row. Rows naming unknown subjects are skipped
// and reported.
SurfaceDictBuild build_surface_dict(const TripleStore& store);
SurfaceDictBuild build_surface_dict(const TripleStore& store, std::istream& freq_rows,
                                    const std::string& source = "<stream>");
SurfaceDictBuild build_surface_dict(const TripleStore& store,
                                    const std::optional<std::filesystem::path>& freq_file);

// First `cap` triples of `subject` in store order.
std::vector<Triple> facts_for(const TripleStore& store, SubjectId subject, std::size_t cap);

}  // namespace kinject
