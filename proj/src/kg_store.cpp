#include "kinject/kg_store.hpp"

#include <charconv>
#include <fstream>

#include "kinject/error.hpp"
#include "kinject/text.hpp"

namespace kinject {

std::string to_string(const Triple& triple) {
  return join_words(triple.subject) + "|" + join_words(triple.predicate) + "|" +
         join_words(triple.object);
}

void TripleStore::add(Triple triple) {
  if (triple.subject.empty() || triple.predicate.empty() || triple.object.empty()) {
    throw DataError("triple with an empty side: " + to_string(triple));
  }
  std::string key = join_words(triple.subject);
  auto [it, inserted] = subject_index_.emplace(key, subject_keys_.size());
  if (inserted) {
    subject_keys_.push_back(std::move(key));
    by_subject_.emplace_back();
  }
  by_subject_[it->second].push_back(triples_.size());
  triples_.push_back(std::move(triple));
}

std::optional<SubjectId> TripleStore::find_subject(const std::string& key) const {
  auto it = subject_index_.find(key);
  if (it == subject_index_.end()) return std::nullopt;
  return SubjectId{it->second};
}

std::span<const std::size_t> TripleStore::triples_of(SubjectId id) const {
  if (id.value >= by_subject_.size()) return {};
  return by_subject_[id.value];
}

TripleStore TripleStore::truncated(std::size_t count) const {
  TripleStore out;
  for (std::size_t i = 0; i < std::min(count, triples_.size()); ++i) out.add(triples_[i]);
  return out;
}

namespace {

bool skip_line(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line.empty() || line.front() == '#';
}

std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no);
}

}  // namespace

TripleStore parse_triples(std::istream& in, const std::string& source) {
  TripleStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(where(source, line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    Triple t{normalize_words(fields[0]), normalize_words(fields[1]),
             normalize_words(fields[2])};
    if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
      throw ParseError(where(source, line_no) + ": empty field");
    }
    store.add(std::move(t));
  }
  return store;
}

TripleStore load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file " + path.string());
  return parse_triples(in, path.string());
}

void write_triples(const TripleStore& store, std::ostream& out) {
  for (const Triple& t : store.triples()) {
    out << join_words(t.subject) << '\t' << join_words(t.predicate) << '\t'
        << join_words(t.object) << '\n';
  }
}

void save_triples(const TripleStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write triple file " + path.string());
  write_triples(store, out);
}

const SurfaceEntry* SurfaceDict::find(const std::string& surface) const {
  auto it = entries_.find(surface);
  return it == entries_.end() ? nullptr : &it->second;
}

SurfaceDictBuild build_surface_dict(const TripleStore& store) {
  SurfaceDictBuild out;
  for (std::size_t s = 0; s < store.subject_count(); ++s) {
    const SubjectId id{s};
    out.dict.insert(store.subject_key(id), {id, store.triples_of(id).size()});
  }
  return out;
}

SurfaceDictBuild build_surface_dict(const TripleStore& store, std::istream& freq_rows,
                                    const std::string& source) {
  SurfaceDictBuild out = build_surface_dict(store);
  // Surfaces already claimed by a frequency row; later rows only win with a
  // strictly higher count.
  std::map<std::string, std::uint64_t> claimed;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(freq_rows, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(where(source, line_no) + ": expected surface<TAB>subject<TAB>count");
    }
    std::uint64_t count = 0;
    const std::string& raw = fields[2];
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), count);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
      throw ParseError(where(source, line_no) + ": bad count '" + raw + "'");
    }
    const std::string surface = join_words(normalize_words(fields[0]));
    const std::string subject = join_words(normalize_words(fields[1]));
    if (surface.empty()) throw ParseError(where(source, line_no) + ": empty surface form");
    const auto id = store.find_subject(subject);
    if (!id) {
      ++out.skipped_rows;
      out.warnings.push_back(where(source, line_no) + ": unknown subject '" + subject +
                             "', row skipped");
      continue;
    }
    auto it = claimed.find(surface);
    if (it == claimed.end() || count > it->second) {
      claimed[surface] = count;
      out.dict.insert(surface, {*id, count});
    }
  }
  return out;
}

SurfaceDictBuild build_surface_dict(const TripleStore& store,
                                    const std::optional<std::filesystem::path>& freq_file) {
  if (!freq_file) return build_surface_dict(store);
  std::ifstream in(*freq_file);
  if (!in) throw Error("cannot open frequency file " + freq_file->string());
  return build_surface_dict(store, in, freq_file->string());
}

std::vector<Triple> facts_for(const TripleStore& store, SubjectId subject, std::size_t cap) {
  std::vector<Triple> out;
  for (std::size_t index : store.triples_of(subject)) {
    if (out.size() >= cap) break;
    out.push_back(store.triples()[index]);
  }
  return out;
}

}  // namespace kinject
