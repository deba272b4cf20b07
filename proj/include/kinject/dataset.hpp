#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace kinject {

struct Example {
  std::string text;
  std::size_t label = 0;  // index into the declared label set
};

struct Dataset {
  std::string split;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

// `label<TAB>text` lines; labels must come from `labels`. Blank lines and
// '#' comments are skipped.
Dataset parse_dataset(std::istream& in, const std::string& split,
                      const std::vector<std::string>& labels,
                      const std::string& source = "<dataset>");
Dataset load_dataset(const std::filesystem::path& path, const std::string& split,
                     const std::vector<std::string>& labels);
void save_dataset(const Dataset& data, const std::vector<std::string>& labels,
                  const std::filesystem::path& path);

}  // namespace kinject
