#include "kinject/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "kinject/error.hpp"

namespace kinject {

Dataset parse_dataset(std::istream& in, const std::string& split,
                      const std::vector<std::string>& labels, const std::string& source) {
  Dataset data{split, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = source + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw DataError(where + ": expected label<TAB>text");
    const std::string label = line.substr(0, tab);
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw DataError(where + ": label '" + label + "' not declared");
    std::string text = line.substr(tab + 1);
    if (text.find_first_not_of(" \t") == std::string::npos) {
      throw DataError(where + ": empty text");
    }
    data.examples.push_back({std::move(text), static_cast<std::size_t>(it - labels.begin())});
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& split,
                     const std::vector<std::string>& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + split + " split " + path.string());
  return parse_dataset(in, split, labels, path.string());
}

void save_dataset(const Dataset& data, const std::vector<std::string>& labels,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& ex : data.examples) out << labels.at(ex.label) << '\t' << ex.text << '\n';
}

}  // namespace kinject
