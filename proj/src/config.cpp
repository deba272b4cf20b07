#include "kinject/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kinject/error.hpp"
#include "kinject/random.hpp"
#include "kinject/text.hpp"

namespace kinject {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

const std::map<std::string, std::string>& ConfigMap::known_keys() {
  static const std::map<std::string, std::string> keys = {
      {"out_dir", "run"},
      {"train_path", ""},
      {"dev_path", ""},
      {"test_path", ""},
      {"kg_path", ""},
      {"freq_path", ""},
      {"labels", "0,1"},
      {"seed", "7"},
      {"injector.preset", "custom"},
      {"injector.layers", "2"},
      {"injector.d_model", "16"},
      {"injector.heads", "2"},
      {"injector.d_ff", "64"},
      {"injector.dropout", "0.1"},
      {"backbone.layers", "2"},
      {"backbone.d_model", "16"},
      {"backbone.heads", "2"},
      {"backbone.d_ff", "64"},
      {"lr_pretrain", "3e-4"},
      {"lr_finetune", "1e-4"},
      {"lr_inject", "3e-4"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"adam_eps", "1e-8"},
      {"batch_size", "16"},
      {"steps_pretrain", "200"},
      {"steps_finetune", "300"},
      {"steps_inject", "300"},
      {"eval_every", "50"},
      {"mask_rate", "0.15"},
      {"max_ngram", "4"},
      {"per_subject_cap", "1"},
      {"per_sentence_cap", "8"},
      {"max_seq_len", "128"},
      {"triple_budget", "all"},
      {"freeze_backbone_stage3", "true"},
      {"ablate_budgets", "10,100,500,1000"},
      {"synth.kind", "knowledge"},
      {"synth.entities", "100"},
      {"synth.noise_triples", "900"},
      {"synth.sentences_per_entity", "8"},
  };
  return keys;
}

ConfigMap::ConfigMap() : values_(known_keys()) {}

ConfigMap ConfigMap::parse(std::istream& in, const std::string& source) {
  ConfigMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      map.set(trim(std::string_view(stripped).substr(0, eq)),
              trim(std::string_view(stripped).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return map;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(std::string_view(assignment).substr(0, eq)),
      trim(std::string_view(assignment).substr(eq + 1)));
}

const std::string& ConfigMap::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t ConfigMap::get_int(const std::string& key) const {
  const std::string& raw = get(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + raw + "'");
  }
  return v;
}

std::size_t ConfigMap::get_size(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double ConfigMap::get_double(const std::string& key) const {
  const std::string& raw = get(key);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + raw + "'");
  }
  return v;
}

bool ConfigMap::get_bool(const std::string& key) const {
  const std::string& raw = get(key);
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + raw + "'");
}

std::vector<std::string> ConfigMap::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string& raw = get(key);
  if (trim(raw).empty()) return out;
  for (const auto& item : split(raw, ',')) out.push_back(trim(item));
  return out;
}

std::string ConfigMap::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

std::string ConfigMap::fingerprint() const {
  // Where a run is written does not change what it computes.
  ConfigMap located = *this;
  located.values_.erase("out_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(located.serialize())));
  return buf;
}

RunConfig make_run_config(const ConfigMap& map) {
  RunConfig c;
  c.raw = map;
  c.out_dir = map.get("out_dir");
  c.train_path = map.get("train_path");
  c.dev_path = map.get("dev_path");
  c.test_path = map.get("test_path");
  if (!map.get("kg_path").empty()) c.kg_path = std::filesystem::path(map.get("kg_path"));
  if (!map.get("freq_path").empty()) c.freq_path = std::filesystem::path(map.get("freq_path"));
  c.labels = map.get_list("labels");
  if (c.labels.empty()) throw ConfigError("labels must declare at least one label");
  c.seed = static_cast<std::uint64_t>(map.get_int("seed"));

  const std::string preset = map.get("injector.preset");
  if (preset == "base") {
    c.injector = InjectorConfig::base();
  } else if (preset == "large") {
    c.injector = InjectorConfig::large();
  } else if (preset == "custom") {
    c.injector.layers = map.get_size("injector.layers");
    c.injector.d_model = map.get_size("injector.d_model");
    c.injector.heads = map.get_size("injector.heads");
    c.injector.d_ff = map.get_size("injector.d_ff");
  } else {
    throw ConfigError("injector.preset must be base, large or custom");
  }
  c.injector.dropout = map.get_double("injector.dropout");
  c.injector.seed = derive_seed(c.seed, "injector");
  c.injector.validate();

  c.backbone.layers = map.get_size("backbone.layers");
  c.backbone.d_model = map.get_size("backbone.d_model");
  c.backbone.heads = map.get_size("backbone.heads");
  c.backbone.d_ff = map.get_size("backbone.d_ff");
  c.backbone.num_classes = c.labels.size();
  c.backbone.seed = derive_seed(c.seed, "backbone");
  c.backbone.validate();
  if (c.backbone.d_model != c.injector.d_model) {
    throw ConfigError("backbone.d_model " + std::to_string(c.backbone.d_model) +
                      " differs from injector d_model " + std::to_string(c.injector.d_model));
  }

  c.adam.beta1 = map.get_double("beta1");
  c.adam.beta2 = map.get_double("beta2");
  c.adam.eps = map.get_double("adam_eps");
  c.lr_pretrain = map.get_double("lr_pretrain");
  c.lr_finetune = map.get_double("lr_finetune");
  c.lr_inject = map.get_double("lr_inject");
  c.batch_size = map.get_size("batch_size");
  if (c.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  c.steps_pretrain = map.get_size("steps_pretrain");
  c.steps_finetune = map.get_size("steps_finetune");
  c.steps_inject = map.get_size("steps_inject");
  c.eval_every = map.get_size("eval_every");
  if (c.eval_every == 0) throw ConfigError("eval_every must be at least 1");
  c.mask_rate = map.get_double("mask_rate");
  if (c.mask_rate < 0.0 || c.mask_rate > 1.0) throw ConfigError("mask_rate must be in [0, 1]");

  c.max_ngram = map.get_size("max_ngram");
  c.per_subject_cap = map.get_size("per_subject_cap");
  c.per_sentence_cap = map.get_size("per_sentence_cap");
  c.max_seq_len = map.get_size("max_seq_len");
  if (c.max_ngram == 0 || c.per_subject_cap == 0 || c.per_sentence_cap == 0 || c.max_seq_len == 0) {
    throw ConfigError("max_ngram, fact caps and max_seq_len must be at least 1");
  }
  if (map.get("triple_budget") != "all") c.triple_budget = map.get_size("triple_budget");
  c.freeze_backbone_stage3 = map.get_bool("freeze_backbone_stage3");

  std::optional<std::size_t> previous;
  for (const auto& item : map.get_list("ablate_budgets")) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("ablate_budgets entry '" + item + "' is not a non-negative integer");
    }
    if (previous && v <= *previous) throw ConfigError("ablate_budgets must be strictly increasing");
    previous = v;
    c.ablate_budgets.push_back(v);
  }
  return c;
}

}  // namespace kinject
