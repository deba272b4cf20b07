#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kinject/backbone.hpp"
#include "kinject/injector.hpp"
#include "kinject/parameters.hpp"

namespace kinject {

// `key = value` settings over a fixed key set. Every known key always has a
// value (its default until overridden); unknown keys are a ConfigError.
class ConfigMap {
 public:
  ConfigMap();

  static ConfigMap parse(std::istream& in, const std::string& source = "<config>");
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical text: every key in sorted order, one `key = value` per line.
  std::string serialize() const;
  // FNV-1a of serialize() without out_dir, as 16 hex digits.
  std::string fingerprint() const;

  static const std::map<std::string, std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

struct RunConfig {
  ConfigMap raw;

  std::filesystem::path out_dir;
  std::filesystem::path train_path, dev_path, test_path;
  std::optional<std::filesystem::path> kg_path, freq_path;
  std::vector<std::string> labels;
  std::uint64_t seed = 0;

  InjectorConfig injector;
  BackboneConfig backbone;

  AdamOptions adam;
  double lr_pretrain = 3e-4, lr_finetune = 1e-4, lr_inject = 3e-4;
  std::size_t batch_size = 16;
  std::size_t steps_pretrain = 200, steps_finetune = 300, steps_inject = 300;
  std::size_t eval_every = 50;
  double mask_rate = 0.15;

  std::size_t max_ngram = 4, per_subject_cap = 1, per_sentence_cap = 8, max_seq_len = 128;
  std::optional<std::size_t> triple_budget;  // nullopt = every triple
  bool freeze_backbone_stage3 = true;
  std::vector<std::size_t> ablate_budgets;

  std::string fingerprint() const { return raw.fingerprint(); }
};

// Validates and converts. Throws ConfigError on bad values or when the
// injector and backbone widths differ.
RunConfig make_run_config(const ConfigMap& map);

}  // namespace kinject
