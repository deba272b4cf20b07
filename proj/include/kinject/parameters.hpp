#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kinject/tensor.hpp"

namespace kinject {

enum class Init {
  zeros,
  ones,
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in = shape[0]. Weight
  // matrices are stored input-major (in x out) so x * W is the forward map.
  fan_in_uniform,
  // Same bound with fan_in = number of columns; used for embedding tables.
  row_uniform,
};

// Named parameters plus their Adam moments.
//
// Each parameter is initialized from its own RNG stream derived from
// (seed, name), so adding or removing parameters never perturbs the others.
// Values are generated row-major, which makes a taller table share its
// leading rows with a shorter one.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t steps = 0;
    double lr_scale = 1.0;
  };

  // Registers a new parameter; the name must be unused.
  Tensor create(const std::string& name, Shape shape, Init init,
                std::uint64_t seed);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

  void zero_grad();

  // Applies to every parameter whose name starts with `prefix`.
  void set_trainable(std::string_view prefix, bool trainable);
  void set_lr_scale(std::string_view prefix, double scale);

  // Overwrites values in place (existing Tensor handles observe the change).
  void assign(const std::string& name, const Tensor& source);

  // Copies every parameter of `source` whose name starts with `prefix`.
  // Names or shapes missing here raise ConfigError.
  void load_from(const std::map<std::string, Tensor>& source,
                 std::string_view prefix = "");

  std::map<std::string, Tensor> snapshot() const;

 private:
  std::map<std::string, Entry> entries_;
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every trainable parameter. A trainable
// parameter without a gradient is an error.
void adam_step(ParameterStore& store, const AdamOptions& options);

// Checkpoint container: "KINJ1", then per parameter in name order
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[]
// with every integer and float little-endian.
void save_checkpoint(const std::map<std::string, Tensor>& params,
                     const std::filesystem::path& path);
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const std::map<std::string, Tensor>& params);
std::map<std::string, Tensor> decode_checkpoint(std::string_view bytes);

}  // namespace kinject
