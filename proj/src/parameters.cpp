#include "kinject/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kinject/error.hpp"
#include "kinject/random.hpp"

namespace kinject {

namespace {

constexpr std::string_view kMagic = "KINJ1";

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

}  // namespace

Tensor ParameterStore::create(const std::string& name, Shape shape, Init init,
                              std::uint64_t seed) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t n = shape_size(shape);
  std::vector<double> values(n, 0.0);
  if (init == Init::ones) {
    values.assign(n, 1.0);
  } else if (init == Init::fan_in_uniform || init == Init::row_uniform) {
    const std::size_t fan_in = init == Init::fan_in_uniform ? shape.front() : shape.back();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng(seed, name);
    for (double& v : values) v = rng.uniform(-bound, bound);
  }
  Entry entry;
  entry.value = Tensor::parameter(std::move(shape), std::move(values));
  entry.m.assign(n, 0.0);
  entry.v.assign(n, 0.0);
  Tensor handle = entry.value;
  entries_.emplace(name, std::move(entry));
  return handle;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [_, e] : entries_) total += e.value.size();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.value.zero_grad();
}

void ParameterStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& [name, e] : entries_)
    if (has_prefix(name, prefix)) e.value.set_requires_grad(trainable);
}

void ParameterStore::set_lr_scale(std::string_view prefix, double scale) {
  for (auto& [name, e] : entries_)
    if (has_prefix(name, prefix)) e.lr_scale = scale;
}

void ParameterStore::assign(const std::string& name, const Tensor& source) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  Tensor& target = it->second.value;
  if (target.shape() != source.shape()) {
    throw ConfigError("parameter '" + name + "' has shape " +
                      shape_string(target.shape()) + ", source has " +
                      shape_string(source.shape()));
  }
  auto dst = target.mutable_values();
  std::copy(source.values().begin(), source.values().end(), dst.begin());
}

void ParameterStore::load_from(const std::map<std::string, Tensor>& source,
                               std::string_view prefix) {
  for (const auto& [name, tensor] : source) {
    if (has_prefix(name, prefix)) assign(name, tensor);
  }
}

std::map<std::string, Tensor> ParameterStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.value.detach());
  return out;
}

void adam_step(ParameterStore& store, const AdamOptions& options) {
  for (auto& [name, e] : store.entries()) {
    if (!e.value.requires_grad()) continue;
    if (!e.value.has_grad()) {
      throw UsageError("parameter '" + name + "' has no gradient for adam_step");
    }
    ++e.steps;
    const double t = static_cast<double>(e.steps);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    const double lr = options.lr * e.lr_scale;
    auto values = e.value.mutable_values();
    const auto grad = e.value.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      e.m[i] = options.beta1 * e.m[i] + (1.0 - options.beta1) * g;
      e.v[i] = options.beta2 * e.v[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = e.m[i] / correction1;
      const double v_hat = e.v[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::map<std::string, Tensor>& params) {
  std::string out(kMagic);
  for (const auto& [name, tensor] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_u64(out, d);
    for (double v : tensor.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::map<std::string, Tensor> decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError("not a checkpoint: missing KINJ1 header");
  }
  Reader in(bytes.substr(kMagic.size()));
  std::map<std::string, Tensor> out;
  while (!in.done()) {
    const auto name_len = static_cast<std::size_t>(in.uint(4));
    std::string name(in.take(name_len));
    const auto rank = static_cast<std::size_t>(in.uint(4));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.uint(8));
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = std::bit_cast<double>(in.uint(8));
    if (!out.emplace(name, Tensor::constant(std::move(shape), std::move(values))).second) {
      throw ParseError("checkpoint repeats parameter '" + name + "'");
    }
  }
  return out;
}

void save_checkpoint(const std::map<std::string, Tensor>& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::map<std::string, Tensor> params;
  for (const auto& [name, e] : store.entries()) params.emplace(name, e.value);
  save_checkpoint(params, path);
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace kinject
