#pragma once

// Dense row-major float64 tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle to a graph node. Every op records its parents and
// a backward closure when any input requires gradients; the graph is dropped
// together with the last handle, so each forward pass builds a fresh tape.
// Ops work on rank-0 (scalar), rank-1 and rank-2 tensors. Rank-1 tensors act as
// a single row wherever a matrix is expected.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kinject {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Rng;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the node receives a gradient
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);
  // Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  // Writable view; meant for leaves (parameter updates, test perturbations).
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient of the last backward() pass; empty when none was received.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values without graph history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Populates grad() of every requires_grad tensor reachable from `loss`.
// Gradients accumulate into leaves until zero_grad().
void backward(const Tensor& loss);

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Same shape, or `b` a single row broadcast over the rows of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor relu(const Tensor& a);
// tanh approximation.
Tensor gelu(const Tensor& a);

// Softmax along `axis` (0 = down columns, 1 = along rows; rank-1 uses 0).
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes each row over the last axis; gain and bias have one entry per
// column.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// out[i] = table[ids[i]]; the embedding lookup.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// Mean over rows whose `valid` flag is set; returns 1 x cols.
Tensor masked_mean_rows(const Tensor& x, const std::vector<bool>& valid);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace kinject
