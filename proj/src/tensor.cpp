#include "kinject/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kinject/error.hpp"
#include "kinject/random.hpp"

namespace kinject {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

NodePtr new_node(Shape shape, std::vector<double> value) {
  if (shape_size(shape) != value.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(value.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

// Wraps an op result; attaches parents and the backward closure only when
// some parent participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(value));
  const bool needs_grad =
      std::any_of(parents.begin(), parents.end(),
                  [](const NodePtr& p) { return p->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

std::string pair_shapes(const Tensor& a, const Tensor& b) {
  return shape_string(a.shape()) + " and " + shape_string(b.shape());
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() < 1 || t.rank() > 2) {
    throw DimensionError(std::string(op) + " expects rank 1 or 2, got " +
                         shape_string(t.shape()));
  }
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = true;
  return Tensor(std::move(node));
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return node_->shape.back();
}

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape())
                                     : std::string("<undefined>")));
  }
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols();
  const std::size_t kb = b.rank() == 2 ? b.shape()[0] : 1;
  const std::size_t n = b.cols();
  if (k != kb) {
    throw DimensionError("matmul inner dimensions differ: " + pair_shapes(a, b));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       Node& na = *self.parents[0];
                       Node& nb = *self.parents[1];
                       const double* dc = self.grad.data();
                       if (na.requires_grad) {
                         auto& da = na.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = nb.value.data() + p * n;
                             const double* drow = dc + i * n;
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
                             da[i * k + p] += s;
                           }
                         }
                       }
                       if (nb.requires_grad) {
                         auto& db = nb.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = na.value[i * k + p];
                             const double* drow = dc + i * n;
                             double* dbrow = db.data() + p * n;
                             for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * drow[j];
                           }
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    auto& da = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

enum class Combine { add, sub, mul };

Tensor elementwise(const Tensor& a, const Tensor& b, Combine how) {
  const bool same = a.shape() == b.shape();
  const bool row_broadcast = !same && a.rank() == 2 && b.rank() >= 1 &&
                             b.size() == a.cols() && b.rows() == 1;
  if (!same && !(row_broadcast && how != Combine::mul)) {
    throw DimensionError("elementwise op shape mismatch: " + pair_shapes(a, b));
  }
  const std::size_t n = a.size(), width = b.size();
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bv[same ? i : i % width];
    switch (how) {
      case Combine::add: out[i] = av[i] + y; break;
      case Combine::sub: out[i] = av[i] - y; break;
      case Combine::mul: out[i] = av[i] * y; break;
    }
  }
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [how, same, width](Node& self) {
                       Node& na = *self.parents[0];
                       Node& nb = *self.parents[1];
                       const std::size_t n = self.grad.size();
                       if (na.requires_grad) {
                         auto& da = na.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           da[i] += how == Combine::mul ? self.grad[i] * nb.value[i]
                                                        : self.grad[i];
                         }
                       }
                       if (nb.requires_grad) {
                         auto& db = nb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t j = same ? i : i % width;
                           switch (how) {
                             case Combine::add: db[j] += self.grad[i]; break;
                             case Combine::sub: db[j] -= self.grad[i]; break;
                             case Combine::mul: db[j] += self.grad[i] * na.value[i]; break;
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Combine::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Combine::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Combine::mul); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    auto& da = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& na = *self.parents[0];
    auto& da = na.grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i)
      if (na.value[i] > 0.0) da[i] += self.grad[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return make_result(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& na = *self.parents[0];
    auto& da = na.grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double x = na.value[i];
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double d = 0.5 * (1.0 + t) +
                       0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      da[i] += d * self.grad[i];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 0 || axis >= x.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) +
                         " invalid for shape " + shape_string(x.shape()));
  }
  // Groups of `len` elements spaced `stride` apart.
  std::size_t groups, len, stride, group_step;
  if (x.rank() == 1) {
    groups = 1, len = x.size(), stride = 1, group_step = 0;
  } else if (axis == 1) {
    groups = x.rows(), len = x.cols(), stride = 1, group_step = x.cols();
  } else {
    groups = x.cols(), len = x.rows(), stride = x.cols(), group_step = 1;
  }
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * group_step;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) hi = std::max(hi, xv[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[base + i * stride] - hi);
      out[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= total;
  }
  return make_result(x.shape(), out, {x.node()},
                     [groups, len, stride, group_step](Node& self) {
                       auto& dx = self.parents[0]->grad_buffer();
                       const auto& y = self.value;
                       for (std::size_t g = 0; g < groups; ++g) {
                         const std::size_t base = g * group_step;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < len; ++i) {
                           const std::size_t k = base + i * stride;
                           dot += self.grad[k] * y[k];
                         }
                         for (std::size_t i = 0; i < len; ++i) {
                           const std::size_t k = base + i * stride;
                           dx[k] += y[k] * (self.grad[k] - dot);
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm gain/bias " + pair_shapes(gain, bias) +
                         " do not match width of " + shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive");
  const auto xv = x.values();
  const auto g = gain.values();
  const auto b = bias.values();
  std::vector<double> out(m * n), xhat(m * n), inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv[i];
      out[i * n + j] = xhat[i * n + j] * g[j] + b[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [m, n, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
        Node& nx = *self.parents[0];
        Node& ng = *self.parents[1];
        Node& nb = *self.parents[2];
        const double* dy = self.grad.data();
        if (ng.requires_grad) {
          auto& dg = ng.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += dy[i * n + j] * xhat[i * n + j];
        }
        if (nb.requires_grad) {
          auto& db = nb.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
        }
        if (nx.requires_grad) {
          auto& dx = nx.grad_buffer();
          const double nn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * ng.value[j];
              s1 += dxh;
              s2 += dxh * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * ng.value[j];
              dx[i * n + j] += inv[i] / nn * (nn * dxh - s1 - xhat[i * n + j] * s2);
            }
          }
        }
      });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin + count > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
  return make_result({m, count}, std::move(out), {x.node()},
                     [m, n, begin, count](Node& self) {
                       auto& dx = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           dx[i * n + begin + j] += self.grad[i * count + j];
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::vector<NodePtr> parents;
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols row mismatch: " + pair_shapes(parts[0], p));
    }
    widths.push_back(p.cols());
    parents.push_back(p.node());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const auto pv = p.values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * p.cols(), p.cols(), out.data() + i * n + offset);
    offset += p.cols();
  }
  return make_result({m, n}, std::move(out), std::move(parents),
                     [m, n, widths = std::move(widths)](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& part = *self.parents[k];
                         if (part.requires_grad) {
                           auto& dp = part.grad_buffer();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               dp[i * widths[k] + j] += self.grad[i * n + offset + j];
                         }
                         offset += widths[k];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::vector<NodePtr> parents;
  std::vector<double> out;
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows width mismatch: " + pair_shapes(parts[0], p));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
    m += p.rows();
  }
  return make_result({m, n}, std::move(out), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (auto& part : self.parents) {
      const std::size_t count = part->value.size();
      if (part->requires_grad) {
        auto& dp = part->grad_buffer();
        for (std::size_t i = 0; i < count; ++i) dp[i] += self.grad[offset + i];
      }
      offset += count;
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) {
    throw DimensionError("gather_rows expects a matrix, got " +
                         shape_string(table.shape()));
  }
  const std::size_t rows = table.rows(), n = table.cols();
  std::vector<double> out(ids.size() * n);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DimensionError("gather_rows index " + std::to_string(ids[i]) +
                           " out of " + shape_string(table.shape()));
    }
    std::copy_n(tv.data() + ids[i] * n, n, out.data() + i * n);
  }
  std::vector<std::size_t> index(ids.begin(), ids.end());
  return make_result({ids.size(), n}, std::move(out), {table.node()},
                     [n, index = std::move(index)](Node& self) {
                       auto& dt = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < index.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           dt[index[i] * n + j] += self.grad[i * n + j];
                     });
}

Tensor masked_mean_rows(const Tensor& x, const std::vector<bool>& valid) {
  require_matrix(x, "masked_mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (valid.size() != m) {
    throw DimensionError("mask of length " + std::to_string(valid.size()) +
                         " for " + shape_string(x.shape()));
  }
  const auto count = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  if (count == 0) throw UsageError("masked_mean_rows with no valid rows");
  const double w = 1.0 / static_cast<double>(count);
  std::vector<double> out(n, 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    if (valid[i])
      for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  for (double& v : out) v *= w;
  return make_result({1, n}, std::move(out), {x.node()},
                     [m, n, w, valid](Node& self) {
                       auto& dx = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i)
                         if (valid[i])
                           for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += w * self.grad[j];
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {x.node()}, [](Node& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (double& d : dx) d += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.rows(), c = logits.cols();
  if (targets.size() != m || m == 0) {
    throw DimensionError("cross_entropy has " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(logits.shape()));
  }
  const auto lv = logits.values();
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= c) {
      throw DimensionError("cross_entropy target " + std::to_string(targets[i]) +
                           " out of " + std::to_string(c) + " classes");
    }
    const double* row = lv.data() + i * c;
    const double hi = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - hi);
    const double log_total = std::log(total) + hi;
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_total);
    loss -= row[targets[i]] - log_total;
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> target(targets.begin(), targets.end());
  return make_result({}, {loss}, {logits.node()},
                     [m, c, probs = std::move(probs), target = std::move(target)](Node& self) {
                       auto& dl = self.parents[0]->grad_buffer();
                       const double g = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           dl[i * c + j] += g * (probs[i * c + j] - (j == target[i] ? 1.0 : 0.0));
                     });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& v : mask) v = rng.bernoulli(rate) ? 0.0 : keep;
  return mul(x, Tensor::constant(x.shape(), std::move(mask)));
}

}  // namespace kinject
