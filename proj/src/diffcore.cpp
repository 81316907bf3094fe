#include "gesturerep/diffcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace gesturerep::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

MapMat as_mat(Buffer& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapMat(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

CMapMat as_cmat(const Buffer& v, std::size_t rows, std::size_t cols,
                std::size_t offset = 0) {
  return CMapMat(v.data() + offset, static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}

void expect_rank(const Array& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

void expect_same(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Builds a result node. Parents are retained only when a gradient can flow.
std::shared_ptr<Node> make_node(Shape shape, Buffer value,
                                std::initializer_list<const Array*> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  for (const Array* in : inputs) node->requires_grad = node->requires_grad || in->requires_grad();
  if (node->requires_grad) {
    for (const Array* in : inputs) node->parents.push_back(in->node());
  }
  return node;
}

// Gradient target for parent i, or nullptr when it does not need one.
Buffer* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.ensure_grad();
}

template <typename Fwd, typename Bwd>
Array unary(const Array& a, Fwd fwd, Bwd bwd) {
  Buffer out(a.size());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [bwd](Node& self) {
      auto* g = parent_grad(self, 0);
      if (!g) return;
      const auto& x = self.parents[0]->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*g)[i] += self.grad[i] * bwd(x[i], self.value[i]);
      }
    };
  }
  return Array(node);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Array ----------------------------------------------------------------

Array Array::constant(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(values.begin(), values.end());
  return Array(node);
}

Array Array::parameter(Shape shape, std::vector<double> values) {
  Array a = constant(std::move(shape), std::move(values));
  a.node_->requires_grad = true;
  return a;
}

Array Array::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  Array a = constant(std::move(shape), std::vector<double>(n, 0.0));
  a.node_->requires_grad = requires_grad;
  return a;
}

const Shape& Array::shape() const { return node_->shape; }
std::size_t Array::size() const { return node_->value.size(); }
std::size_t Array::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("dim: axis out of range for " + shape_str(shape()));
  return node_->shape[axis];
}
bool Array::requires_grad() const { return node_->requires_grad; }
std::span<const double> Array::values() const { return node_->value; }
std::span<double> Array::mutable_values() { return node_->value; }
std::span<const double> Array::grad() const { return node_->grad; }
void Array::zero_grad() { node_->grad.clear(); }

double Array::item() const {
  if (size() != 1) throw ContractError("item: array of shape " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

void Array::backward() const {
  if (size() != 1) {
    throw ContractError("backward: root of shape " + shape_str(shape()) + " is not scalar");
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- elementwise ------------------------------------------------------------

Array add(const Array& a, const Array& b) {
  expect_same(a, b, "add");
  Buffer out(a.size());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto node = make_node(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        if (auto* g = parent_grad(self, p)) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
      }
    };
  }
  return Array(node);
}

Array sub(const Array& a, const Array& b) { return add(a, scale(b, -1.0)); }

Array mul(const Array& a, const Array& b) {
  expect_same(a, b, "mul");
  Buffer out(a.size());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto node = make_node(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      const auto& x = self.parents[0]->value;
      const auto& y = self.parents[1]->value;
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * y[i];
      }
      if (auto* g = parent_grad(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * x[i];
      }
    };
  }
  return Array(node);
}

Array scale(const Array& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Array add_scalar(const Array& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

namespace {
thread_local double* relu_margin = nullptr;
thread_local ReluMarginProbe* active_probe = nullptr;
}  // namespace

ReluMarginProbe::ReluMarginProbe() : margin_(std::numeric_limits<double>::infinity()), previous_(active_probe) {
  active_probe = this;
  relu_margin = &margin_;
}

ReluMarginProbe::~ReluMarginProbe() {
  active_probe = previous_;
  relu_margin = previous_ ? &previous_->margin_ : nullptr;
}

Array relu(const Array& a) {
  if (relu_margin) {
    for (double x : a.values()) *relu_margin = std::min(*relu_margin, std::abs(x));
  }
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Array exp(const Array& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Array log(const Array& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Array softplus(const Array& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Array sigmoid(const Array& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Array square(const Array& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- linear algebra ---------------------------------------------------------

Array matmul(const Array& a, const Array& b) {
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Buffer out(m * n);
  as_mat(out, m, n).noalias() = as_cmat(a.node()->value, m, k) * as_cmat(b.node()->value, k, n);
  auto node = make_node({m, n}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [m, k, n](Node& self) {
      auto dy = as_cmat(self.grad, m, n);
      if (auto* g = parent_grad(self, 0)) {
        as_mat(*g, m, k).noalias() += dy * as_cmat(self.parents[1]->value, k, n).transpose();
      }
      if (auto* g = parent_grad(self, 1)) {
        as_mat(*g, k, n).noalias() += as_cmat(self.parents[0]->value, m, k).transpose() * dy;
      }
    };
  }
  return Array(node);
}

Array transpose(const Array& a) {
  expect_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Buffer out(r * c);
  as_mat(out, c, r) = as_cmat(a.node()->value, r, c).transpose();
  auto node = make_node({c, r}, std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [r, c](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        as_mat(*g, r, c) += as_cmat(self.grad, c, r).transpose();
      }
    };
  }
  return Array(node);
}

Array reshape(const Array& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Buffer out(a.values().begin(), a.values().end());
  auto node = make_node(std::move(shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    };
  }
  return Array(node);
}

Array add_bias(const Array& x, const Array& bias) {
  expect_rank(x, 2, "add_bias");
  expect_rank(bias, 1, "add_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
  }
  Buffer out(x.values().begin(), x.values().end());
  auto b = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  auto node = make_node(x.shape(), std::move(out), {&x, &bias});
  if (node->requires_grad) {
    node->backward_fn = [rows, cols](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
      if (auto* g = parent_grad(self, 1)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c];
      }
    };
  }
  return Array(node);
}

// ---- reductions -------------------------------------------------------------

Array sum(const Array& a) {
  const double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  auto node = make_node({1}, {total}, {&a});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (double& v : *g) v += self.grad[0];
      }
    };
  }
  return Array(node);
}

Array mean(const Array& a) {
  if (a.size() == 0) throw ShapeError("mean: empty array");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Array mean_last(const Array& a) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw ShapeError("mean_last: empty last axis in " + shape_str(a.shape()));
  }
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.size() / inner;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Buffer out(outer, 0.0);
  auto x = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += x[o * inner + i];
    out[o] = s / static_cast<double>(inner);
  }
  auto node = make_node(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [outer, inner](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        const double w = 1.0 / static_cast<double>(inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) (*g)[o * inner + i] += self.grad[o] * w;
      }
    };
  }
  return Array(node);
}

Array log_sum_exp(const Array& a, const std::vector<bool>& mask) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw ShapeError("log_sum_exp: empty last axis in " + shape_str(a.shape()));
  }
  if (!mask.empty() && mask.size() != a.size()) {
    throw ShapeError("log_sum_exp: mask of size " + std::to_string(mask.size()) +
                     " for array " + shape_str(a.shape()));
  }
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.size() / inner;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto x = a.values();
  auto included = [&mask](std::size_t i) { return mask.empty() || mask[i]; };

  Buffer out(outer);
  Buffer weights(a.size(), 0.0);  // softmax over included entries
  for (std::size_t o = 0; o < outer; ++o) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t idx = o * inner + i;
      if (included(idx)) m = std::max(m, x[idx]);
    }
    if (!std::isfinite(m)) {
      throw ContractError("log_sum_exp: row " + std::to_string(o) + " has no finite included entry");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t idx = o * inner + i;
      if (included(idx)) {
        weights[idx] = std::exp(x[idx] - m);
        s += weights[idx];
      }
    }
    out[o] = m + std::log(s);
    for (std::size_t i = 0; i < inner; ++i) weights[o * inner + i] /= s;
  }
  auto node = make_node(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [outer, inner, weights = std::move(weights)](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i)
            (*g)[o * inner + i] += self.grad[o] * weights[o * inner + i];
      }
    };
  }
  return Array(node);
}

Array softmax(const Array& a) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw ShapeError("softmax: empty last axis in " + shape_str(a.shape()));
  }
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.size() / inner;
  auto x = a.values();
  Buffer out(a.size());
  for (std::size_t o = 0; o < outer; ++o) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) m = std::max(m, x[o * inner + i]);
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      out[o * inner + i] = std::exp(x[o * inner + i] - m);
      s += out[o * inner + i];
    }
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] /= s;
  }
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [outer, inner](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        const auto& y = self.value;
        for (std::size_t o = 0; o < outer; ++o) {
          double dot = 0.0;
          for (std::size_t i = 0; i < inner; ++i) dot += y[o * inner + i] * self.grad[o * inner + i];
          for (std::size_t i = 0; i < inner; ++i)
            (*g)[o * inner + i] += y[o * inner + i] * (self.grad[o * inner + i] - dot);
        }
      }
    };
  }
  return Array(node);
}

Array l2_normalize(const Array& a, double floor) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw ShapeError("l2_normalize: empty last axis in " + shape_str(a.shape()));
  }
  const std::size_t inner = a.shape().back();
  const std::size_t outer = a.size() / inner;
  auto x = a.values();
  Buffer out(a.size());
  Buffer norms(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    double ss = 0.0;
    for (std::size_t i = 0; i < inner; ++i) ss += x[o * inner + i] * x[o * inner + i];
    norms[o] = std::max(std::sqrt(ss), floor);
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = x[o * inner + i] / norms[o];
  }
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward_fn = [outer, inner, floor, norms = std::move(norms)](Node& self) {
      auto* g = parent_grad(self, 0);
      if (!g) return;
      const auto& y = self.value;
      for (std::size_t o = 0; o < outer; ++o) {
        const double n = norms[o];
        if (n > floor) {
          double dot = 0.0;
          for (std::size_t i = 0; i < inner; ++i) dot += y[o * inner + i] * self.grad[o * inner + i];
          for (std::size_t i = 0; i < inner; ++i)
            (*g)[o * inner + i] += (self.grad[o * inner + i] - y[o * inner + i] * dot) / n;
        } else {
          for (std::size_t i = 0; i < inner; ++i) (*g)[o * inner + i] += self.grad[o * inner + i] / n;
        }
      }
    };
  }
  return Array(node);
}

// ---- structural -------------------------------------------------------------

Array concat(const Array& a, const Array& b, std::size_t axis) {
  expect_rank(a, 2, "concat");
  expect_rank(b, 2, "concat");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  const std::size_t other = 1 - axis;
  if (a.dim(other) != b.dim(other)) {
    throw ShapeError("concat: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                     " along axis " + std::to_string(axis));
  }
  const std::size_t ra = a.dim(0), ca = a.dim(1), rb = b.dim(0), cb = b.dim(1);
  Shape shape = axis == 0 ? Shape{ra + rb, ca} : Shape{ra, ca + cb};
  Buffer out(shape_numel(shape));
  if (axis == 0) {
    std::copy(a.values().begin(), a.values().end(), out.begin());
    std::copy(b.values().begin(), b.values().end(), out.begin() + static_cast<std::ptrdiff_t>(a.size()));
  } else {
    as_mat(out, ra, ca + cb).leftCols(static_cast<Eigen::Index>(ca)) = as_cmat(a.node()->value, ra, ca);
    as_mat(out, ra, ca + cb).rightCols(static_cast<Eigen::Index>(cb)) = as_cmat(b.node()->value, rb, cb);
  }
  auto node = make_node(std::move(shape), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [axis, ra, ca, rb, cb](Node& self) {
      if (axis == 0) {
        if (auto* g = parent_grad(self, 0))
          for (std::size_t i = 0; i < ra * ca; ++i) (*g)[i] += self.grad[i];
        if (auto* g = parent_grad(self, 1))
          for (std::size_t i = 0; i < rb * cb; ++i) (*g)[i] += self.grad[ra * ca + i];
      } else {
        auto dy = as_cmat(self.grad, ra, ca + cb);
        if (auto* g = parent_grad(self, 0)) as_mat(*g, ra, ca) += dy.leftCols(static_cast<Eigen::Index>(ca));
        if (auto* g = parent_grad(self, 1)) as_mat(*g, rb, cb) += dy.rightCols(static_cast<Eigen::Index>(cb));
      }
    };
  }
  return Array(node);
}

Array gather_cols(const Array& x, const std::vector<std::size_t>& cols_index) {
  expect_rank(x, 2, "gather_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols_index.size() != rows) {
    throw ShapeError("gather_cols: " + std::to_string(cols_index.size()) + " indices for " +
                     shape_str(x.shape()));
  }
  Buffer out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols_index[r] >= cols) throw ShapeError("gather_cols: column index out of range");
    out[r] = x.values()[r * cols + cols_index[r]];
  }
  auto node = make_node({rows}, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [cols, cols_index](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t r = 0; r < cols_index.size(); ++r) (*g)[r * cols + cols_index[r]] += self.grad[r];
      }
    };
  }
  return Array(node);
}

// ---- graph / temporal convolution -------------------------------------------

Array joint_mix(const Array& x, const Array& adjacency) {
  expect_rank(x, 4, "joint_mix");
  expect_rank(adjacency, 2, "joint_mix");
  const std::size_t j = x.dim(3);
  if (adjacency.dim(0) != j || adjacency.dim(1) != j) {
    throw ShapeError("joint_mix: input " + shape_str(x.shape()) + " vs adjacency " +
                     shape_str(adjacency.shape()));
  }
  const std::size_t rows = x.size() / j;
  Buffer out(x.size());
  as_mat(out, rows, j).noalias() =
      as_cmat(x.node()->value, rows, j) * as_cmat(adjacency.node()->value, j, j).transpose();
  auto node = make_node(x.shape(), std::move(out), {&x, &adjacency});
  if (node->requires_grad) {
    node->backward_fn = [rows, j](Node& self) {
      auto dy = as_cmat(self.grad, rows, j);
      if (auto* g = parent_grad(self, 0)) {
        as_mat(*g, rows, j).noalias() += dy * as_cmat(self.parents[1]->value, j, j);
      }
      if (auto* g = parent_grad(self, 1)) {
        as_mat(*g, j, j).noalias() += dy.transpose() * as_cmat(self.parents[0]->value, rows, j);
      }
    };
  }
  return Array(node);
}

Array channel_map(const Array& x, const Array& weight, const Array& bias) {
  expect_rank(x, 4, "channel_map");
  expect_rank(weight, 2, "channel_map");
  expect_rank(bias, 1, "channel_map");
  const std::size_t n = x.dim(0), cin = x.dim(1), tj = x.dim(2) * x.dim(3);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin || bias.dim(0) != cout) {
    throw ShapeError("channel_map: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()) + " / bias " + shape_str(bias.shape()));
  }
  Buffer out(n * cout * tj);
  auto w = as_cmat(weight.node()->value, cout, cin);
  CMapVec b(bias.node()->value.data(), static_cast<Eigen::Index>(cout));
  for (std::size_t s = 0; s < n; ++s) {
    auto y = as_mat(out, cout, tj, s * cout * tj);
    y.noalias() = w * as_cmat(x.node()->value, cin, tj, s * cin * tj);
    y.colwise() += b;
  }
  auto node = make_node({n, cout, x.dim(2), x.dim(3)}, std::move(out), {&x, &weight, &bias});
  if (node->requires_grad) {
    node->backward_fn = [n, cin, cout, tj](Node& self) {
      auto* gx = parent_grad(self, 0);
      auto* gw = parent_grad(self, 1);
      auto* gb = parent_grad(self, 2);
      auto w = as_cmat(self.parents[1]->value, cout, cin);
      for (std::size_t s = 0; s < n; ++s) {
        auto dy = as_cmat(self.grad, cout, tj, s * cout * tj);
        if (gx) as_mat(*gx, cin, tj, s * cin * tj).noalias() += w.transpose() * dy;
        if (gw) {
          as_mat(*gw, cout, cin).noalias() +=
              dy * as_cmat(self.parents[0]->value, cin, tj, s * cin * tj).transpose();
        }
        if (gb) MapVec(gb->data(), static_cast<Eigen::Index>(cout)) += dy.rowwise().sum();
      }
    };
  }
  return Array(node);
}

namespace {

struct ConvGeometry {
  std::size_t n, cin, t, j, cout, k, stride, pad, tout;
};

// col[(i*k + kk), (to*j + jj)] = x[s, i, to*stride + kk - pad, jj]
void im2col(const double* x, const ConvGeometry& g, RowMat& col) {
  col.setZero(static_cast<Eigen::Index>(g.cin * g.k), static_cast<Eigen::Index>(g.tout * g.j));
  for (std::size_t i = 0; i < g.cin; ++i) {
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      double* row = col.data() + (i * g.k + kk) * g.tout * g.j;
      for (std::size_t to = 0; to < g.tout; ++to) {
        const long ti = static_cast<long>(to * g.stride + kk) - static_cast<long>(g.pad);
        if (ti < 0 || ti >= static_cast<long>(g.t)) continue;
        const double* src = x + (i * g.t + static_cast<std::size_t>(ti)) * g.j;
        std::copy(src, src + g.j, row + to * g.j);
      }
    }
  }
}

void col2im_add(const RowMat& col, const ConvGeometry& g, double* dx) {
  for (std::size_t i = 0; i < g.cin; ++i) {
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      const double* row = col.data() + (i * g.k + kk) * g.tout * g.j;
      for (std::size_t to = 0; to < g.tout; ++to) {
        const long ti = static_cast<long>(to * g.stride + kk) - static_cast<long>(g.pad);
        if (ti < 0 || ti >= static_cast<long>(g.t)) continue;
        double* dst = dx + (i * g.t + static_cast<std::size_t>(ti)) * g.j;
        for (std::size_t jj = 0; jj < g.j; ++jj) dst[jj] += row[to * g.j + jj];
      }
    }
  }
}

}  // namespace

Array temporal_conv(const Array& x, const Array& weight, const Array& bias, std::size_t stride) {
  expect_rank(x, 4, "temporal_conv");
  expect_rank(weight, 3, "temporal_conv");
  expect_rank(bias, 1, "temporal_conv");
  if (stride == 0) throw ShapeError("temporal_conv: stride must be positive");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.t = x.dim(2);
  g.j = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = (g.k - 1) / 2;
  if (weight.dim(1) != g.cin || bias.dim(0) != g.cout) {
    throw ShapeError("temporal_conv: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()) + " / bias " + shape_str(bias.shape()));
  }
  if (g.t + 2 * g.pad < g.k) throw ShapeError("temporal_conv: input shorter than kernel");
  g.tout = (g.t + 2 * g.pad - g.k) / stride + 1;

  Buffer out(g.n * g.cout * g.tout * g.j);
  auto w = as_cmat(weight.node()->value, g.cout, g.cin * g.k);
  CMapVec b(bias.node()->value.data(), static_cast<Eigen::Index>(g.cout));
  RowMat col;
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(x.node()->value.data() + s * g.cin * g.t * g.j, g, col);
    auto y = as_mat(out, g.cout, g.tout * g.j, s * g.cout * g.tout * g.j);
    y.noalias() = w * col;
    y.colwise() += b;
  }
  auto node = make_node({g.n, g.cout, g.tout, g.j}, std::move(out), {&x, &weight, &bias});
  if (node->requires_grad) {
    node->backward_fn = [g](Node& self) {
      auto* gx = parent_grad(self, 0);
      auto* gw = parent_grad(self, 1);
      auto* gb = parent_grad(self, 2);
      auto w = as_cmat(self.parents[1]->value, g.cout, g.cin * g.k);
      const auto& xv = self.parents[0]->value;
      RowMat col, dcol;
      for (std::size_t s = 0; s < g.n; ++s) {
        auto dy = as_cmat(self.grad, g.cout, g.tout * g.j, s * g.cout * g.tout * g.j);
        if (gw) {
          im2col(xv.data() + s * g.cin * g.t * g.j, g, col);
          as_mat(*gw, g.cout, g.cin * g.k).noalias() += dy * col.transpose();
        }
        if (gb) MapVec(gb->data(), static_cast<Eigen::Index>(g.cout)) += dy.rowwise().sum();
        if (gx) {
          dcol.noalias() = w.transpose() * dy;
          col2im_add(dcol, g, gx->data() + s * g.cin * g.t * g.j);
        }
      }
    };
  }
  return Array(node);
}

Array mix_layers(const Array& x, const Array& weights) {
  expect_rank(x, 3, "mix_layers");
  expect_rank(weights, 1, "mix_layers");
  const std::size_t n = x.dim(0), l = x.dim(1), r = x.dim(2);
  if (weights.dim(0) != l) {
    throw ShapeError("mix_layers: input " + shape_str(x.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  auto xv = x.values();
  auto wv = weights.values();
  Buffer out(n * r, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t li = 0; li < l; ++li)
      for (std::size_t c = 0; c < r; ++c) out[s * r + c] += wv[li] * xv[(s * l + li) * r + c];
  auto node = make_node({n, r}, std::move(out), {&x, &weights});
  if (node->requires_grad) {
    node->backward_fn = [n, l, r](Node& self) {
      const auto& xv = self.parents[0]->value;
      const auto& wv = self.parents[1]->value;
      auto* gx = parent_grad(self, 0);
      auto* gw = parent_grad(self, 1);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t li = 0; li < l; ++li)
          for (std::size_t c = 0; c < r; ++c) {
            const double dy = self.grad[s * r + c];
            if (gx) (*gx)[(s * l + li) * r + c] += wv[li] * dy;
            if (gw) (*gw)[li] += xv[(s * l + li) * r + c] * dy;
          }
    };
  }
  return Array(node);
}

// ---- gradient check ---------------------------------------------------------

double check_gradients(const std::function<Array()>& fn, std::vector<Array> leaves,
                       const GradCheckOptions& options) {
  for (auto& leaf : leaves) leaf.zero_grad();
  const Array root = fn();
  if (!std::isfinite(root.item())) throw NumericError("check_gradients: non-finite function value");
  root.backward();

  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (!leaf.grad().empty()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(leaf.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_leaf > 0 && coords.size() > options.max_coords_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_leaf);
    }

    auto values = leaf.mutable_values();
    for (std::size_t c : coords) {
      const double orig = values[c];
      values[c] = orig + options.epsilon;
      const double fp = fn().item();
      values[c] = orig - options.epsilon;
      const double fm = fn().item();
      values[c] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[c])) {
        throw NumericError("check_gradients: non-finite value at coordinate " + std::to_string(c));
      }
      const double numeric = (fp - fm) / (2.0 * options.epsilon);
      const double denom = std::max({std::abs(analytic[c]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[c] - numeric) / denom);
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return worst;
}

}  // namespace gesturerep::diff
