#pragma once

// Minimal reverse-mode differentiation over dense double arrays.
//
// Values are computed eagerly when an op is constructed, so every node holds
// its forward result. backward() walks the graph reachable from a scalar root
// in reverse topological order and accumulates into leaves that require
// gradients. Repeated backward() calls accumulate additively into leaves;
// intermediate gradients are reset at the start of each call.
//
// Layout conventions: all arrays are row-major. Skeleton-shaped activations
// use (batch, channels, frames, joints).

#include <cstddef>
#include <functional>
#include <new>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturerep::diff {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Node storage is 64-byte aligned so the vectorised kernels take the same
// path on every run; with malloc's 16-byte alignment AVX results drift in the
// last bits between otherwise identical runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};
using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node;

class Array {
 public:
  Array() = default;

  static Array constant(Shape shape, std::vector<double> values);
  static Array parameter(Shape shape, std::vector<double> values);
  static Array zeros(Shape shape, bool requires_grad = false);

  bool valid() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  bool requires_grad() const;

  std::span<const double> values() const;
  // Only meaningful on leaves; writing into an interior node does not
  // re-run downstream ops.
  std::span<double> mutable_values();
  // Empty when no gradient has reached this node.
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;
  void backward() const;

  // Internal: used by op implementations.
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Array(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and adds into parents' grads.
  std::function<void(Node&)> backward_fn;

  Buffer& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

// Elementwise and linear algebra.
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scale(const Array& a, double s);
Array add_scalar(const Array& a, double s);
Array relu(const Array& a);
// While alive, records the smallest |input| seen by relu on this thread, so a
// finite-difference check can tell whether its point sits near a kink.
class ReluMarginProbe {
 public:
  ReluMarginProbe();
  ~ReluMarginProbe();
  ReluMarginProbe(const ReluMarginProbe&) = delete;
  ReluMarginProbe& operator=(const ReluMarginProbe&) = delete;
  double margin() const { return margin_; }

 private:
  double margin_;
  ReluMarginProbe* previous_;
};
Array exp(const Array& a);
Array log(const Array& a);
Array softplus(const Array& a);
Array sigmoid(const Array& a);
Array square(const Array& a);

Array matmul(const Array& a, const Array& b);
Array transpose(const Array& a);
Array reshape(const Array& a, Shape shape);
// x (rows, cols) + bias (cols).
Array add_bias(const Array& x, const Array& bias);

// Reductions.
Array sum(const Array& a);
Array mean(const Array& a);
// Mean over the last axis; drops it.
Array mean_last(const Array& a);
// Log-sum-exp over the last axis; drops it. Entries with mask == false are
// excluded from the sum. An empty mask means all entries participate.
Array log_sum_exp(const Array& a, const std::vector<bool>& mask = {});
Array softmax(const Array& a);
// Row-wise L2 normalisation along the last axis with a norm floor.
Array l2_normalize(const Array& a, double floor = 1e-12);

// Structural.
// Concatenation of 2-D arrays along axis 0 or axis 1.
Array concat(const Array& a, const Array& b, std::size_t axis);
// x (rows, cols) -> (rows) with out[r] = x[r, cols_index[r]].
Array gather_cols(const Array& x, const std::vector<std::size_t>& cols_index);

// Graph and temporal convolution primitives over (N, C, T, J).
// y[n,c,t,j] = sum_k adj[j,k] x[n,c,t,k]
Array joint_mix(const Array& x, const Array& adjacency);
// 1x1 channel map: y[n,o,t,j] = sum_i w[o,i] x[n,i,t,j] + b[o]
Array channel_map(const Array& x, const Array& weight, const Array& bias);
// Temporal convolution with zero padding (K-1)/2 and the given stride:
// y[n,o,t,j] = b[o] + sum_{i,k} w[o,i,k] x[n,i,t*stride+k-pad,j]
Array temporal_conv(const Array& x, const Array& weight, const Array& bias,
                    std::size_t stride);
// x (N, L, R), weights (L) -> (N, R): y[n,:] = sum_l w[l] x[n,l,:]
Array mix_layers(const Array& x, const Array& weights);

// Central finite-difference gradient check. `fn` must rebuild the graph from
// the given leaves each time it is called and return a scalar. Returns the
// maximum over checked coordinates of |a - n| / max(|a|, |n|, 1e-8).
// When max_coords_per_leaf > 0, that many coordinates per leaf are sampled
// using `seed`; otherwise every coordinate is checked.
struct GradCheckOptions {
  double epsilon = 1e-4;
  std::size_t max_coords_per_leaf = 0;
  unsigned long long seed = 0;
};
double check_gradients(const std::function<Array()>& fn, std::vector<Array> leaves,
                       const GradCheckOptions& options = {});

}  // namespace gesturerep::diff
