#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace mclp {

using Shape = std::vector<std::int64_t>;

class Tensor;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily; empty means "all zero"
  bool requires_grad = false;
  // Non-empty parents marks an interior node produced by an op. Leaves
  // (parameters, constants) have no parents and no backward_fn.
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
};

// Builds a Tensor handle around a finished node. Internal to the op layer.
Tensor wrap_node(std::shared_ptr<TensorNode> node);

}  // namespace detail

// Collects gradients for leaf nodes during backward instead of writing them
// into the nodes themselves. Lets a caller run several backward passes over
// shared parameters and reduce the contributions in an order it controls.
struct GradSink {
  std::unordered_map<const detail::TensorNode*, std::vector<double>> grads;
};

// A tensor of doubles with an optional autodiff history. Copying a Tensor
// copies a handle, not the storage; values are never mutated by ops once
// produced. raw_data() exists solely for parameter updates (optimizer, EMA)
// and must not be used on interior graph nodes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  // Rank-2 convenience accessors.
  std::int64_t rows() const { return dim(0); }
  std::int64_t cols() const { return dim(1); }

  const std::vector<double>& data() const;
  std::vector<double>& raw_data();
  double at(std::int64_t i) const;
  double at(std::int64_t r, std::int64_t c) const;
  double item() const;  // numel()==1 only

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if no gradient present
  void zero_grad();                         // allocates (or clears) the buffer
  // Adds c * g into the gradient buffer, allocating it first when absent.
  void add_grad(const std::vector<double>& g, double c = 1.0);
  void set_requires_grad(bool rg);

  // Deep value copy with no history. requires_grad carries over.
  Tensor clone() const;

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor detail::wrap_node(std::shared_ptr<detail::TensorNode> node);
};

// Runs reverse-mode accumulation from a scalar loss. Every requires_grad
// leaf reachable from the loss receives its gradient; with a sink, leaf
// gradients land in the sink and the leaves themselves stay untouched.
void backward(const Tensor& loss, GradSink* sink = nullptr);

// ---- elementwise and structural ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// log(max(x, floor)); gradient is zero inside the clamped region.
Tensor log_clamped(const Tensor& x, double floor);
Tensor detach(const Tensor& x);

// ---- rank-2 ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// [n,d] + [d], bias broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);
// Normalizes the last axis to zero mean, unit variance, then applies the
// affine (scale, offset), both rank-1 of the feature length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);
// Each row divided by max(l2 norm, eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
Tensor row_sums(const Tensor& x);                       // [n,m] -> [n,1]
Tensor concat_rows(const std::vector<Tensor>& parts);   // stack along rows
Tensor concat_cols(const std::vector<Tensor>& parts);   // stack along cols
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len);
Tensor gather_rows(const Tensor& x, std::vector<std::int64_t> index);
// out[i, 0] = x[i, index[i]]
Tensor take_per_row(const Tensor& x, std::vector<std::int64_t> index);
// Broadcast a rank-1 [d] vector to [n, d]; gradient sums over rows.
Tensor tile_rows(const Tensor& v, std::int64_t n);

// ---- reductions ----

Tensor sum_all(const Tensor& x);   // -> scalar (rank 0)
Tensor mean_all(const Tensor& x);  // -> scalar (rank 0)

// ---- non-differentiable helpers ----

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);
bool all_finite(const Tensor& x);
// Throws NumericError naming `context` if x holds a NaN or Inf.
void check_finite(const Tensor& x, const std::string& context);

}  // namespace mclp
