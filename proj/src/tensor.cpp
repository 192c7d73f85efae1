#include "mclp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mclp/error.hpp"

namespace mclp {

using detail::TensorNode;

// ---- shape helpers ----

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (const auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

void require_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_rank2(const Tensor& x, const char* who) {
  if (x.rank() != 2)
    throw ShapeError(std::string(who) + ": expected rank-2 tensor, got " +
                     shape_str(x.shape()));
}

// During backward this points at the active sink, if any. Leaf gradients are
// routed there so shared parameters are never written from the graph walk.
thread_local GradSink* g_active_sink = nullptr;

std::vector<double>& grad_buf(TensorNode& n) {
  if (g_active_sink != nullptr && n.parents.empty()) {
    auto& buf = g_active_sink->grads[&n];
    if (buf.empty()) buf.assign(n.value.size(), 0.0);
    return buf;
  }
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

}  // namespace

namespace detail {
Tensor wrap_node(std::shared_ptr<TensorNode> node) {
  return Tensor(std::move(node));
}
}  // namespace detail

namespace {

// Builds an op result. If no input is differentiable the history is dropped
// and the result behaves like a constant.
Tensor op_result(Shape shape, std::vector<double> value,
                 std::vector<const Tensor*> inputs,
                 std::function<void(TensorNode&)> bw) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  node->requires_grad = rg;
  if (rg) {
    node->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
    node->backward_fn = std::move(bw);
  }
  return detail::wrap_node(std::move(node));
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, fill),
                   requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  const auto n = shape_numel(shape);
  if (n < 0) throw ShapeError("negative dimension in " + shape_str(shape));
  if (data.empty()) data.assign(static_cast<std::size_t>(n), 0.0);
  if (static_cast<std::int64_t>(data.size()) != n)
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  return node_->shape[axis];
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(node_->value.size());
}

const std::vector<double>& Tensor::data() const { return node_->value; }

std::vector<double>& Tensor::raw_data() {
  if (!node_->parents.empty())
    throw UsageError("raw_data: refusing to mutate an op result");
  return node_->value;
}

double Tensor::at(std::int64_t i) const {
  if (i < 0 || i >= numel())
    throw ShapeError("flat index " + std::to_string(i) + " out of range");
  return node_->value[static_cast<std::size_t>(i)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  if (rank() != 2) throw ShapeError("2-index access on " + shape_str(shape()));
  if (r < 0 || r >= dim(0) || c < 0 || c >= dim(1))
    throw ShapeError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_str(shape()));
  return node_->value[static_cast<std::size_t>(r * dim(1) + c)];
}

double Tensor::item() const {
  if (numel() != 1)
    throw UsageError("item: tensor has " + std::to_string(numel()) +
                     " elements");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw UsageError("grad: no gradient present for tensor " +
                     shape_str(shape()));
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::add_grad(const std::vector<double>& g, double c) {
  if (g.size() != node_->value.size())
    throw ShapeError("add_grad: buffer of " + std::to_string(g.size()) +
                     " for tensor of " + std::to_string(node_->value.size()));
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += c * g[i];
}

void Tensor::set_requires_grad(bool rg) {
  if (!node_->parents.empty())
    throw UsageError("set_requires_grad: only valid on leaf tensors");
  node_->requires_grad = rg;
}

Tensor Tensor::clone() const {
  return from_data(shape(), node_->value, node_->requires_grad);
}

// ---- backward engine ----

void backward(const Tensor& loss, GradSink* sink) {
  if (!loss.defined()) throw UsageError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw UsageError("backward: loss must be a scalar, got " +
                     shape_str(loss.shape()));
  TensorNode* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS over differentiable ancestors.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  g_active_sink = sink;
  grad_buf(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  g_active_sink = nullptr;
}

// ---- elementwise ops ----

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  return op_result(a.shape(), std::move(out), {&a, &b}, [](TensorNode& self) {
    const auto& g = self.grad;
    for (int k = 0; k < 2; ++k) {
      TensorNode& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& pg = grad_buf(p);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
  return op_result(a.shape(), std::move(out), {&a, &b}, [](TensorNode& self) {
    const auto& g = self.grad;
    if (self.parents[0]->requires_grad) {
      auto& pg = grad_buf(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& pg = grad_buf(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  return op_result(a.shape(), std::move(out), {&a, &b}, [](TensorNode& self) {
    const auto& g = self.grad;
    const auto& va = self.parents[0]->value;
    const auto& vb = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      auto& pg = grad_buf(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * vb[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& pg = grad_buf(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * va[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  const auto n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = px[i] * c;
  return op_result(x.shape(), std::move(out), {&x}, [c](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += c * g[i];
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& x) {
  const auto n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
  }
  return op_result(x.shape(), std::move(out), {&x}, [](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const auto& g = self.grad;
    const auto& v = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(v[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v[i] * v[i]);
      pg[i] += g[i] * (cdf + v[i] * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    // Branch avoids overflow for large negative inputs.
    if (px[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-px[i]));
    } else {
      const double e = std::exp(px[i]);
      out[i] = e / (1.0 + e);
    }
  }
  return op_result(x.shape(), std::move(out), {&x}, [](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const auto& g = self.grad;
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.size(); ++i)
      pg[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor log_clamped(const Tensor& x, double floor) {
  if (floor <= 0.0)
    throw UsageError("log_clamped: floor must be positive");
  const auto n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::log(std::max(px[i], floor));
  return op_result(x.shape(), std::move(out), {&x}, [floor](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const auto& g = self.grad;
    const auto& v = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (v[i] > floor) pg[i] += g[i] / v[i];
  });
}

Tensor detach(const Tensor& x) {
  return Tensor::from_data(x.shape(), x.data(), false);
}

// ---- rank-2 ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  require_shape(b.dim(0) == k, "matmul: inner dims differ, " +
                                   shape_str(a.shape()) + " x " +
                                   shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
      double* crow = C + i * m;
      const double* arow = A + i * k;
      for (std::int64_t l = 0; l < k; ++l) {
        const double av = arow[l];
        const double* brow = B + l * m;
        for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return op_result({n, m}, std::move(out), {&a, &b},
                   [n, k, m](TensorNode& self) {
    const double* G = self.grad.data();
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (pa.requires_grad) {
      // dA[i,l] = sum_j G[i,j] * B[l,j]
      auto& ga = grad_buf(pa);
      const double* B = pb.value.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const double* grow = G + i * m;
        double* garow = ga.data() + i * k;
        for (std::int64_t l = 0; l < k; ++l) {
          const double* brow = B + l * m;
          double acc = 0.0;
          for (std::int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          garow[l] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB[l,j] = sum_i A[i,l] * G[i,j]
      auto& gb = grad_buf(pb);
      const double* A = pa.value.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const double* arow = A + i * k;
        const double* grow = G + i * m;
        for (std::int64_t l = 0; l < k; ++l) {
          const double av = arow[l];
          double* gbrow = gb.data() + l * m;
          for (std::int64_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * m));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[j * n + i] = px[i * m + j];
  return op_result({m, n}, std::move(out), {&x}, [n, m](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::int64_t j = 0; j < m; ++j)
      for (std::int64_t i = 0; i < n; ++i) pg[i * m + j] += g[j * n + i];
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_rowwise");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) +
                     " does not match " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * m));
  const double* px = x.data().data();
  const double* pb = bias.data().data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = px[i * m + j] + pb[j];
  return op_result({n, m}, std::move(out), {&x, &bias},
                   [n, m](TensorNode& self) {
    const double* g = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto& pg = grad_buf(*self.parents[0]);
      for (std::int64_t i = 0; i < n * m; ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& pg = grad_buf(*self.parents[1]);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) pg[j] += g[i * m + j];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  if (x.dim(1) < 1) throw ShapeError("softmax_rows: empty rows");
  check_finite(x, "softmax_rows input");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * m));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = px + i * m;
    double mx = row[0];
    for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    double* orow = out.data() + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < m; ++j) orow[j] *= inv;
  }
  return op_result({n, m}, std::move(out), {&x}, [n, m](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    const double* y = self.value.data();
    for (std::int64_t i = 0; i < n; ++i) {
      const double* grow = g + i * m;
      const double* yrow = y + i * m;
      double dot = 0.0;
      for (std::int64_t j = 0; j < m; ++j) dot += grow[j] * yrow[j];
      double* prow = pg.data() + i * m;
      for (std::int64_t j = 0; j < m; ++j)
        prow[j] += yrow[j] * (grow[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const std::int64_t d = x.shape().back();
  if (d <= 0) throw ShapeError("layer_norm: zero-length feature axis");
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: affine params do not match feature size " +
                     std::to_string(d));
  const std::int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<std::size_t>(rows * d));
  const double* px = x.data().data();
  const double* pgm = gamma.data().data();
  const double* pbt = beta.data().data();
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = px + i * d;
    double mean = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + i * d;
    for (std::int64_t j = 0; j < d; ++j)
      orow[j] = pgm[j] * ((row[j] - mean) * inv) + pbt[j];
  }
  return op_result(x.shape(), std::move(out), {&x, &gamma, &beta},
                   [rows, d, eps](TensorNode& self) {
    const double* g = self.grad.data();
    TensorNode& px = *self.parents[0];
    TensorNode& pgm = *self.parents[1];
    TensorNode& pbt = *self.parents[2];
    const double* xv = px.value.data();
    const double* gm = pgm.value.data();
    std::vector<double> xhat(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < rows; ++i) {
      const double* row = xv + i * d;
      double mean = 0.0;
      for (std::int64_t j = 0; j < d; ++j) mean += row[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double c = row[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::int64_t j = 0; j < d; ++j) xhat[j] = (row[j] - mean) * inv;
      const double* grow = g + i * d;
      if (pgm.requires_grad) {
        auto& gg = grad_buf(pgm);
        for (std::int64_t j = 0; j < d; ++j) gg[j] += grow[j] * xhat[j];
      }
      if (pbt.requires_grad) {
        auto& gb = grad_buf(pbt);
        for (std::int64_t j = 0; j < d; ++j) gb[j] += grow[j];
      }
      if (px.requires_grad) {
        auto& gx = grad_buf(px);
        double mean_gy = 0.0, mean_gy_xhat = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          const double gy = grow[j] * gm[j];
          mean_gy += gy;
          mean_gy_xhat += gy * xhat[j];
        }
        mean_gy /= static_cast<double>(d);
        mean_gy_xhat /= static_cast<double>(d);
        double* gxrow = gx.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) {
          const double gy = grow[j] * gm[j];
          gxrow[j] += inv * (gy - mean_gy - xhat[j] * mean_gy_xhat);
        }
      }
    }
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank2(x, "l2_normalize_rows");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * d));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = px + i * d;
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double norm = std::max(std::sqrt(sq), eps);
    const double inv = 1.0 / norm;
    double* orow = out.data() + i * d;
    for (std::int64_t j = 0; j < d; ++j) orow[j] = row[j] * inv;
  }
  return op_result({n, d}, std::move(out), {&x}, [n, d, eps](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    const double* xv = self.parents[0]->value.data();
    const double* y = self.value.data();
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = xv + i * d;
      double sq = 0.0;
      for (std::int64_t j = 0; j < d; ++j) sq += row[j] * row[j];
      const double norm = std::sqrt(sq);
      const double* grow = g + i * d;
      double* prow = pg.data() + i * d;
      if (norm > eps) {
        const double* yrow = y + i * d;
        double dot = 0.0;
        for (std::int64_t j = 0; j < d; ++j) dot += grow[j] * yrow[j];
        const double inv = 1.0 / norm;
        for (std::int64_t j = 0; j < d; ++j)
          prow[j] += inv * (grow[j] - yrow[j] * dot);
      } else {
        const double inv = 1.0 / eps;
        for (std::int64_t j = 0; j < d; ++j) prow[j] += grow[j] * inv;
      }
    }
  });
}

Tensor row_sums(const Tensor& x) {
  require_rank2(x, "row_sums");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < m; ++j) acc += px[i * m + j];
    out[i] = acc;
  }
  return op_result({n, 1}, std::move(out), {&x}, [n, m](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < m; ++j) pg[i * m + j] += g[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  require_rank2(parts[0], "concat_rows");
  const std::int64_t m = parts[0].dim(1);
  std::int64_t n = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    require_shape(p.dim(1) == m, "concat_rows: column mismatch");
    n += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * m));
  for (const auto& p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<std::int64_t> row_of(parts.size());
  {
    std::int64_t r = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      row_of[k] = r;
      r += parts[k].dim(0);
    }
  }
  std::vector<const Tensor*> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) ins.push_back(&p);
  return op_result({n, m}, std::move(out), std::move(ins),
                   [row_of, m](TensorNode& self) {
    const double* g = self.grad.data();
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      TensorNode& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& pg = grad_buf(p);
      const double* src = g + row_of[k] * m;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += src[i];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no parts");
  require_rank2(parts[0], "concat_cols");
  const std::int64_t n = parts[0].dim(0);
  std::int64_t m = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    require_shape(p.dim(0) == n, "concat_cols: row mismatch");
    m += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(n * m));
  std::vector<std::int64_t> col_of(parts.size());
  {
    std::int64_t c = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      col_of[k] = c;
      const std::int64_t w = parts[k].dim(1);
      const double* src = parts[k].data().data();
      for (std::int64_t i = 0; i < n; ++i)
        std::copy_n(src + i * w, w, out.data() + i * m + c);
      c += w;
    }
  }
  std::vector<std::int64_t> width_of(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) width_of[k] = parts[k].dim(1);
  std::vector<const Tensor*> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) ins.push_back(&p);
  return op_result({n, m}, std::move(out), std::move(ins),
                   [col_of, width_of, n, m](TensorNode& self) {
    const double* g = self.grad.data();
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      TensorNode& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& pg = grad_buf(p);
      const std::int64_t w = width_of[k];
      for (std::int64_t i = 0; i < n; ++i) {
        const double* src = g + i * m + col_of[k];
        double* dst = pg.data() + i * w;
        for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
      }
    }
  });
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len) {
  require_rank2(x, "slice_cols");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  if (start < 0 || len <= 0 || start + len > m)
    throw ShapeError("slice_cols: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " +
                     std::to_string(m) + " columns");
  std::vector<double> out(static_cast<std::size_t>(n * len));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < len; ++j)
      out[i * len + j] = px[i * m + start + j];
  return op_result({n, len}, std::move(out), {&x},
                   [n, m, start, len](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < len; ++j)
        pg[i * m + start + j] += g[i * len + j];
  });
}

Tensor gather_rows(const Tensor& x, std::vector<std::int64_t> index) {
  require_rank2(x, "gather_rows");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  for (const auto i : index)
    if (i < 0 || i >= n)
      throw ShapeError("gather_rows: row " + std::to_string(i) +
                       " out of range [0," + std::to_string(n) + ")");
  const std::int64_t k = static_cast<std::int64_t>(index.size());
  std::vector<double> out(static_cast<std::size_t>(k * m));
  const double* px = x.data().data();
  for (std::int64_t r = 0; r < k; ++r)
    std::copy_n(px + index[r] * m, m, out.data() + r * m);
  return op_result({k, m}, std::move(out), {&x},
                   [index = std::move(index), m](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < index.size(); ++r) {
      double* dst = pg.data() + index[r] * m;
      const double* src = g + static_cast<std::int64_t>(r) * m;
      for (std::int64_t j = 0; j < m; ++j) dst[j] += src[j];
    }
  });
}

Tensor take_per_row(const Tensor& x, std::vector<std::int64_t> index) {
  require_rank2(x, "take_per_row");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  if (static_cast<std::int64_t>(index.size()) != n)
    throw ShapeError("take_per_row: need one column index per row");
  for (const auto j : index)
    if (j < 0 || j >= m)
      throw ShapeError("take_per_row: column " + std::to_string(j) +
                       " out of range");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* px = x.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = px[i * m + index[i]];
  return op_result({n, 1}, std::move(out), {&x},
                   [index = std::move(index), m](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < index.size(); ++i)
      pg[static_cast<std::int64_t>(i) * m + index[i]] += g[i];
  });
}

Tensor tile_rows(const Tensor& v, std::int64_t n) {
  if (v.rank() != 1) throw ShapeError("tile_rows: expected rank-1 vector");
  if (n <= 0) throw ShapeError("tile_rows: non-positive row count");
  const std::int64_t d = v.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n * d));
  const double* pv = v.data().data();
  for (std::int64_t i = 0; i < n; ++i) std::copy_n(pv, d, out.data() + i * d);
  return op_result({n, d}, std::move(out), {&v}, [n, d](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j) pg[j] += g[i * d + j];
  });
}

// ---- reductions ----

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (const double v : x.data()) acc += v;
  return op_result({}, {acc}, {&x}, [](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double g = self.grad[0];
    for (auto& p : pg) p += g;
  });
}

Tensor mean_all(const Tensor& x) {
  const std::int64_t n = x.numel();
  if (n == 0) throw ShapeError("mean_all: empty tensor");
  double acc = 0.0;
  for (const double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(n);
  return op_result({}, {acc * inv}, {&x}, [inv](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& pg = grad_buf(*self.parents[0]);
    const double g = self.grad[0] * inv;
    for (auto& p : pg) p += g;
  });
}

// ---- helpers ----

bool all_finite(const Tensor& x) {
  for (const double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& x, const std::string& context) {
  if (!all_finite(x))
    throw NumericError(context + ": non-finite value encountered");
}

}  // namespace mclp
