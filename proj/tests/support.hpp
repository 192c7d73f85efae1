#pragma once

// Shared helpers for the unit suites. The finite-difference checker here is
// intentionally separate from the library's own grad_check so the two can
// vouch for each other.

#include <cmath>
#include <functional>
#include <vector>

#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace test_support {

inline mclp::Tensor random_tensor(mclp::Shape shape, std::uint64_t seed,
                                  bool requires_grad = false,
                                  double scale = 1.0) {
  mclp::Rng rng(seed);
  std::vector<double> data(
      static_cast<std::size_t>(mclp::shape_numel(shape)));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return mclp::Tensor::from_data(std::move(shape), std::move(data),
                                 requires_grad);
}

// Fixed random projection to a scalar, so gradients are generic rather than
// all-ones.
inline mclp::Tensor project_to_scalar(const mclp::Tensor& x,
                                      std::uint64_t seed) {
  mclp::Tensor w = random_tensor(x.shape(), seed);
  return mclp::sum_all(mclp::mul(x, w));
}

struct FdResult {
  double max_rel_err = 0.0;
  std::int64_t entries = 0;
};

// Central differences over every entry of every listed parameter.
// loss_fn must rebuild the graph from current parameter values each call.
inline FdResult fd_compare(const std::function<mclp::Tensor()>& loss_fn,
                           std::vector<mclp::Tensor> params,
                           double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  mclp::Tensor loss = loss_fn();
  mclp::backward(loss);

  FdResult res;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto& w = p.raw_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = loss_fn().item();
      w[i] = saved - h;
      const double down = loss_fn().item();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom =
          std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      res.max_rel_err =
          std::max(res.max_rel_err, std::abs(analytic[i] - numeric) / denom);
      res.entries += 1;
    }
  }
  return res;
}

}  // namespace test_support
