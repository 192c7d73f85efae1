#pragma once

#include <string>
#include <vector>

#include "mclp/param_map.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

// One pre-norm transformer block: multi-head self-attention and a GELU MLP,
// each behind a layer norm and wrapped in a residual connection.
struct BlockParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;

  static BlockParams init(int d, int hidden, Rng& rng, bool requires_grad);
  void register_into(ParamMap& map, const std::string& prefix) const;
  // Deep copy; the copy keeps the gradient flags of the source.
  BlockParams clone() const;
};

// Applies the block to x [n, d]. heads must divide d.
Tensor attention_block(const Tensor& x, const BlockParams& p, int heads,
                       double ln_eps);

// Weight init used across the model: normal(0, 0.02) matrices, zero biases,
// identity layer norms.
Tensor init_weight(std::int64_t rows, std::int64_t cols, Rng& rng,
                   bool requires_grad, double stddev = 0.02);
Tensor init_bias(std::int64_t n, bool requires_grad);

}  // namespace mclp
