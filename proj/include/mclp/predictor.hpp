#pragma once

#include <vector>

#include "mclp/layers.hpp"
#include "mclp/param_map.hpp"
#include "mclp/patch.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

struct PredictorConfig {
  int embed_dim = 64;
  int blocks = 2;
  int heads = 4;
  // 0 means 4 * embed_dim.
  int mlp_hidden = 0;
  // Number of parallel guesses emitted per masked position.
  int hypotheses = 3;
  int max_patches = 512;
  double ln_eps = 1e-5;

  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * embed_dim; }
};

// Fills masked positions with a learned token, adds its own position table,
// runs a small transformer over the full sequence, and reads the masked rows
// out through one linear head per hypothesis.
struct PredictorParams {
  PredictorConfig cfg;
  Tensor mask_token;
  Tensor pos;
  std::vector<BlockParams> blocks;
  Tensor final_g;
  Tensor final_b;
  std::vector<Tensor> head_w;
  std::vector<Tensor> head_b;

  static PredictorParams init(const PredictorConfig& cfg, Rng& rng,
                              bool requires_grad = true);
  void register_into(ParamMap& map, const std::string& prefix) const;
};

// r guesses for the masked rows, each [masked, embed_dim], in head order.
// Rows within each guess follow split.masked_idx.
struct HypothesisSet {
  std::vector<Tensor> items;
  int count() const { return static_cast<int>(items.size()); }
};

// visible_latents rows must follow split.visible_idx. The sequence is
// reassembled in grid order before the trunk runs, so the predictor sees
// every position exactly once.
HypothesisSet predict_masked(const PredictorParams& p,
                             const Tensor& visible_latents,
                             const MaskSplit& split);

}  // namespace mclp
