#pragma once

#include <vector>

#include "mclp/layers.hpp"
#include "mclp/param_map.hpp"
#include "mclp/patch.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

struct EncoderConfig {
  int patch_dim = kPatchDim;
  int embed_dim = 64;
  int blocks = 3;
  int heads = 4;
  // 0 means 4 * embed_dim.
  int mlp_hidden = 0;
  // Capacity of the learned position table, indexed by flattened grid
  // position. The grid shape must stay fixed for the life of a model.
  int max_patches = 512;
  double ln_eps = 1e-5;

  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * embed_dim; }
};

// Patch embedding, learned positions, pre-norm transformer blocks, final
// layer norm. The same structure serves as the online model and, with
// gradients off, as its momentum copy.
struct EncoderParams {
  EncoderConfig cfg;
  Tensor embed_w;
  Tensor embed_b;
  Tensor pos;
  std::vector<BlockParams> blocks;
  Tensor final_g;
  Tensor final_b;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng,
                            bool requires_grad = true);
  void register_into(ParamMap& map, const std::string& prefix) const;
};

// Linear patch projection plus position rows. Positions are the flattened
// grid indices 0..count-1; counts past the table raise ConfigError.
Tensor embed_patches(const EncoderParams& p, const PatchBatch& batch);

// Transformer trunk over already-embedded rows, final norm included.
Tensor encode(const EncoderParams& p, const Tensor& embedded);

// Deep copy with gradients off, the starting point of a momentum encoder.
EncoderParams make_momentum_copy(const EncoderParams& p);

}  // namespace mclp
