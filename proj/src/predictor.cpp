#include "mclp/predictor.hpp"

#include <numeric>

#include "mclp/error.hpp"

namespace mclp {

PredictorParams PredictorParams::init(const PredictorConfig& cfg, Rng& rng,
                                      bool requires_grad) {
  if (cfg.embed_dim <= 0 || cfg.blocks <= 0 || cfg.max_patches <= 0)
    throw ConfigError("predictor: non-positive size in config");
  if (cfg.embed_dim % cfg.heads != 0)
    throw ConfigError("predictor: embed_dim not divisible by heads");
  if (cfg.hypotheses < 1)
    throw ConfigError("predictor: at least one hypothesis head required");
  PredictorParams p;
  p.cfg = cfg;
  {
    // Stored rank-1 so weight decay never touches it.
    std::vector<double> vals(static_cast<std::size_t>(cfg.embed_dim));
    for (auto& x : vals) x = rng.normal(0.0, 0.02);
    p.mask_token =
        Tensor::from_data({cfg.embed_dim}, std::move(vals), requires_grad);
  }
  p.pos = init_weight(cfg.max_patches, cfg.embed_dim, rng, requires_grad);
  p.blocks.reserve(static_cast<std::size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i)
    p.blocks.push_back(
        BlockParams::init(cfg.embed_dim, cfg.hidden(), rng, requires_grad));
  p.final_g = Tensor::full({cfg.embed_dim}, 1.0, requires_grad);
  p.final_b = Tensor::zeros({cfg.embed_dim}, requires_grad);
  p.head_w.reserve(static_cast<std::size_t>(cfg.hypotheses));
  p.head_b.reserve(static_cast<std::size_t>(cfg.hypotheses));
  for (int j = 0; j < cfg.hypotheses; ++j) {
    p.head_w.push_back(
        init_weight(cfg.embed_dim, cfg.embed_dim, rng, requires_grad));
    p.head_b.push_back(init_bias(cfg.embed_dim, requires_grad));
  }
  return p;
}

void PredictorParams::register_into(ParamMap& map,
                                    const std::string& prefix) const {
  map.insert(prefix + ".mask_token", mask_token);
  map.insert(prefix + ".pos", pos);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].register_into(map, prefix + ".blk" + std::to_string(i));
  map.insert(prefix + ".final.g", final_g);
  map.insert(prefix + ".final.b", final_b);
  for (std::size_t j = 0; j < head_w.size(); ++j) {
    map.insert(prefix + ".head" + std::to_string(j) + ".w", head_w[j]);
    map.insert(prefix + ".head" + std::to_string(j) + ".b", head_b[j]);
  }
}

HypothesisSet predict_masked(const PredictorParams& p,
                             const Tensor& visible_latents,
                             const MaskSplit& split) {
  const std::int64_t v = split.visible_count();
  const std::int64_t m = split.masked_count();
  if (visible_latents.rank() != 2 || visible_latents.dim(0) != v)
    throw ShapeError("predict_masked: visible latents " +
                     shape_str(visible_latents.shape()) + " do not match " +
                     std::to_string(v) + " visible positions");
  if (visible_latents.dim(1) != p.cfg.embed_dim)
    throw ShapeError("predict_masked: latent width " +
                     std::to_string(visible_latents.dim(1)) +
                     ", predictor expects " + std::to_string(p.cfg.embed_dim));
  if (split.total > p.cfg.max_patches)
    throw ConfigError("predict_masked: " + std::to_string(split.total) +
                      " positions exceed the position table of " +
                      std::to_string(p.cfg.max_patches));

  // Rows 0..v-1 are the visible latents, rows v..v+m-1 the mask token.
  Tensor stacked =
      concat_rows({visible_latents, tile_rows(p.mask_token, m)});

  // order[g] is the stacked row holding grid position g.
  std::vector<std::int64_t> order(static_cast<std::size_t>(split.total));
  for (std::int64_t i = 0; i < v; ++i)
    order[static_cast<std::size_t>(split.visible_idx[i])] = i;
  for (std::int64_t i = 0; i < m; ++i)
    order[static_cast<std::size_t>(split.masked_idx[i])] = v + i;
  Tensor seq = gather_rows(stacked, std::move(order));

  std::vector<std::int64_t> pos_idx(static_cast<std::size_t>(split.total));
  std::iota(pos_idx.begin(), pos_idx.end(), 0);
  seq = add(seq, gather_rows(p.pos, std::move(pos_idx)));

  for (const BlockParams& blk : p.blocks)
    seq = attention_block(seq, blk, p.cfg.heads, p.cfg.ln_eps);
  seq = layer_norm(seq, p.final_g, p.final_b, p.cfg.ln_eps);

  Tensor masked_rows = gather_rows(seq, split.masked_idx);

  HypothesisSet out;
  out.items.reserve(p.head_w.size());
  for (std::size_t j = 0; j < p.head_w.size(); ++j)
    out.items.push_back(
        add_rowwise(matmul(masked_rows, p.head_w[j]), p.head_b[j]));
  return out;
}

}  // namespace mclp
