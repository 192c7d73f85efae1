#include "mclp/encoder.hpp"

#include <numeric>

#include "mclp/error.hpp"

namespace mclp {

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng,
                                  bool requires_grad) {
  if (cfg.embed_dim <= 0 || cfg.blocks <= 0 || cfg.max_patches <= 0)
    throw ConfigError("encoder: non-positive size in config");
  if (cfg.embed_dim % cfg.heads != 0)
    throw ConfigError("encoder: embed_dim not divisible by heads");
  EncoderParams p;
  p.cfg = cfg;
  p.embed_w = init_weight(cfg.patch_dim, cfg.embed_dim, rng, requires_grad);
  p.embed_b = init_bias(cfg.embed_dim, requires_grad);
  p.pos = init_weight(cfg.max_patches, cfg.embed_dim, rng, requires_grad);
  p.blocks.reserve(static_cast<std::size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i)
    p.blocks.push_back(
        BlockParams::init(cfg.embed_dim, cfg.hidden(), rng, requires_grad));
  p.final_g = Tensor::full({cfg.embed_dim}, 1.0, requires_grad);
  p.final_b = Tensor::zeros({cfg.embed_dim}, requires_grad);
  return p;
}

void EncoderParams::register_into(ParamMap& map,
                                  const std::string& prefix) const {
  map.insert(prefix + ".embed.w", embed_w);
  map.insert(prefix + ".embed.b", embed_b);
  map.insert(prefix + ".pos", pos);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].register_into(map, prefix + ".blk" + std::to_string(i));
  map.insert(prefix + ".final.g", final_g);
  map.insert(prefix + ".final.b", final_b);
}

Tensor embed_patches(const EncoderParams& p, const PatchBatch& batch) {
  const std::int64_t n = batch.count();
  if (n == 0) throw UsageError("embed_patches: empty batch");
  if (batch.patches.dim(1) != p.cfg.patch_dim)
    throw ShapeError("embed_patches: patch dim " +
                     std::to_string(batch.patches.dim(1)) + ", model expects " +
                     std::to_string(p.cfg.patch_dim));
  if (n > p.cfg.max_patches)
    throw ConfigError("embed_patches: " + std::to_string(n) +
                      " patches exceed the position table of " +
                      std::to_string(p.cfg.max_patches));
  Tensor x = add_rowwise(matmul(batch.patches, p.embed_w), p.embed_b);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return add(x, gather_rows(p.pos, std::move(idx)));
}

Tensor encode(const EncoderParams& p, const Tensor& embedded) {
  Tensor x = embedded;
  for (const BlockParams& blk : p.blocks)
    x = attention_block(x, blk, p.cfg.heads, p.cfg.ln_eps);
  return layer_norm(x, p.final_g, p.final_b, p.cfg.ln_eps);
}

EncoderParams make_momentum_copy(const EncoderParams& p) {
  EncoderParams out;
  out.cfg = p.cfg;
  out.embed_w = p.embed_w.clone();
  out.embed_b = p.embed_b.clone();
  out.pos = p.pos.clone();
  out.blocks.reserve(p.blocks.size());
  for (const BlockParams& blk : p.blocks) out.blocks.push_back(blk.clone());
  out.final_g = p.final_g.clone();
  out.final_b = p.final_b.clone();
  ParamMap all;
  out.register_into(all, "m");
  for (auto& [name, t] : all.items) t.set_requires_grad(false);
  return out;
}

}  // namespace mclp
