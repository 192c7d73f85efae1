#include "mclp/layers.hpp"

#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

Tensor init_weight(std::int64_t rows, std::int64_t cols, Rng& rng,
                   bool requires_grad, double stddev) {
  std::vector<double> data(static_cast<std::size_t>(rows * cols));
  for (auto& v : data) v = rng.normal(0.0, stddev);
  return Tensor::from_data({rows, cols}, std::move(data), requires_grad);
}

Tensor init_bias(std::int64_t n, bool requires_grad) {
  return Tensor::zeros({n}, requires_grad);
}

BlockParams BlockParams::init(int d, int hidden, Rng& rng, bool rg) {
  BlockParams p;
  p.ln1_g = Tensor::full({d}, 1.0, rg);
  p.ln1_b = Tensor::zeros({d}, rg);
  p.wq = init_weight(d, d, rng, rg);
  p.bq = init_bias(d, rg);
  p.wk = init_weight(d, d, rng, rg);
  p.bk = init_bias(d, rg);
  p.wv = init_weight(d, d, rng, rg);
  p.bv = init_bias(d, rg);
  p.wo = init_weight(d, d, rng, rg);
  p.bo = init_bias(d, rg);
  p.ln2_g = Tensor::full({d}, 1.0, rg);
  p.ln2_b = Tensor::zeros({d}, rg);
  p.w1 = init_weight(d, hidden, rng, rg);
  p.b1 = init_bias(hidden, rg);
  p.w2 = init_weight(hidden, d, rng, rg);
  p.b2 = init_bias(d, rg);
  return p;
}

void BlockParams::register_into(ParamMap& map, const std::string& pre) const {
  map.insert(pre + ".ln1.g", ln1_g);
  map.insert(pre + ".ln1.b", ln1_b);
  map.insert(pre + ".attn.wq", wq);
  map.insert(pre + ".attn.bq", bq);
  map.insert(pre + ".attn.wk", wk);
  map.insert(pre + ".attn.bk", bk);
  map.insert(pre + ".attn.wv", wv);
  map.insert(pre + ".attn.bv", bv);
  map.insert(pre + ".attn.wo", wo);
  map.insert(pre + ".attn.bo", bo);
  map.insert(pre + ".ln2.g", ln2_g);
  map.insert(pre + ".ln2.b", ln2_b);
  map.insert(pre + ".mlp.w1", w1);
  map.insert(pre + ".mlp.b1", b1);
  map.insert(pre + ".mlp.w2", w2);
  map.insert(pre + ".mlp.b2", b2);
}

BlockParams BlockParams::clone() const {
  BlockParams c;
  c.ln1_g = ln1_g.clone();
  c.ln1_b = ln1_b.clone();
  c.wq = wq.clone();
  c.bq = bq.clone();
  c.wk = wk.clone();
  c.bk = bk.clone();
  c.wv = wv.clone();
  c.bv = bv.clone();
  c.wo = wo.clone();
  c.bo = bo.clone();
  c.ln2_g = ln2_g.clone();
  c.ln2_b = ln2_b.clone();
  c.w1 = w1.clone();
  c.b1 = b1.clone();
  c.w2 = w2.clone();
  c.b2 = b2.clone();
  return c;
}

Tensor attention_block(const Tensor& x, const BlockParams& p, int heads,
                       double ln_eps) {
  if (x.rank() != 2)
    throw ShapeError("attention_block: expected [n,d], got " +
                     shape_str(x.shape()));
  const std::int64_t d = x.dim(1);
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("attention_block: heads=" + std::to_string(heads) +
                      " does not divide d=" + std::to_string(d));
  const std::int64_t hd = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor h = layer_norm(x, p.ln1_g, p.ln1_b, ln_eps);
  Tensor q = add_rowwise(matmul(h, p.wq), p.bq);
  Tensor k = add_rowwise(matmul(h, p.wk), p.bk);
  Tensor v = add_rowwise(matmul(h, p.wv), p.bv);

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int hh = 0; hh < heads; ++hh) {
    const std::int64_t c0 = hh * hd;
    Tensor qh = slice_cols(q, c0, hd);
    Tensor kh = slice_cols(k, c0, hd);
    Tensor vh = slice_cols(v, c0, hd);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    Tensor attn = softmax_rows(scores);
    head_outs.push_back(matmul(attn, vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  Tensor attn_out = add_rowwise(matmul(merged, p.wo), p.bo);
  Tensor x1 = add(x, attn_out);

  Tensor h2 = layer_norm(x1, p.ln2_g, p.ln2_b, ln_eps);
  Tensor m1 = gelu(add_rowwise(matmul(h2, p.w1), p.b1));
  Tensor m2 = add_rowwise(matmul(m1, p.w2), p.b2);
  return add(x1, m2);
}

}  // namespace mclp
