#include <cmath>
#include <vector>

#include "doctest.h"
#include "mclp/error.hpp"
#include "mclp/layers.hpp"
#include "support.hpp"

using namespace mclp;
using test_support::fd_compare;
using test_support::project_to_scalar;
using test_support::random_tensor;

namespace {

// Plain-loop re-implementation of the block, written independently of the
// graph ops. Used as the forward oracle.
std::vector<double> naive_block(const std::vector<double>& x, std::int64_t n,
                                std::int64_t d, const BlockParams& p,
                                int heads, double eps) {
  auto ln = [&](const std::vector<double>& in, const Tensor& g,
                const Tensor& b) {
    std::vector<double> out(in.size());
    for (std::int64_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::int64_t j = 0; j < d; ++j) mean += in[i * d + j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double c = in[i * d + j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::int64_t j = 0; j < d; ++j)
        out[i * d + j] = g.at(j) * (in[i * d + j] - mean) * inv + b.at(j);
    }
    return out;
  };
  auto linear = [&](const std::vector<double>& in, const Tensor& w,
                    const Tensor& b, std::int64_t din, std::int64_t dout) {
    std::vector<double> out(static_cast<std::size_t>(n * dout), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t o = 0; o < dout; ++o) {
        double acc = b.at(o);
        for (std::int64_t l = 0; l < din; ++l)
          acc += in[i * din + l] * w.at(l, o);
        out[i * dout + o] = acc;
      }
    return out;
  };

  const std::vector<double> h = ln(x, p.ln1_g, p.ln1_b);
  const auto q = linear(h, p.wq, p.bq, d, d);
  const auto k = linear(h, p.wk, p.bk, d, d);
  const auto v = linear(h, p.wv, p.bv, d, d);
  const std::int64_t hd = d / heads;
  std::vector<double> merged(static_cast<std::size_t>(n * d), 0.0);
  for (int hh = 0; hh < heads; ++hh) {
    const std::int64_t c0 = hh * hd;
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (std::int64_t j2 = 0; j2 < n; ++j2) {
        double acc = 0.0;
        for (std::int64_t l = 0; l < hd; ++l)
          acc += q[i * d + c0 + l] * k[j2 * d + c0 + l];
        scores[j2] = acc / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, scores[j2]);
      }
      double sum = 0.0;
      for (auto& s : scores) {
        s = std::exp(s - mx);
        sum += s;
      }
      for (auto& s : scores) s /= sum;
      for (std::int64_t l = 0; l < hd; ++l) {
        double acc = 0.0;
        for (std::int64_t j2 = 0; j2 < n; ++j2)
          acc += scores[j2] * v[j2 * d + c0 + l];
        merged[i * d + c0 + l] = acc;
      }
    }
  }
  const auto attn_out = linear(merged, p.wo, p.bo, d, d);
  std::vector<double> x1(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x1[i] = x[i] + attn_out[i];

  const auto h2 = ln(x1, p.ln2_g, p.ln2_b);
  const std::int64_t hidden = p.w1.dim(1);
  auto m1 = linear(h2, p.w1, p.b1, d, hidden);
  for (auto& u : m1) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
  const auto m2 = linear(m1, p.w2, p.b2, hidden, d);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x1[i] + m2[i];
  return out;
}

}  // namespace

TEST_CASE("attention block matches a step-by-step scalar expansion") {
  Rng rng(2024);
  const int d = 4, heads = 2;
  BlockParams p = BlockParams::init(d, 4 * d, rng, false);
  Tensor x = random_tensor({2, d}, 55);
  Tensor y = attention_block(x, p, heads, 1e-5);
  const auto ref = naive_block(x.data(), 2, d, p, heads, 1e-5);
  REQUIRE(static_cast<std::size_t>(y.numel()) == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("attention block is permutation-equivariant without positions") {
  Rng rng(77);
  const int d = 8, heads = 4;
  BlockParams p = BlockParams::init(d, 4 * d, rng, false);
  Tensor x = random_tensor({5, d}, 10);
  Tensor y = attention_block(x, p, heads, 1e-6);
  const std::vector<std::int64_t> perm = {3, 0, 4, 1, 2};
  Tensor xp = gather_rows(x, perm);
  Tensor yp = attention_block(xp, p, heads, 1e-6);
  for (std::int64_t i = 0; i < 5; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(yp.at(i, j) == doctest::Approx(y.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("attention block rejects head counts that do not divide d") {
  Rng rng(1);
  BlockParams p = BlockParams::init(6, 24, rng, false);
  Tensor x = random_tensor({3, 6}, 2);
  CHECK_THROWS_AS(attention_block(x, p, 4, 1e-5), ConfigError);
}

TEST_CASE("attention block gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const int d = 4, heads = 2;
    BlockParams p = BlockParams::init(d, 2 * d, rng, true);
    Tensor x = random_tensor({3, d}, seed + 40, true);
    ParamMap map;
    p.register_into(map, "blk");
    std::vector<Tensor> params = {x};
    for (auto& [n, t] : map.items) params.push_back(t);
    const auto res = fd_compare(
        [&] {
          return project_to_scalar(attention_block(x, p, heads, 1e-5),
                                   seed + 90);
        },
        params);
    CHECK(res.max_rel_err < 1e-4);
  }
}
