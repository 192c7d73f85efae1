#include "mclp/objectives.hpp"

#include <cmath>

#include "mclp/error.hpp"
#include "mclp/layers.hpp"

namespace mclp {

HypothesisStrategy parse_strategy(const std::string& name) {
  if (name == "annealed") return HypothesisStrategy::annealed;
  if (name == "mean") return HypothesisStrategy::mean;
  if (name == "greedy") return HypothesisStrategy::greedy;
  throw ConfigError("unknown hypothesis strategy \"" + name +
                    "\" (annealed, mean, greedy)");
}

const char* strategy_name(HypothesisStrategy s) {
  switch (s) {
    case HypothesisStrategy::annealed: return "annealed";
    case HypothesisStrategy::mean: return "mean";
    case HypothesisStrategy::greedy: return "greedy";
  }
  return "?";
}

Tensor hypothesis_distances(const HypothesisSet& hyps, const Tensor& targets) {
  if (hyps.items.empty())
    throw UsageError("hypothesis_distances: empty guess set");
  Tensor zt = l2_normalize_rows(targets);
  std::vector<Tensor> cols;
  cols.reserve(hyps.items.size());
  for (const Tensor& h : hyps.items) {
    if (h.shape() != targets.shape())
      throw ShapeError("hypothesis_distances: guess " + shape_str(h.shape()) +
                       " vs targets " + shape_str(targets.shape()));
    Tensor diff = sub(l2_normalize_rows(h), zt);
    cols.push_back(row_sums(mul(diff, diff)));
  }
  return concat_cols(cols);
}

Tensor soft_assignment(const Tensor& distances, double tau) {
  if (tau <= 0.0)
    throw ConfigError("soft_assignment: tau " + std::to_string(tau) +
                      " must be positive");
  return softmax_rows(scale(distances, -1.0 / tau));
}

std::vector<std::int64_t> winners_of(const Tensor& distances) {
  const std::int64_t n = distances.dim(0);
  const std::int64_t r = distances.dim(1);
  const auto& d = distances.data();
  std::vector<std::int64_t> winners(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < r; ++j)
      if (d[static_cast<std::size_t>(i * r + j)] <
          d[static_cast<std::size_t>(i * r + best)])
        best = j;
    winners[static_cast<std::size_t>(i)] = best;
  }
  return winners;
}

Tensor annealed_prediction_loss(const Tensor& distances, double tau) {
  Tensor weights = soft_assignment(distances, tau);
  return mean_all(row_sums(mul(weights, distances)));
}

Tensor greedy_prediction_loss(const Tensor& distances) {
  return mean_all(take_per_row(distances, winners_of(distances)));
}

Tensor mean_prediction_loss(const HypothesisSet& hyps, const Tensor& targets) {
  if (hyps.items.empty())
    throw UsageError("mean_prediction_loss: empty guess set");
  Tensor acc = hyps.items[0];
  for (std::size_t j = 1; j < hyps.items.size(); ++j)
    acc = add(acc, hyps.items[j]);
  Tensor avg = scale(acc, 1.0 / static_cast<double>(hyps.items.size()));
  Tensor diff = sub(l2_normalize_rows(avg), l2_normalize_rows(targets));
  return mean_all(row_sums(mul(diff, diff)));
}

Tensor select_best(const HypothesisSet& hyps,
                   const std::vector<std::int64_t>& winners) {
  if (hyps.items.empty()) throw UsageError("select_best: empty guess set");
  const std::int64_t n = hyps.items[0].dim(0);
  if (static_cast<std::int64_t>(winners.size()) != n)
    throw ShapeError("select_best: " + std::to_string(winners.size()) +
                     " winners for " + std::to_string(n) + " positions");
  Tensor stacked = concat_rows(hyps.items);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t w = winners[static_cast<std::size_t>(i)];
    if (w < 0 || w >= static_cast<std::int64_t>(hyps.items.size()))
      throw UsageError("select_best: winner index " + std::to_string(w) +
                       " out of range");
    rows[static_cast<std::size_t>(i)] = w * n + i;
  }
  return gather_rows(stacked, std::move(rows));
}

std::vector<std::int64_t> winner_histogram(
    const std::vector<std::int64_t>& winners, int hypotheses) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(hypotheses), 0);
  for (const std::int64_t w : winners) {
    if (w < 0 || w >= hypotheses)
      throw UsageError("winner_histogram: index out of range");
    counts[static_cast<std::size_t>(w)] += 1;
  }
  return counts;
}

// ---- classification pretext ----

ClsHeads ClsHeads::init(const ClsConfig& cfg, Rng& rng) {
  if (cfg.classes < 2) throw ConfigError("class head: fewer than 2 classes");
  if (cfg.tau_student <= 0.0 || cfg.tau_teacher <= 0.0)
    throw ConfigError("class head: non-positive temperature");
  if (cfg.center_rate < 0.0 || cfg.center_rate > 1.0)
    throw ConfigError("class head: center rate outside [0,1]");
  ClsHeads h;
  h.cfg = cfg;
  h.student_w = init_weight(cfg.embed_dim, cfg.classes, rng, true);
  h.student_b = init_bias(cfg.classes, true);
  // The teacher starts as an exact copy and then trails by momentum.
  h.teacher_w = h.student_w.clone();
  h.teacher_w.set_requires_grad(false);
  h.teacher_b = h.student_b.clone();
  h.teacher_b.set_requires_grad(false);
  h.center = Tensor::zeros({cfg.classes});
  return h;
}

void ClsHeads::register_student_into(ParamMap& map,
                                     const std::string& prefix) const {
  map.insert(prefix + ".w", student_w);
  map.insert(prefix + ".b", student_b);
}

ParamMap ClsHeads::teacher_pairs() const {
  ParamMap m;
  m.insert("cls.w", teacher_w);
  m.insert("cls.b", teacher_b);
  return m;
}

ParamMap ClsHeads::student_pairs() const {
  ParamMap m;
  m.insert("cls.w", student_w);
  m.insert("cls.b", student_b);
  return m;
}

Tensor student_class_distribution(const ClsHeads& heads, const Tensor& best) {
  Tensor logits =
      add_rowwise(matmul(best, heads.student_w), heads.student_b);
  return softmax_rows(scale(logits, 1.0 / heads.cfg.tau_student));
}

Tensor teacher_class_distribution(const ClsHeads& heads,
                                  const Tensor& teacher_latents) {
  Tensor logits = add_rowwise(matmul(detach(teacher_latents), heads.teacher_w),
                              heads.teacher_b);
  Tensor centered = add_rowwise(logits, neg(heads.center));
  return softmax_rows(scale(centered, 1.0 / heads.cfg.tau_teacher));
}

void update_center(ClsHeads& heads, const Tensor& teacher_latents) {
  Tensor logits = add_rowwise(matmul(detach(teacher_latents), heads.teacher_w),
                              heads.teacher_b);
  const std::int64_t n = logits.dim(0);
  const std::int64_t k = logits.dim(1);
  const auto& vals = logits.data();
  auto& c = heads.center.raw_data();
  const double rate = heads.cfg.center_rate;
  for (std::int64_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      mean += vals[static_cast<std::size_t>(i * k + j)];
    mean /= static_cast<double>(n);
    c[static_cast<std::size_t>(j)] =
        rate * c[static_cast<std::size_t>(j)] + (1.0 - rate) * mean;
  }
}

Tensor classification_loss(const Tensor& teacher_dist,
                           const Tensor& student_dist) {
  if (teacher_dist.shape() != student_dist.shape())
    throw ShapeError("classification_loss: teacher " +
                     shape_str(teacher_dist.shape()) + " vs student " +
                     shape_str(student_dist.shape()));
  Tensor ce = mul(teacher_dist, log_clamped(student_dist, 1e-12));
  return neg(mean_all(row_sums(ce)));
}

Tensor combined_loss(const Tensor& cls_loss, const Tensor& pred_loss,
                     double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("combined_loss: alpha outside [0,1]");
  return add(scale(cls_loss, 1.0 - alpha), scale(pred_loss, alpha));
}

}  // namespace mclp
