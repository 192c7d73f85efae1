#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/param_map.hpp"
#include "mclp/predictor.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

// How the per-position guess set collapses into one prediction loss.
//   annealed: softmax weights over guesses, sharpening as tau decays
//   mean: average the raw guesses first, then one distance
//   greedy: only the closest guess per position is charged
enum class HypothesisStrategy { annealed, mean, greedy };

HypothesisStrategy parse_strategy(const std::string& name);
const char* strategy_name(HypothesisStrategy s);

// Squared distance between each guess and its target after both rows are
// scaled to unit length. Returns [positions, guesses]; entries live in
// [0, 4]. Gradients flow into the guesses; targets are expected to come
// from a gradient-free path.
Tensor hypothesis_distances(const HypothesisSet& hyps, const Tensor& targets);

// Rowwise softmax of -distances / tau. tau must be positive.
Tensor soft_assignment(const Tensor& distances, double tau);

// Column of the smallest distance per row, lowest index on ties.
std::vector<std::int64_t> winners_of(const Tensor& distances);

// Mean over positions of the assignment-weighted distances. Gradients pass
// through both the weights and the distances.
Tensor annealed_prediction_loss(const Tensor& distances, double tau);

// Mean over positions of the single smallest distance per row.
Tensor greedy_prediction_loss(const Tensor& distances);

// Distance of the normalized mean guess to the target, averaged over
// positions.
Tensor mean_prediction_loss(const HypothesisSet& hyps, const Tensor& targets);

// Raw (unnormalized) winning row per position, [positions, embed_dim].
Tensor select_best(const HypothesisSet& hyps,
                   const std::vector<std::int64_t>& winners);

std::vector<std::int64_t> winner_histogram(
    const std::vector<std::int64_t>& winners, int hypotheses);

// ---- unsupervised classification pretext ----

struct ClsConfig {
  int embed_dim = 64;
  int classes = 256;
  double tau_student = 0.1;
  double tau_teacher = 0.05;
  // Momentum of the running logit center that keeps the teacher from
  // collapsing onto a single class.
  double center_rate = 0.9;
};

// A linear head over latents on each side. The student head trains by
// gradient; the teacher head trails it by momentum and is centered and
// sharpened before producing targets.
struct ClsHeads {
  ClsConfig cfg;
  Tensor student_w, student_b;
  Tensor teacher_w, teacher_b;
  Tensor center;

  static ClsHeads init(const ClsConfig& cfg, Rng& rng);
  // Only the student side; the teacher is never optimized directly.
  void register_student_into(ParamMap& map, const std::string& prefix) const;
  // Pairs for the momentum walk, teacher first.
  ParamMap teacher_pairs() const;
  ParamMap student_pairs() const;
};

// Softmax of the student head at tau_student over the winning guesses.
Tensor student_class_distribution(const ClsHeads& heads, const Tensor& best);

// Softmax of the centered teacher head at tau_teacher. The whole path is
// gradient-free.
Tensor teacher_class_distribution(const ClsHeads& heads,
                                  const Tensor& teacher_latents);

// Folds the batch-mean teacher logits into the running center.
void update_center(ClsHeads& heads, const Tensor& teacher_latents);

// Cross entropy of the student distribution against the teacher target,
// averaged over positions. Log arguments are floored at 1e-12.
Tensor classification_loss(const Tensor& teacher_dist,
                           const Tensor& student_dist);

// (1 - alpha) * classification + alpha * prediction.
Tensor combined_loss(const Tensor& cls_loss, const Tensor& pred_loss,
                     double alpha);

}  // namespace mclp
