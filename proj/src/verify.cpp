#include "mclp/verify.hpp"

#include "mclp/encoder.hpp"
#include "mclp/error.hpp"
#include "mclp/patch.hpp"
#include "mclp/predictor.hpp"
#include "mclp/rng.hpp"

namespace mclp {

GradCheckReport micro_gradient_check(const MicroCheckOptions& opt) {
  Rng rng(opt.seed);

  EncoderConfig ec;
  ec.patch_dim = 8;
  ec.embed_dim = 8;
  ec.blocks = 1;
  ec.heads = 2;
  ec.max_patches = 8;
  PredictorConfig pc;
  pc.embed_dim = 8;
  pc.blocks = 1;
  pc.heads = 2;
  pc.hypotheses = 2;
  pc.max_patches = 8;
  ClsConfig cc;
  cc.embed_dim = 8;
  cc.classes = 7;

  auto student = EncoderParams::init(ec, rng, true);
  auto teacher = make_momentum_copy(student);
  auto pred = PredictorParams::init(pc, rng, true);
  auto heads = ClsHeads::init(cc, rng);

  // Five patches, three of them masked.
  PatchBatch batch;
  {
    std::vector<double> vals(5 * 8);
    for (auto& v : vals) v = rng.normal(0.0, 1.0);
    batch.patches = Tensor::from_data({5, 8}, std::move(vals));
    batch.grid_rows = 5;
    batch.grid_cols = 1;
    for (int i = 0; i < 5; ++i) batch.positions.push_back({i, 0});
  }
  MaskSplit split = mask_from_indices(5, {1, 3, 4});

  // The momentum path carries no gradient, so it is fixed for the check.
  Tensor teacher_all = encode(teacher, embed_patches(teacher, batch));
  Tensor teacher_masked = gather_rows(teacher_all, split.masked_idx);
  Tensor teacher_dist = teacher_class_distribution(heads, teacher_masked);

  ParamMap params;
  student.register_into(params, "enc");
  pred.register_into(params, "pred");
  heads.register_student_into(params, "cls");

  const auto loss_fn = [&]() {
    Tensor emb = embed_patches(student, batch);
    Tensor vis = gather_rows(emb, split.visible_idx);
    Tensor latents = encode(student, vis);
    HypothesisSet hyps = predict_masked(pred, latents, split);
    Tensor d = hypothesis_distances(hyps, teacher_masked);
    Tensor pred_loss;
    switch (opt.strategy) {
      case HypothesisStrategy::annealed:
        pred_loss = annealed_prediction_loss(d, 0.7);
        break;
      case HypothesisStrategy::greedy:
        pred_loss = greedy_prediction_loss(d);
        break;
      case HypothesisStrategy::mean:
        pred_loss = mean_prediction_loss(hyps, teacher_masked);
        break;
    }
    Tensor best = select_best(hyps, winners_of(d));
    Tensor student_dist = student_class_distribution(heads, best);
    Tensor cls_loss = classification_loss(teacher_dist, student_dist);
    return combined_loss(cls_loss, pred_loss, 0.5);
  };

  GradCheckOptions gopt;
  gopt.max_entries_per_tensor = opt.max_entries_per_tensor;
  gopt.tol = opt.tolerance;
  gopt.fault_scale = opt.fault_scale;
  gopt.seed = opt.seed;
  return grad_check(loss_fn, params, gopt);
}

}  // namespace mclp
