#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mclp/data.hpp"
#include "mclp/encoder.hpp"
#include "mclp/features.hpp"
#include "mclp/objectives.hpp"
#include "mclp/optim.hpp"
#include "mclp/predictor.hpp"
#include "mclp/run_config.hpp"

namespace mclp {

// What one optimization step produced, already averaged over the batch.
struct StepStats {
  std::int64_t step = 0;
  double pred_loss = 0.0;
  double cls_loss = 0.0;
  double total_loss = 0.0;
  double tau = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  std::vector<std::int64_t> winner_counts;
  double mean_row_entropy = 0.0;
  double batch_entropy = 0.0;
};

// Owns the whole training state: dataset, feature cache, online and
// momentum models, heads, optimizer, and schedules. All randomness is
// derived from (seed, step), so a resumed run continues the exact strict
// sample path of an uninterrupted one.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg);
  static Trainer resume(const std::string& checkpoint_path);

  // One gradient step over a freshly drawn batch.
  StepStats train_step();
  // Runs to cfg.steps, writing metrics.csv, diagnostics.csv, resolved.toml,
  // and checkpoints under cfg.out_dir. quiet suppresses console lines.
  void run(bool quiet = false);
  void save_checkpoint(const std::string& path) const;

  const RunConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  double tau() const { return tau_; }
  const ClipStore& store() const { return *store_; }
  MelCache& features() { return *cache_; }
  const EncoderParams& student() const { return student_; }
  const EncoderParams& teacher() const { return teacher_; }
  const PredictorParams& predictor() const { return predictor_; }
  const ClsHeads& heads() const { return heads_; }
  const ParamMap& parameters() const { return params_; }

 private:
  void build_models();
  std::vector<std::int64_t> draw_batch() const;
  PatchBatch crop_patches(std::int64_t clip_index, int slot);

  RunConfig cfg_;
  std::unique_ptr<ClipStore> store_;
  std::vector<std::int64_t> train_idx_;
  std::unique_ptr<MelCache> cache_;

  EncoderParams student_;
  EncoderParams teacher_;
  PredictorParams predictor_;
  ClsHeads heads_;
  ParamMap params_;
  ParamMap student_enc_pairs_;
  ParamMap teacher_enc_pairs_;
  OptimizerState opt_;

  double tau_ = 1.0;
  std::int64_t step_ = 0;
};

}  // namespace mclp
