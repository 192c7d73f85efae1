#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mclp/data.hpp"
#include "mclp/encoder.hpp"
#include "mclp/mel.hpp"
#include "mclp/objectives.hpp"
#include "mclp/predictor.hpp"
#include "mclp/toml.hpp"

namespace mclp {

// Every knob of a pretraining run, with the defaults the rest of the code
// assumes. Unknown keys in a config file are rejected, and the fully
// resolved settings are echoed next to the run outputs.
struct RunConfig {
  // [model]
  int embed_dim = 64;
  int encoder_blocks = 3;
  int predictor_blocks = 2;
  int heads = 4;
  int mlp_hidden = 0;
  int hypotheses = 3;
  int classes = 256;
  int max_patches = 512;

  // [loss]
  double alpha = 0.5;
  double mask_ratio = 0.7;
  std::string strategy = "annealed";
  double tau_student = 0.1;
  double tau_teacher = 0.05;
  double center_rate = 0.9;

  // [schedule]
  std::int64_t steps = 3000;
  std::int64_t warmup = 150;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double momentum_start = 0.99;
  double momentum_final = 0.9999;
  double head_momentum = 0.99;
  double tau_init = 1.0;
  double tau_decay = 0.99997;
  double tau_floor = 1e-3;
  bool anneal = true;

  // [data]
  std::string source = "events";
  std::string manifest;
  std::string split = "train";
  int clips_per_class = 25;
  int test_per_class = 10;
  int clips = 64;
  int test_clips = 16;
  std::int64_t data_seed = 1234;
  double crop_seconds = 3.0;
  int batch = 16;
  int sample_rate = 16000;
  int win_length = 400;
  int hop_length = 160;
  int mel_bins = 16;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_eps = 1e-5;

  // [run]
  std::int64_t seed = 1;
  std::string out_dir = "run_out";
  std::int64_t checkpoint_every = 0;
  std::int64_t log_every = 50;

  static RunConfig from_doc(const TomlDoc& doc);
  static RunConfig from_file(
      const std::string& path,
      const std::vector<std::pair<std::string, std::string>>& overrides = {});

  void validate() const;
  std::string resolved_text() const;

  MelConfig mel() const;
  EncoderConfig encoder() const;
  PredictorConfig predictor() const;
  ClsConfig cls() const;
  HypothesisStrategy strategy_enum() const { return parse_strategy(strategy); }
};

// Instantiates the dataset a config points at: a manifest directory or one
// of the built-in synthetic collections ("events", "two_mode"), each with a
// train and a test split.
std::unique_ptr<ClipStore> open_dataset(const RunConfig& cfg);

// The synthesis recipes behind a built-in dataset, train split first.
// Rejects manifest sources, which already live on disk.
std::vector<LabeledRecipe> dataset_recipes(const RunConfig& cfg);

}  // namespace mclp
