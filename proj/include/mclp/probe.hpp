#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/data.hpp"
#include "mclp/encoder.hpp"
#include "mclp/mel.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

// Single-label tasks score with top-1 accuracy, multi-label tasks with
// mean average precision over the label columns.
enum class TaskKind { multi_class, multi_label };

// Frozen-encoder embeddings, one pooled row per surviving clip. Clips too
// short to yield a single patch are dropped and noted in warnings.
struct EmbeddingTable {
  Tensor rows;  // [clips, embed_dim], no gradient
  std::vector<std::vector<int>> labels;
  std::vector<std::string> names;
  std::vector<std::string> splits;
  TaskKind kind = TaskKind::multi_class;
  std::vector<std::string> warnings;

  std::int64_t count() const { return rows.defined() ? rows.dim(0) : 0; }
  int label_count() const;
  std::vector<std::int64_t> rows_of_split(const std::string& split) const;
};

struct ExtractConfig {
  MelConfig mel;
  // Long clips are cut into non-overlapping chunks of this length and the
  // chunk embeddings are averaged; a trailing partial chunk is dropped.
  double crop_seconds = 3.0;
  TaskKind kind = TaskKind::multi_class;
};

// Pooled embedding of one clip: featurize, patchify without masking,
// encode, mean over every patch position, then mean over chunks. Throws
// InputError when the clip cannot fill one patch.
std::vector<double> clip_embedding(const EncoderParams& enc,
                                   const AudioClip& clip,
                                   const ExtractConfig& cfg);

// Embeds every clip of the store. Consumes no randomness; two calls yield
// bitwise-identical tables.
EmbeddingTable extract_embeddings(const EncoderParams& enc,
                                  const ClipStore& store,
                                  const ExtractConfig& cfg);

// Reassigns every k-th training row (in table order) to the "val" split.
void carve_validation(EmbeddingTable& table, int every_k = 5);

struct ProbeConfig {
  double lr = 1e-4;
  double weight_decay = 0.0;
  // Truncated to the training-row count when the split is smaller.
  int batch = 128;
  int max_epochs = 200;
  // Early stop after this many epochs without a validation-loss improvement;
  // the best-epoch weights are what the test metric sees.
  int patience = 10;
  std::uint64_t seed = 0;
  // 0 infers the class count from the labels.
  int classes = 0;
};

struct ProbeResult {
  std::string metric;  // "accuracy" or "map"
  double value = 0.0;
  // Per-class recall (accuracy) or average precision (map); classes absent
  // from the test split hold -1.
  std::vector<double> per_class;
  int best_epoch = 0;
  int epochs_run = 0;
};

// The trained linear layer plus its evaluation.
struct ProbeModel {
  Tensor w;  // [embed_dim, classes]
  Tensor b;  // [classes]
  ProbeResult result;
};

// Fits one linear layer on the train rows, early-stops on the val rows,
// scores the test rows. The embeddings themselves are never modified.
ProbeModel train_probe(const EmbeddingTable& table, const ProbeConfig& cfg);

// Top-1 accuracy of score rows against single-label rows.
double accuracy_of(const Tensor& scores,
                   const std::vector<std::vector<int>>& labels);

// Macro mean of per-class average precision, rank-based with stable order
// on ties. Classes without positives are skipped; per_class (when given)
// is sized to the class count with -1 at skipped entries. Throws
// InputError when no class has a positive.
double mean_average_precision(const Tensor& scores,
                              const std::vector<std::vector<int>>& labels,
                              std::vector<double>* per_class = nullptr);

// base + ".mclt" holds the rows, base + ".csv" the per-clip metadata.
void write_embedding_table(const std::string& base, const EmbeddingTable& t);
EmbeddingTable read_embedding_table(const std::string& base);

}  // namespace mclp
