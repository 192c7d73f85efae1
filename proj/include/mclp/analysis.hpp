#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/mel.hpp"
#include "mclp/synth.hpp"
#include "mclp/tensor.hpp"
#include "mclp/trainer.hpp"

namespace mclp {

// One masked position scored during a collection pass.
struct WinnerRecord {
  std::int64_t clip = 0;  // index into the trainer's dataset
  int row = 0;            // time-block index in the patch grid
  int col = 0;            // frequency-block index
  int winner = 0;         // guess column with the smallest distance
  double dmin = 0.0;      // that smallest distance
};

// Winner records plus the raw spectrogram patch behind each one. Row i of
// patches is the flattened log-mel patch that produced records[i].
struct WinnerLog {
  int hypotheses = 0;
  std::vector<WinnerRecord> records;
  Tensor patches;  // [records, kPatchDim]

  std::int64_t total() const {
    return static_cast<std::int64_t>(records.size());
  }
};

struct CollectOptions {
  std::string split = "train";
  std::int64_t sample_limit = 20000;  // masked positions, not clips
  std::uint64_t seed = 0;
  // When non-empty every clip is masked at exactly these patch indices;
  // otherwise each clip draws a random mask at the training ratio.
  std::vector<std::int64_t> forced_mask;
};

// Scores the current models over the given split without updating anything.
// Crops and masks are derived from (seed, clip), so one seed gives one log.
WinnerLog collect_winners(Trainer& trainer, const CollectOptions& opt);

// Fraction of positions won by each guess; entries sum to one.
std::vector<double> utilisation_histogram(const WinnerLog& log);

// One line per record: clip,row,col,winner,dmin.
void write_winner_csv(const std::string& path, const WinnerLog& log);

// ---- k-means over patch rows ----

struct KMeansResult {
  Tensor centroids;                      // [k, dim]
  std::vector<std::int64_t> assignment;  // centroid index per point
  std::vector<std::int64_t> sizes;       // points per centroid
  double distortion = 0.0;  // mean squared distance to the own centroid
  std::vector<double> trace;  // distortion after each sweep, non-increasing
};

// Lloyd iterations from a distance-weighted seeding. Sweeps stop once no
// centroid moved more than tol or max_iters is reached; clusters that empty
// out are re-seeded at the point farthest from its current centroid.
KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed,
                    int max_iters = 100, double tol = 1e-7);

// ---- per-guess patch prototypes ----

struct HypothesisPrototypes {
  int hypothesis = 0;
  std::int64_t patch_count = 0;
  // False when the guess won fewer patches than the requested clusters; the
  // group is then reported as under-populated instead of being clustered.
  bool clustered = false;
  KMeansResult clusters;
};

struct PrototypeSet {
  int clusters_requested = 0;
  std::vector<HypothesisPrototypes> per_hypothesis;
};

// Clusters each guess's raw winner patches into visual prototypes.
PrototypeSet prototypes(const WinnerLog& log, int clusters = 5,
                        std::uint64_t seed = 0);

// Writes one 8-bit binary PGM per (guess, cluster) centroid, a
// prototypes.csv naming each file with its cluster size and the min/max of
// the byte mapping, and a prototype_values.csv with the raw centroid rows.
void write_prototype_images(const std::string& dir, const PrototypeSet& set);

// ---- forced-mask evaluation ----

struct ForcedMaskEval {
  double mean_min_distance = 0.0;  // best-guess distance over all positions
  std::int64_t positions = 0;
  Tensor target_latents;  // [positions, embed_dim], unit rows, gradient-free
};

// Masks exactly the given patch indices in every clip of the split (leading
// crop, no randomness) and scores the predictor against the momentum
// encoder. The targets come back for reference clustering.
ForcedMaskEval forced_mask_eval(Trainer& trainer,
                                const std::vector<std::int64_t>& masked,
                                const std::string& split);

// Patch-grid time blocks whose audio span lies entirely inside burst slot
// `slot` of a two-mode clip featurized with `mel`.
std::vector<std::int64_t> slot_patch_rows(const TwoModeConfig& cfg, int slot,
                                          const MelConfig& mel);

// Patch-grid time blocks whose audio span touches the slot at all. A mask
// built from these rows hides every frame of the burst, so nothing about
// its band survives in the visible context.
std::vector<std::int64_t> slot_overlap_rows(const TwoModeConfig& cfg,
                                            int slot, const MelConfig& mel);

// Mel-axis center of mass of one flattened patch row, with values shifted
// by the patch minimum so all weights are non-negative. A flat patch maps
// to the middle bin.
double energy_center_of_mass(const Tensor& patches, std::int64_t row);

}  // namespace mclp
