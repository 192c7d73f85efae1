#pragma once

#include <cstdint>
#include <vector>

#include "mclp/mel.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

// Square patch edge, in spectrogram cells. Patches are kPatch frames by
// kPatch mel bins, flattened frame-major to kPatch*kPatch values.
inline constexpr int kPatch = 16;
inline constexpr int kPatchDim = kPatch * kPatch;

struct GridPos {
  int t = 0;  // time-block index
  int f = 0;  // frequency-block index
};

// All patches of one spectrogram in time-major order:
// patch index = t * grid_cols + f.
struct PatchBatch {
  Tensor patches;  // [n, kPatchDim], no gradient
  int grid_rows = 0;  // time blocks
  int grid_cols = 0;  // frequency blocks
  std::vector<GridPos> positions;

  std::int64_t count() const { return patches.defined() ? patches.dim(0) : 0; }
};

// Cuts non-overlapping kPatch x kPatch tiles. The mel-bin count must be a
// multiple of kPatch; trailing frames that do not fill a block are dropped.
PatchBatch patchify(const LogMelSpec& spec);

// Index split into masked and visible patches; both lists ascend and
// partition [0, total).
struct MaskSplit {
  std::vector<std::int64_t> visible_idx;
  std::vector<std::int64_t> masked_idx;
  std::int64_t total = 0;

  std::int64_t masked_count() const {
    return static_cast<std::int64_t>(masked_idx.size());
  }
  std::int64_t visible_count() const {
    return static_cast<std::int64_t>(visible_idx.size());
  }
};

// Uniform random split with round(ratio * n) masked patches, ties rounding
// up. A split that leaves either side empty is refused.
MaskSplit random_mask(std::int64_t n, double ratio, Rng& rng);

// Deterministic split from explicit masked indices (analysis, evaluation).
MaskSplit mask_from_indices(std::int64_t n,
                            std::vector<std::int64_t> masked_idx);

}  // namespace mclp
