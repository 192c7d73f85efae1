#include "mclp/patch.hpp"

#include <algorithm>
#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

PatchBatch patchify(const LogMelSpec& spec) {
  if (spec.bins % kPatch != 0)
    throw ConfigError("patchify: " + std::to_string(spec.bins) +
                      " mel bins is not a multiple of " +
                      std::to_string(kPatch));
  const int grid_cols = static_cast<int>(spec.bins / kPatch);
  const int grid_rows = static_cast<int>(spec.frames / kPatch);
  if (grid_rows == 0)
    throw InputError("patchify: " + std::to_string(spec.frames) +
                     " frames do not fill one " + std::to_string(kPatch) +
                     "-frame block");
  const std::int64_t n = static_cast<std::int64_t>(grid_rows) * grid_cols;

  std::vector<double> out(static_cast<std::size_t>(n) * kPatchDim);
  PatchBatch batch;
  batch.grid_rows = grid_rows;
  batch.grid_cols = grid_cols;
  batch.positions.resize(static_cast<std::size_t>(n));
  for (int t = 0; t < grid_rows; ++t) {
    for (int f = 0; f < grid_cols; ++f) {
      const std::int64_t p = static_cast<std::int64_t>(t) * grid_cols + f;
      batch.positions[p] = GridPos{t, f};
      double* dst = out.data() + p * kPatchDim;
      for (int fr = 0; fr < kPatch; ++fr)
        for (int mb = 0; mb < kPatch; ++mb)
          dst[fr * kPatch + mb] =
              spec.at(static_cast<std::int64_t>(t) * kPatch + fr,
                      static_cast<std::int64_t>(f) * kPatch + mb);
    }
  }
  batch.patches = Tensor::from_data({n, kPatchDim}, std::move(out));
  return batch;
}

MaskSplit random_mask(std::int64_t n, double ratio, Rng& rng) {
  if (n <= 0) throw InputError("random_mask: no patches");
  if (ratio < 0.0 || ratio > 1.0)
    throw ConfigError("random_mask: ratio " + std::to_string(ratio) +
                      " outside [0,1]");
  const auto masked =
      static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
  if (masked == 0 || masked == n)
    throw InputError("random_mask: ratio " + std::to_string(ratio) + " over " +
                     std::to_string(n) +
                     " patches leaves one side of the split empty");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);

  MaskSplit split;
  split.total = n;
  split.masked_idx.assign(idx.begin(), idx.begin() + masked);
  split.visible_idx.assign(idx.begin() + masked, idx.end());
  std::sort(split.masked_idx.begin(), split.masked_idx.end());
  std::sort(split.visible_idx.begin(), split.visible_idx.end());
  return split;
}

MaskSplit mask_from_indices(std::int64_t n,
                            std::vector<std::int64_t> masked_idx) {
  std::sort(masked_idx.begin(), masked_idx.end());
  MaskSplit split;
  split.total = n;
  std::size_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (k < masked_idx.size() && masked_idx[k] == i) {
      if (k + 1 < masked_idx.size() && masked_idx[k + 1] == i)
        throw InputError("mask_from_indices: duplicate index " +
                         std::to_string(i));
      split.masked_idx.push_back(i);
      ++k;
    } else {
      split.visible_idx.push_back(i);
    }
  }
  if (k != masked_idx.size())
    throw InputError("mask_from_indices: index out of range");
  if (split.masked_idx.empty() || split.visible_idx.empty())
    throw InputError("mask_from_indices: degenerate split");
  return split;
}

}  // namespace mclp
