#pragma once

#include <cstdint>
#include <unordered_map>

#include "mclp/data.hpp"
#include "mclp/mel.hpp"

namespace mclp {

// Log-mel features per clip, computed once and sliced per crop. Crops are
// taken at hop-aligned offsets, so a slice of the full spectrogram equals
// the spectrogram of the cropped waveform frame for frame.
class MelCache {
 public:
  MelCache(const ClipStore& store, MelConfig cfg)
      : store_(&store), cfg_(cfg) {}

  const MelConfig& config() const { return cfg_; }
  const LogMelSpec& full(std::int64_t index);
  // Copies the frame range [offset, offset + frames).
  LogMelSpec slice(std::int64_t index, std::int64_t frame_offset,
                   std::int64_t frames);
  // Frames one crop of the given duration spans.
  std::int64_t crop_frames(double seconds) const;

 private:
  const ClipStore* store_;
  MelConfig cfg_;
  std::unordered_map<std::int64_t, LogMelSpec> cache_;
};

}  // namespace mclp
