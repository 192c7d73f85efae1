#include "mclp/features.hpp"

#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

const LogMelSpec& MelCache::full(std::int64_t index) {
  auto it = cache_.find(index);
  if (it != cache_.end()) return it->second;
  const AudioClip clip = store_->load(index);
  return cache_.emplace(index, compute_log_mel(clip, cfg_)).first->second;
}

LogMelSpec MelCache::slice(std::int64_t index, std::int64_t frame_offset,
                           std::int64_t frames) {
  const LogMelSpec& spec = full(index);
  if (frame_offset < 0 || frames <= 0 ||
      frame_offset + frames > spec.frames)
    throw UsageError("MelCache::slice: frames [" +
                     std::to_string(frame_offset) + ", " +
                     std::to_string(frame_offset + frames) + ") outside clip " +
                     std::to_string(index) + " of " +
                     std::to_string(spec.frames) + " frames");
  LogMelSpec out;
  out.frames = frames;
  out.bins = spec.bins;
  out.data.assign(
      spec.data.begin() + static_cast<std::size_t>(frame_offset * spec.bins),
      spec.data.begin() +
          static_cast<std::size_t>((frame_offset + frames) * spec.bins));
  return out;
}

std::int64_t MelCache::crop_frames(double seconds) const {
  const auto samples =
      static_cast<std::int64_t>(std::llround(seconds * cfg_.sample_rate));
  if (samples < cfg_.win_length)
    throw ConfigError("crop of " + std::to_string(seconds) +
                      " s is shorter than one analysis window");
  return (samples - cfg_.win_length) / cfg_.hop_length + 1;
}

}  // namespace mclp
