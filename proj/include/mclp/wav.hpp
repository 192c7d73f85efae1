#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mclp {

// Mono audio at a known sample rate. Samples live on the f32 grid even
// though the buffer is double, so a float WAV round-trip is bit-exact.
struct AudioClip {
  int sample_rate = 0;
  std::vector<double> samples;
  // Set when synthesis had to clamp the mix into [-1, 1].
  bool clipped = false;

  double duration_seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

enum class WavFormat { pcm16, float32 };

// RIFF/WAVE reader for 16-bit PCM and 32-bit float files. Multi-channel
// input is averaged down to mono.
AudioClip read_wav(const std::string& path);

void write_wav(const std::string& path, const AudioClip& clip,
               WavFormat format = WavFormat::float32);

}  // namespace mclp
