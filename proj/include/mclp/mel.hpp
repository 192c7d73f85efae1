#pragma once

#include <cstdint>
#include <vector>

#include "mclp/wav.hpp"

namespace mclp {

struct MelConfig {
  int sample_rate = 16000;
  int win_length = 400;
  int hop_length = 160;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_eps = 1e-5;  // floor inside log(x + eps)
};

// Log-mel spectrogram, frames x bins row-major.
struct LogMelSpec {
  std::int64_t frames = 0;
  std::int64_t bins = 0;
  std::vector<double> data;

  double at(std::int64_t f, std::int64_t b) const {
    return data[static_cast<std::size_t>(f * bins + b)];
  }
};

// Hann-windowed magnitude STFT, triangular mel filterbank with edges spaced
// on the HTK mel scale, then log(x + eps). Frame count is
// (samples - win) / hop + 1 with no padding; a clip shorter than one window
// is an input error.
LogMelSpec compute_log_mel(const AudioClip& clip, const MelConfig& cfg);

// Filter center frequencies in Hz, strictly increasing. Exposed so tests
// and analysis can reason about bin placement.
std::vector<double> mel_filter_centers_hz(const MelConfig& cfg);

// In-place iterative radix-2 FFT over interleaved complex values.
// n must be a power of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

}  // namespace mclp
