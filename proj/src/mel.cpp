#include "mclp/mel.hpp"

#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Filterbank weights, n_mels x (n_fft/2 + 1). Triangles are linear in Hz
// between edge frequencies that are uniform on the mel scale, peak 1.
std::vector<double> build_filterbank(const MelConfig& cfg, std::size_t n_fft,
                                     std::size_t n_bins) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));
  std::vector<double> fb(static_cast<std::size_t>(cfg.n_mels) * n_bins, 0.0);
  const double hz_per_bin =
      static_cast<double>(cfg.sample_rate) / static_cast<double>(n_fft);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = hz_per_bin * static_cast<double>(b);
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f == center) {
        w = 1.0;
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb[static_cast<std::size_t>(m) * n_bins + b] = w;
    }
  }
  return fb;
}

}  // namespace

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw UsageError("fft_radix2: length must be a power of two");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

std::vector<double> mel_filter_centers_hz(const MelConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) *
                                        static_cast<double>(m + 1) /
                                        static_cast<double>(cfg.n_mels + 1));
  return centers;
}

LogMelSpec compute_log_mel(const AudioClip& clip, const MelConfig& cfg) {
  if (cfg.n_mels <= 0 || cfg.win_length <= 0 || cfg.hop_length <= 0)
    throw ConfigError("compute_log_mel: non-positive mel geometry");
  if (clip.sample_rate != cfg.sample_rate)
    throw InputError("compute_log_mel: clip rate " +
                     std::to_string(clip.sample_rate) + " != configured " +
                     std::to_string(cfg.sample_rate));
  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());
  if (len < cfg.win_length)
    throw InputError("compute_log_mel: clip of " + std::to_string(len) +
                     " samples is shorter than one window (" +
                     std::to_string(cfg.win_length) + ")");

  const std::int64_t frames = (len - cfg.win_length) / cfg.hop_length + 1;
  const std::size_t n_fft = next_pow2(static_cast<std::size_t>(cfg.win_length));
  const std::size_t n_bins = n_fft / 2 + 1;

  std::vector<double> hann(static_cast<std::size_t>(cfg.win_length));
  for (int i = 0; i < cfg.win_length; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                   static_cast<double>(cfg.win_length));

  const std::vector<double> fb = build_filterbank(cfg, n_fft, n_bins);

  LogMelSpec spec;
  spec.frames = frames;
  spec.bins = cfg.n_mels;
  spec.data.assign(static_cast<std::size_t>(frames * cfg.n_mels), 0.0);

  std::vector<double> re(n_fft), im(n_fft), mag(n_bins);
  for (std::int64_t f = 0; f < frames; ++f) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const double* src = clip.samples.data() + f * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) re[i] = src[i] * hann[i];
    fft_radix2(re, im);
    for (std::size_t b = 0; b < n_bins; ++b)
      mag[b] = std::sqrt(re[b] * re[b] + im[b] * im[b]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* w = fb.data() + static_cast<std::size_t>(m) * n_bins;
      double acc = 0.0;
      for (std::size_t b = 0; b < n_bins; ++b) acc += w[b] * mag[b];
      spec.data[static_cast<std::size_t>(f * cfg.n_mels + m)] =
          std::log(acc + cfg.log_eps);
    }
  }
  return spec;
}

}  // namespace mclp
