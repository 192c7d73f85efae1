#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/wav.hpp"

namespace mclp {

enum class EventKind { tone, chirp, noise, am };

const char* event_kind_name(EventKind kind);

// One additive component of a scene. Times are seconds from clip start.
// tone uses f0 only; chirp sweeps f0 to f1 linearly; am is a tone whose
// amplitude is modulated at am_rate Hz with full depth; noise ignores the
// frequency fields and draws from its own stream.
struct SceneEvent {
  EventKind kind = EventKind::tone;
  double t0 = 0.0;
  double t1 = 0.0;
  double f0 = 440.0;
  double f1 = 440.0;
  double amp = 0.5;
  double am_rate = 6.0;
  std::uint64_t noise_seed = 0;
};

struct SceneRecipe {
  double duration = 3.0;
  int sample_rate = 16000;
  double noise_floor = 0.0;
  std::uint64_t noise_seed = 0;
  std::vector<SceneEvent> events;
};

// Renders a recipe to mono audio. Events are summed, each with a short
// linear fade at both ends. Samples are quantized to the f32 grid so that
// in-memory synthesis and a float WAV round trip agree bit for bit.
AudioClip synth_scene(const SceneRecipe& recipe);

// A recipe plus the supervision attached to it.
struct LabeledRecipe {
  SceneRecipe recipe;
  int label = 0;
  std::string name;
  std::string split;
};

// ---- event classification set ----

// Four classes over a shared log-uniform frequency range: steady tone,
// upward chirp, broadband noise burst, amplitude-modulated tone. Class is
// decided by temporal or spectral structure, not by frequency band.
struct EventDatasetConfig {
  double duration = 3.0;
  int sample_rate = 16000;
  double fmin = 300.0;
  double fmax = 2400.0;
  double noise_floor = 0.002;
  int classes = 4;
};

std::vector<LabeledRecipe> make_event_dataset(int per_class,
                                              const EventDatasetConfig& cfg,
                                              std::uint64_t seed,
                                              const std::string& split,
                                              const std::string& name_prefix);

// ---- two-mode prediction set ----

// Every clip carries the same context tone in the gaps between a fixed set
// of time slots. Each slot independently holds a burst at low_freq or
// high_freq. Context never reveals the slot contents, so a model asked to
// fill a masked slot faces a genuine either-or. The label packs the slot
// choices as bits, slot 0 in bit 0, set when the high mode was drawn.
struct TwoModeConfig {
  double duration = 3.0;
  int sample_rate = 16000;
  int slots = 2;
  double slot_len = 0.64;
  double context_freq = 500.0;
  double low_freq = 800.0;
  double high_freq = 2000.0;
  double burst_amp = 0.4;
  double context_amp = 0.25;
  double noise_floor = 0.003;
};

// Slot i occupies [slot_start(cfg, i), slot_start(cfg, i) + cfg.slot_len).
double slot_start(const TwoModeConfig& cfg, int slot);

std::vector<LabeledRecipe> make_two_mode_dataset(int clips,
                                                 const TwoModeConfig& cfg,
                                                 std::uint64_t seed,
                                                 const std::string& split,
                                                 const std::string& name_prefix);

}  // namespace mclp
