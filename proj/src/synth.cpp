#include "mclp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mclp/error.hpp"
#include "mclp/rng.hpp"

namespace mclp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFadeSeconds = 0.005;

double event_sample(const SceneEvent& ev, double dt, double span) {
  switch (ev.kind) {
    case EventKind::tone:
      return std::sin(2.0 * kPi * ev.f0 * dt);
    case EventKind::chirp: {
      const double phase = ev.f0 * dt + 0.5 * (ev.f1 - ev.f0) * dt * dt / span;
      return std::sin(2.0 * kPi * phase);
    }
    case EventKind::am: {
      const double env = 0.5 * (1.0 - std::cos(2.0 * kPi * ev.am_rate * dt));
      return env * std::sin(2.0 * kPi * ev.f0 * dt);
    }
    case EventKind::noise:
      return 0.0;
  }
  throw UsageError("event_sample: unknown kind");
}

std::string padded_name(const std::string& prefix, const std::string& split,
                        int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return prefix + "_" + split + "_" + buf;
}

}  // namespace

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::tone: return "tone";
    case EventKind::chirp: return "chirp";
    case EventKind::noise: return "noise";
    case EventKind::am: return "am";
  }
  return "?";
}

AudioClip synth_scene(const SceneRecipe& recipe) {
  if (recipe.duration <= 0.0)
    throw ConfigError("synth_scene: non-positive duration");
  if (recipe.sample_rate <= 0)
    throw ConfigError("synth_scene: non-positive sample rate");
  const double nyquist = recipe.sample_rate / 2.0;
  const auto n = static_cast<std::int64_t>(
      std::llround(recipe.duration * recipe.sample_rate));
  std::vector<double> mix(static_cast<std::size_t>(n), 0.0);

  for (const SceneEvent& ev : recipe.events) {
    if (!(ev.t1 > ev.t0))
      throw ConfigError("synth_scene: event with empty time span");
    if (ev.t0 < 0.0 || ev.t1 > recipe.duration + 1e-9)
      throw ConfigError("synth_scene: event outside the clip");
    if (ev.kind != EventKind::noise &&
        (std::max(ev.f0, ev.f1) >= nyquist || std::min(ev.f0, ev.f1) <= 0.0))
      throw ConfigError("synth_scene: event frequency outside (0, nyquist)");
    const double span = ev.t1 - ev.t0;
    const double fade = std::min(kFadeSeconds, span / 2.0);
    const auto i0 = static_cast<std::int64_t>(std::ceil(ev.t0 * recipe.sample_rate));
    const auto i1 = std::min<std::int64_t>(
        n, static_cast<std::int64_t>(std::floor(ev.t1 * recipe.sample_rate)));
    Rng noise(ev.noise_seed);
    for (std::int64_t i = i0; i < i1; ++i) {
      const double t = static_cast<double>(i) / recipe.sample_rate;
      const double dt = t - ev.t0;
      double gain = 1.0;
      if (fade > 0.0) {
        gain = std::min(gain, dt / fade);
        gain = std::min(gain, (ev.t1 - t) / fade);
        gain = std::max(gain, 0.0);
      }
      const double raw = ev.kind == EventKind::noise
                             ? noise.uniform() * 2.0 - 1.0
                             : event_sample(ev, dt, span);
      mix[static_cast<std::size_t>(i)] += ev.amp * gain * raw;
    }
  }

  if (recipe.noise_floor > 0.0) {
    Rng floor_rng(recipe.noise_seed);
    for (std::int64_t i = 0; i < n; ++i)
      mix[static_cast<std::size_t>(i)] +=
          recipe.noise_floor * (floor_rng.uniform() * 2.0 - 1.0);
  }

  AudioClip clip;
  clip.sample_rate = recipe.sample_rate;
  clip.samples.resize(mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i) {
    double s = mix[i];
    if (s > 1.0 || s < -1.0) {
      clip.clipped = true;
      s = std::clamp(s, -1.0, 1.0);
    }
    clip.samples[i] = static_cast<double>(static_cast<float>(s));
  }
  return clip;
}

std::vector<LabeledRecipe> make_event_dataset(int per_class,
                                              const EventDatasetConfig& cfg,
                                              std::uint64_t seed,
                                              const std::string& split,
                                              const std::string& name_prefix) {
  if (per_class <= 0) throw ConfigError("make_event_dataset: per_class < 1");
  if (cfg.classes < 2 || cfg.classes > 4)
    throw ConfigError("make_event_dataset: classes must be 2..4");
  if (!(cfg.fmin > 0.0 && cfg.fmax > cfg.fmin))
    throw ConfigError("make_event_dataset: bad frequency range");

  std::vector<LabeledRecipe> out;
  out.reserve(static_cast<std::size_t>(per_class) * cfg.classes);
  int index = 0;
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < cfg.classes; ++cls) {
      Rng rng(derive_seed(seed, "event_scene", static_cast<std::uint64_t>(cls),
                          static_cast<std::uint64_t>(i)));
      const double f0 =
          std::exp(rng.uniform() * (std::log(cfg.fmax) - std::log(cfg.fmin)) +
                   std::log(cfg.fmin));
      double len = 1.2 + rng.uniform() * 1.0;
      len = std::min(len, cfg.duration - 0.4);
      const double start = 0.15 + rng.uniform() * (cfg.duration - len - 0.3);
      const double amp = 0.3 + rng.uniform() * 0.3;

      SceneEvent ev;
      ev.t0 = start;
      ev.t1 = start + len;
      ev.f0 = f0;
      ev.f1 = f0;
      ev.amp = amp;
      switch (cls) {
        case 0:
          ev.kind = EventKind::tone;
          break;
        case 1:
          ev.kind = EventKind::chirp;
          ev.f1 = f0 * (1.6 + rng.uniform() * 0.8);
          break;
        case 2:
          ev.kind = EventKind::noise;
          ev.noise_seed = derive_seed(seed, "event_noise",
                                      static_cast<std::uint64_t>(cls),
                                      static_cast<std::uint64_t>(i));
          break;
        case 3:
          ev.kind = EventKind::am;
          ev.am_rate = 5.0 + rng.uniform() * 4.0;
          break;
      }

      LabeledRecipe item;
      item.recipe.duration = cfg.duration;
      item.recipe.sample_rate = cfg.sample_rate;
      item.recipe.noise_floor = cfg.noise_floor;
      item.recipe.noise_seed = derive_seed(seed, "event_floor",
                                           static_cast<std::uint64_t>(cls),
                                           static_cast<std::uint64_t>(i));
      item.recipe.events.push_back(ev);
      item.label = cls;
      item.split = split;
      item.name = padded_name(name_prefix, split, index++);
      out.push_back(std::move(item));
    }
  }
  return out;
}

double slot_start(const TwoModeConfig& cfg, int slot) {
  const double gap =
      (cfg.duration - cfg.slots * cfg.slot_len) / (cfg.slots + 1);
  return gap * (slot + 1) + cfg.slot_len * slot;
}

std::vector<LabeledRecipe> make_two_mode_dataset(int clips,
                                                 const TwoModeConfig& cfg,
                                                 std::uint64_t seed,
                                                 const std::string& split,
                                                 const std::string& name_prefix) {
  if (clips <= 0) throw ConfigError("make_two_mode_dataset: clips < 1");
  if (cfg.slots < 1 || cfg.slots > 16)
    throw ConfigError("make_two_mode_dataset: slots must be 1..16");
  if (cfg.slots * cfg.slot_len >= cfg.duration)
    throw ConfigError("make_two_mode_dataset: slots do not fit the clip");

  std::vector<LabeledRecipe> out;
  out.reserve(static_cast<std::size_t>(clips));
  for (int i = 0; i < clips; ++i) {
    Rng rng(derive_seed(seed, "two_mode", static_cast<std::uint64_t>(i)));
    LabeledRecipe item;
    item.recipe.duration = cfg.duration;
    item.recipe.sample_rate = cfg.sample_rate;
    item.recipe.noise_floor = cfg.noise_floor;
    item.recipe.noise_seed =
        derive_seed(seed, "two_mode_floor", static_cast<std::uint64_t>(i));

    // Context tone fills every gap between slots.
    double cursor = 0.0;
    for (int s = 0; s <= cfg.slots; ++s) {
      const double gap_end =
          s == cfg.slots ? cfg.duration : slot_start(cfg, s);
      if (gap_end - cursor > 0.02) {
        SceneEvent ctx;
        ctx.kind = EventKind::tone;
        ctx.t0 = cursor;
        ctx.t1 = gap_end;
        ctx.f0 = ctx.f1 = cfg.context_freq;
        ctx.amp = cfg.context_amp;
        item.recipe.events.push_back(ctx);
      }
      if (s < cfg.slots) cursor = slot_start(cfg, s) + cfg.slot_len;
    }

    int label = 0;
    for (int s = 0; s < cfg.slots; ++s) {
      const bool high = rng.below(2) == 1;
      if (high) label |= 1 << s;
      SceneEvent burst;
      burst.kind = EventKind::tone;
      burst.t0 = slot_start(cfg, s);
      burst.t1 = burst.t0 + cfg.slot_len;
      burst.f0 = burst.f1 = high ? cfg.high_freq : cfg.low_freq;
      burst.amp = cfg.burst_amp;
      item.recipe.events.push_back(burst);
    }

    item.label = label;
    item.split = split;
    item.name = padded_name(name_prefix, split, i);
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace mclp
