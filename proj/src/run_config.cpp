#include "mclp/run_config.hpp"

#include <cstdio>
#include <sstream>

#include "mclp/error.hpp"

namespace mclp {

namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Force a decimal marker so the echo re-parses as a float, not an int.
  const std::string s(buf);
  if (s.find_first_of(".eE") == std::string::npos &&
      s.find_first_not_of("+-0123456789") == std::string::npos)
    return s + ".0";
  return s;
}

std::string fmt_text(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RunConfig RunConfig::from_doc(const TomlDoc& doc) {
  RunConfig d;
  TomlBinder b(doc);

  RunConfig c;
  c.embed_dim = static_cast<int>(b.get_int("model.embed_dim", d.embed_dim));
  c.encoder_blocks =
      static_cast<int>(b.get_int("model.encoder_blocks", d.encoder_blocks));
  c.predictor_blocks = static_cast<int>(
      b.get_int("model.predictor_blocks", d.predictor_blocks));
  c.heads = static_cast<int>(b.get_int("model.heads", d.heads));
  c.mlp_hidden = static_cast<int>(b.get_int("model.mlp_hidden", d.mlp_hidden));
  c.hypotheses =
      static_cast<int>(b.get_int("model.hypotheses", d.hypotheses));
  c.classes = static_cast<int>(b.get_int("model.classes", d.classes));
  c.max_patches =
      static_cast<int>(b.get_int("model.max_patches", d.max_patches));

  c.alpha = b.get_real("loss.alpha", d.alpha);
  c.mask_ratio = b.get_real("loss.mask_ratio", d.mask_ratio);
  c.strategy = b.get_text("loss.strategy", d.strategy);
  c.tau_student = b.get_real("loss.tau_student", d.tau_student);
  c.tau_teacher = b.get_real("loss.tau_teacher", d.tau_teacher);
  c.center_rate = b.get_real("loss.center_rate", d.center_rate);

  c.steps = b.get_int("schedule.steps", d.steps);
  c.warmup = b.get_int("schedule.warmup", d.warmup);
  c.lr = b.get_real("schedule.lr", d.lr);
  c.weight_decay = b.get_real("schedule.weight_decay", d.weight_decay);
  c.momentum_start = b.get_real("schedule.momentum_start", d.momentum_start);
  c.momentum_final = b.get_real("schedule.momentum_final", d.momentum_final);
  c.head_momentum = b.get_real("schedule.head_momentum", d.head_momentum);
  c.tau_init = b.get_real("schedule.tau_init", d.tau_init);
  c.tau_decay = b.get_real("schedule.tau_decay", d.tau_decay);
  c.tau_floor = b.get_real("schedule.tau_floor", d.tau_floor);
  c.anneal = b.get_bool("schedule.anneal", d.anneal);

  c.source = b.get_text("data.source", d.source);
  c.manifest = b.get_text("data.manifest", d.manifest);
  c.split = b.get_text("data.split", d.split);
  c.clips_per_class =
      static_cast<int>(b.get_int("data.clips_per_class", d.clips_per_class));
  c.test_per_class =
      static_cast<int>(b.get_int("data.test_per_class", d.test_per_class));
  c.clips = static_cast<int>(b.get_int("data.clips", d.clips));
  c.test_clips = static_cast<int>(b.get_int("data.test_clips", d.test_clips));
  c.data_seed = b.get_int("data.data_seed", d.data_seed);
  c.crop_seconds = b.get_real("data.crop_seconds", d.crop_seconds);
  c.batch = static_cast<int>(b.get_int("data.batch", d.batch));
  c.sample_rate =
      static_cast<int>(b.get_int("data.sample_rate", d.sample_rate));
  c.win_length = static_cast<int>(b.get_int("data.win_length", d.win_length));
  c.hop_length = static_cast<int>(b.get_int("data.hop_length", d.hop_length));
  c.mel_bins = static_cast<int>(b.get_int("data.mel_bins", d.mel_bins));
  c.fmin = b.get_real("data.fmin", d.fmin);
  c.fmax = b.get_real("data.fmax", d.fmax);
  c.log_eps = b.get_real("data.log_eps", d.log_eps);

  c.seed = b.get_int("run.seed", d.seed);
  c.out_dir = b.get_text("run.out_dir", d.out_dir);
  c.checkpoint_every =
      b.get_int("run.checkpoint_every", d.checkpoint_every);
  c.log_every = b.get_int("run.log_every", d.log_every);

  b.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  TomlDoc doc = TomlDoc::parse_file(path);
  for (const auto& [key, literal] : overrides) doc.set_override(key, literal);
  return from_doc(doc);
}

void RunConfig::validate() const {
  if (embed_dim <= 0 || encoder_blocks <= 0 || predictor_blocks <= 0 ||
      heads <= 0 || hypotheses <= 0 || classes < 2 || max_patches <= 0)
    throw ConfigError("config: non-positive model size");
  if (embed_dim % heads != 0)
    throw ConfigError("config: embed_dim must be divisible by heads");
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("config: loss.alpha outside [0,1]");
  if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
    throw ConfigError("config: loss.mask_ratio outside (0,1)");
  parse_strategy(strategy);
  if (tau_student <= 0.0 || tau_teacher <= 0.0)
    throw ConfigError("config: non-positive softmax temperature");
  if (center_rate < 0.0 || center_rate > 1.0)
    throw ConfigError("config: loss.center_rate outside [0,1]");
  if (steps <= 0) throw ConfigError("config: schedule.steps must be positive");
  if (warmup < 0 || warmup >= steps)
    throw ConfigError("config: schedule.warmup must sit inside the run");
  if (lr <= 0.0) throw ConfigError("config: schedule.lr must be positive");
  if (weight_decay < 0.0)
    throw ConfigError("config: negative weight decay");
  for (double m : {momentum_start, momentum_final, head_momentum})
    if (m < 0.0 || m > 1.0)
      throw ConfigError("config: momentum outside [0,1]");
  if (tau_init <= 0.0 || tau_decay <= 0.0 || tau_decay > 1.0 ||
      tau_floor <= 0.0)
    throw ConfigError("config: bad assignment temperature schedule");
  if (source != "manifest" && source != "events" && source != "two_mode")
    throw ConfigError("config: data.source must be manifest, events, or "
                      "two_mode");
  if (source == "manifest" && manifest.empty())
    throw ConfigError("config: data.manifest required with source manifest");
  if (clips_per_class <= 0 || test_per_class < 0 || clips <= 0 ||
      test_clips < 0)
    throw ConfigError("config: non-positive dataset size");
  if (data_seed < 0) throw ConfigError("config: negative data seed");
  if (crop_seconds <= 0.0)
    throw ConfigError("config: non-positive crop length");
  if (batch <= 0) throw ConfigError("config: non-positive batch");
  if (sample_rate <= 0 || win_length <= 0 || hop_length <= 0)
    throw ConfigError("config: non-positive audio geometry");
  if (mel_bins <= 0 || mel_bins % kPatch != 0)
    throw ConfigError("config: data.mel_bins must be a positive multiple of " +
                      std::to_string(kPatch));
  if (seed < 0) throw ConfigError("config: negative seed");
  if (checkpoint_every < 0 || log_every <= 0)
    throw ConfigError("config: bad logging cadence");
}

std::string RunConfig::resolved_text() const {
  std::ostringstream s;
  s << "[model]\n";
  s << "embed_dim = " << embed_dim << "\n";
  s << "encoder_blocks = " << encoder_blocks << "\n";
  s << "predictor_blocks = " << predictor_blocks << "\n";
  s << "heads = " << heads << "\n";
  s << "mlp_hidden = " << mlp_hidden << "\n";
  s << "hypotheses = " << hypotheses << "\n";
  s << "classes = " << classes << "\n";
  s << "max_patches = " << max_patches << "\n";
  s << "\n[loss]\n";
  s << "alpha = " << fmt_real(alpha) << "\n";
  s << "mask_ratio = " << fmt_real(mask_ratio) << "\n";
  s << "strategy = " << fmt_text(strategy) << "\n";
  s << "tau_student = " << fmt_real(tau_student) << "\n";
  s << "tau_teacher = " << fmt_real(tau_teacher) << "\n";
  s << "center_rate = " << fmt_real(center_rate) << "\n";
  s << "\n[schedule]\n";
  s << "steps = " << steps << "\n";
  s << "warmup = " << warmup << "\n";
  s << "lr = " << fmt_real(lr) << "\n";
  s << "weight_decay = " << fmt_real(weight_decay) << "\n";
  s << "momentum_start = " << fmt_real(momentum_start) << "\n";
  s << "momentum_final = " << fmt_real(momentum_final) << "\n";
  s << "head_momentum = " << fmt_real(head_momentum) << "\n";
  s << "tau_init = " << fmt_real(tau_init) << "\n";
  s << "tau_decay = " << fmt_real(tau_decay) << "\n";
  s << "tau_floor = " << fmt_real(tau_floor) << "\n";
  s << "anneal = " << (anneal ? "true" : "false") << "\n";
  s << "\n[data]\n";
  s << "source = " << fmt_text(source) << "\n";
  s << "manifest = " << fmt_text(manifest) << "\n";
  s << "split = " << fmt_text(split) << "\n";
  s << "clips_per_class = " << clips_per_class << "\n";
  s << "test_per_class = " << test_per_class << "\n";
  s << "clips = " << clips << "\n";
  s << "test_clips = " << test_clips << "\n";
  s << "data_seed = " << data_seed << "\n";
  s << "crop_seconds = " << fmt_real(crop_seconds) << "\n";
  s << "batch = " << batch << "\n";
  s << "sample_rate = " << sample_rate << "\n";
  s << "win_length = " << win_length << "\n";
  s << "hop_length = " << hop_length << "\n";
  s << "mel_bins = " << mel_bins << "\n";
  s << "fmin = " << fmt_real(fmin) << "\n";
  s << "fmax = " << fmt_real(fmax) << "\n";
  s << "log_eps = " << fmt_real(log_eps) << "\n";
  s << "\n[run]\n";
  s << "seed = " << seed << "\n";
  s << "out_dir = " << fmt_text(out_dir) << "\n";
  s << "checkpoint_every = " << checkpoint_every << "\n";
  s << "log_every = " << log_every << "\n";
  return s.str();
}

MelConfig RunConfig::mel() const {
  MelConfig m;
  m.sample_rate = sample_rate;
  m.win_length = win_length;
  m.hop_length = hop_length;
  m.n_mels = mel_bins;
  m.fmin = fmin;
  m.fmax = fmax;
  m.log_eps = log_eps;
  return m;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.patch_dim = kPatchDim;
  e.embed_dim = embed_dim;
  e.blocks = encoder_blocks;
  e.heads = heads;
  e.mlp_hidden = mlp_hidden;
  e.max_patches = max_patches;
  return e;
}

PredictorConfig RunConfig::predictor() const {
  PredictorConfig p;
  p.embed_dim = embed_dim;
  p.blocks = predictor_blocks;
  p.heads = heads;
  p.mlp_hidden = mlp_hidden;
  p.hypotheses = hypotheses;
  p.max_patches = max_patches;
  return p;
}

ClsConfig RunConfig::cls() const {
  ClsConfig c;
  c.embed_dim = embed_dim;
  c.classes = classes;
  c.tau_student = tau_student;
  c.tau_teacher = tau_teacher;
  c.center_rate = center_rate;
  return c;
}

std::vector<LabeledRecipe> dataset_recipes(const RunConfig& cfg) {
  if (cfg.source == "manifest")
    throw ConfigError(
        "data.source: manifest datasets are not synthesized here");

  const auto seed = static_cast<std::uint64_t>(cfg.data_seed);
  if (cfg.source == "events") {
    EventDatasetConfig ec;
    ec.duration = cfg.crop_seconds;
    ec.sample_rate = cfg.sample_rate;
    auto items = make_event_dataset(cfg.clips_per_class, ec, seed, "train",
                                    "events");
    if (cfg.test_per_class > 0) {
      auto test = make_event_dataset(cfg.test_per_class, ec,
                                     derive_seed(seed, "test_split"), "test",
                                     "events");
      items.insert(items.end(), test.begin(), test.end());
    }
    return items;
  }

  TwoModeConfig tc;
  tc.duration = cfg.crop_seconds;
  tc.sample_rate = cfg.sample_rate;
  auto items = make_two_mode_dataset(cfg.clips, tc, seed, "train", "modes");
  if (cfg.test_clips > 0) {
    auto test = make_two_mode_dataset(cfg.test_clips, tc,
                                      derive_seed(seed, "test_split"), "test",
                                      "modes");
    items.insert(items.end(), test.begin(), test.end());
  }
  return items;
}

std::unique_ptr<ClipStore> open_dataset(const RunConfig& cfg) {
  if (cfg.source == "manifest")
    return std::make_unique<ManifestStore>(cfg.manifest);
  return std::make_unique<SynthStore>(dataset_recipes(cfg));
}

}  // namespace mclp
