#include "mclp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "mclp/error.hpp"
#include "mclp/schedule.hpp"
#include "mclp/tensor_io.hpp"

namespace fs = std::filesystem;

namespace mclp {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Entropy of one distribution row, natural log, 0 log 0 read as 0.
double row_entropy(const double* p, std::int64_t k) {
  double h = 0.0;
  for (std::int64_t j = 0; j < k; ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return h;
}

}  // namespace

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  store_ = open_dataset(cfg_);
  cache_ = std::make_unique<MelCache>(*store_, cfg_.mel());
  train_idx_ = store_->indices_of_split(cfg_.split);
  if (train_idx_.empty())
    throw InputError("trainer: no clips in split \"" + cfg_.split + "\"");
  if (static_cast<std::int64_t>(train_idx_.size()) < cfg_.batch)
    throw ConfigError("trainer: batch of " + std::to_string(cfg_.batch) +
                      " exceeds the " + std::to_string(train_idx_.size()) +
                      " clips in split \"" + cfg_.split + "\"");
  build_models();
  tau_ = cfg_.tau_init;
}

void Trainer::build_models() {
  Rng init_rng(derive_seed(static_cast<std::uint64_t>(cfg_.seed), "init"));
  student_ = EncoderParams::init(cfg_.encoder(), init_rng);
  predictor_ = PredictorParams::init(cfg_.predictor(), init_rng);
  heads_ = ClsHeads::init(cfg_.cls(), init_rng);
  teacher_ = make_momentum_copy(student_);

  params_ = ParamMap{};
  student_.register_into(params_, "enc");
  predictor_.register_into(params_, "pred");
  heads_.register_student_into(params_, "cls");

  student_enc_pairs_ = ParamMap{};
  student_.register_into(student_enc_pairs_, "enc");
  teacher_enc_pairs_ = ParamMap{};
  teacher_.register_into(teacher_enc_pairs_, "enc");

  AdamWConfig oc;
  oc.lr = cfg_.lr;
  oc.weight_decay = cfg_.weight_decay;
  opt_ = make_optimizer(params_, oc);
}

std::vector<std::int64_t> Trainer::draw_batch() const {
  std::vector<std::int64_t> pool = train_idx_;
  Rng rng(derive_seed(static_cast<std::uint64_t>(cfg_.seed), "batch",
                      static_cast<std::uint64_t>(step_)));
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(cfg_.batch));
  return pool;
}

PatchBatch Trainer::crop_patches(std::int64_t clip_index, int slot) {
  const LogMelSpec& full = cache_->full(clip_index);
  const std::int64_t want = cache_->crop_frames(cfg_.crop_seconds);
  if (full.frames < want)
    throw InputError("trainer: clip " + std::to_string(clip_index) +
                     " has " + std::to_string(full.frames) +
                     " frames, a crop needs " + std::to_string(want));
  const std::int64_t max_off = full.frames - want;
  std::int64_t off = 0;
  if (max_off > 0) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(cfg_.seed), "crop",
                        static_cast<std::uint64_t>(step_),
                        static_cast<std::uint64_t>(slot)));
    off = static_cast<std::int64_t>(
        rng.below(static_cast<std::uint64_t>(max_off) + 1));
  }
  return patchify(cache_->slice(clip_index, off, want));
}

StepStats Trainer::train_step() {
  if (step_ >= cfg_.steps)
    throw UsageError("train_step: run already finished");
  const HypothesisStrategy strat = cfg_.strategy_enum();
  const auto batch_idx = draw_batch();

  StepStats stats;
  stats.step = step_;
  stats.tau = tau_;
  stats.winner_counts.assign(static_cast<std::size_t>(cfg_.hypotheses), 0);

  GradSink sink;
  std::vector<Tensor> teacher_latents;
  teacher_latents.reserve(batch_idx.size());
  std::vector<double> batch_mean_dist(static_cast<std::size_t>(cfg_.classes),
                                      0.0);
  double entropy_acc = 0.0;
  std::int64_t entropy_rows = 0;

  for (int slot = 0; slot < cfg_.batch; ++slot) {
    const std::int64_t clip = batch_idx[static_cast<std::size_t>(slot)];
    PatchBatch patches = crop_patches(clip, slot);
    Rng mask_rng(derive_seed(static_cast<std::uint64_t>(cfg_.seed), "mask",
                             static_cast<std::uint64_t>(step_),
                             static_cast<std::uint64_t>(slot)));
    MaskSplit split = random_mask(patches.count(), cfg_.mask_ratio, mask_rng);

    // Online path sees only the visible patches.
    Tensor embedded = embed_patches(student_, patches);
    Tensor z_vis = encode(student_, gather_rows(embedded, split.visible_idx));
    HypothesisSet hyps = predict_masked(predictor_, z_vis, split);

    // Momentum path sees everything; none of it carries gradients.
    Tensor t_emb = embed_patches(teacher_, patches);
    Tensor z_all = encode(teacher_, t_emb);
    Tensor z_m = gather_rows(z_all, split.masked_idx);

    Tensor distances = hypothesis_distances(hyps, z_m);
    Tensor pred_loss;
    switch (strat) {
      case HypothesisStrategy::annealed:
        pred_loss = annealed_prediction_loss(distances, tau_);
        break;
      case HypothesisStrategy::greedy:
        pred_loss = greedy_prediction_loss(distances);
        break;
      case HypothesisStrategy::mean:
        pred_loss = mean_prediction_loss(hyps, z_m);
        break;
    }

    const auto winners = winners_of(distances);
    for (const auto w : winners)
      stats.winner_counts[static_cast<std::size_t>(w)] += 1;
    Tensor best = select_best(hyps, winners);

    Tensor p_student = student_class_distribution(heads_, best);
    Tensor p_teacher = teacher_class_distribution(heads_, z_m);
    Tensor cls_loss = classification_loss(p_teacher, p_student);
    Tensor total = combined_loss(cls_loss, pred_loss, cfg_.alpha);

    backward(total, &sink);

    stats.pred_loss += pred_loss.item();
    stats.cls_loss += cls_loss.item();
    stats.total_loss += total.item();
    teacher_latents.push_back(z_m);

    const auto& pt = p_teacher.data();
    const std::int64_t rows = p_teacher.dim(0);
    for (std::int64_t i = 0; i < rows; ++i) {
      entropy_acc += row_entropy(pt.data() + i * cfg_.classes, cfg_.classes);
      for (int k = 0; k < cfg_.classes; ++k)
        batch_mean_dist[static_cast<std::size_t>(k)] +=
            pt[static_cast<std::size_t>(i * cfg_.classes + k)];
    }
    entropy_rows += rows;
  }

  const double inv_batch = 1.0 / static_cast<double>(cfg_.batch);
  stats.pred_loss *= inv_batch;
  stats.cls_loss *= inv_batch;
  stats.total_loss *= inv_batch;

  for (auto& [name, param] : params_.items) {
    param.zero_grad();
    const auto it = sink.grads.find(param.node());
    if (it != sink.grads.end()) param.add_grad(it->second, inv_batch);
  }

  opt_.cfg.lr = lr_at(cfg_.lr, cfg_.warmup, step_, cfg_.steps);
  stats.lr = opt_.cfg.lr;
  adamw_step(params_, opt_);

  // Center update uses this step's teacher outputs, before the heads move.
  Tensor all_latents = teacher_latents.size() == 1
                           ? teacher_latents[0]
                           : concat_rows(teacher_latents);
  update_center(heads_, all_latents);

  stats.lambda =
      momentum_at(cfg_.momentum_start, cfg_.momentum_final, step_, cfg_.steps);
  ema_update(teacher_enc_pairs_, student_enc_pairs_, stats.lambda);
  ParamMap teacher_head = heads_.teacher_pairs();
  ema_update(teacher_head, heads_.student_pairs(), cfg_.head_momentum);

  if (cfg_.anneal) tau_ = anneal_tau(tau_, cfg_.tau_decay, cfg_.tau_floor);

  for (double& v : batch_mean_dist)
    v /= static_cast<double>(entropy_rows);
  stats.mean_row_entropy = entropy_acc / static_cast<double>(entropy_rows);
  stats.batch_entropy =
      row_entropy(batch_mean_dist.data(), cfg_.classes);

  step_ += 1;
  return stats;
}

void Trainer::run(bool quiet) {
  fs::create_directories(cfg_.out_dir);
  {
    std::ofstream resolved(cfg_.out_dir + "/resolved.toml",
                           std::ios::binary | std::ios::trunc);
    if (!resolved)
      throw IoError("cannot write " + cfg_.out_dir + "/resolved.toml");
    resolved << cfg_.resolved_text();
  }

  const bool fresh = step_ == 0;
  const auto mode =
      fresh ? std::ios::binary | std::ios::trunc
            : std::ios::binary | std::ios::app;
  std::ofstream metrics(cfg_.out_dir + "/metrics.csv", mode);
  std::ofstream diagnostics(cfg_.out_dir + "/diagnostics.csv", mode);
  if (!metrics || !diagnostics)
    throw IoError("cannot open run logs under " + cfg_.out_dir);
  if (fresh) {
    metrics << "step,pred_loss,cls_loss,total,tau_mcl,lambda";
    for (int j = 0; j < cfg_.hypotheses; ++j) metrics << ",winner_" << j;
    metrics << "\n";
    diagnostics << "step,mean_row_entropy,batch_entropy\n";
  }

  while (step_ < cfg_.steps) {
    const StepStats s = train_step();
    metrics << s.step << "," << fmt17(s.pred_loss) << "," << fmt17(s.cls_loss)
            << "," << fmt17(s.total_loss) << "," << fmt17(s.tau) << ","
            << fmt17(s.lambda);
    for (const auto c : s.winner_counts) metrics << "," << c;
    metrics << "\n";
    diagnostics << s.step << "," << fmt17(s.mean_row_entropy) << ","
                << fmt17(s.batch_entropy) << "\n";

    if (!quiet && (s.step % cfg_.log_every == 0 || step_ == cfg_.steps)) {
      std::printf("step %6lld  pred %.5f  cls %.5f  total %.5f  tau %.4f\n",
                  static_cast<long long>(s.step), s.pred_loss, s.cls_loss,
                  s.total_loss, s.tau);
      std::fflush(stdout);
    }
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
        step_ < cfg_.steps) {
      metrics.flush();
      diagnostics.flush();
      save_checkpoint(cfg_.out_dir + "/ckpt_" + std::to_string(step_) +
                      ".mclt");
    }
  }
  metrics.flush();
  diagnostics.flush();
  save_checkpoint(cfg_.out_dir + "/final.mclt");
}

void Trainer::save_checkpoint(const std::string& path) const {
  NamedTensors records;
  for (const auto& [name, t] : params_.items)
    records.emplace_back("param." + name, t);
  for (const auto& [name, t] : teacher_enc_pairs_.items)
    records.emplace_back("teacher." + name, t);
  records.emplace_back("teacher.cls.w", heads_.teacher_w);
  records.emplace_back("teacher.cls.b", heads_.teacher_b);
  records.emplace_back("center", heads_.center);

  for (const auto& slot : opt_.slots) {
    records.emplace_back(
        "opt.m." + slot.name,
        Tensor::from_data({static_cast<std::int64_t>(slot.m.size())}, slot.m));
    records.emplace_back(
        "opt.v." + slot.name,
        Tensor::from_data({static_cast<std::int64_t>(slot.v.size())}, slot.v));
  }

  records.emplace_back(
      "state",
      Tensor::from_data({3}, {static_cast<double>(step_), tau_,
                              static_cast<double>(opt_.step_count)}));

  const std::string text = cfg_.resolved_text();
  std::vector<double> bytes(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    bytes[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
  const auto config_len = static_cast<std::int64_t>(bytes.size());
  records.emplace_back("config",
                       Tensor::from_data({config_len}, std::move(bytes)));

  write_tensor_file(path, records, kTensorFileV2F64);
}

Trainer Trainer::resume(const std::string& checkpoint_path) {
  const NamedTensors records = read_tensor_file(checkpoint_path);
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : records) by_name[name] = &t;

  const auto need = [&](const std::string& name) -> const Tensor& {
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw IoError(checkpoint_path + ": missing record \"" + name + "\"");
    return *it->second;
  };

  const Tensor& config_bytes = need("config");
  std::string text;
  text.reserve(static_cast<std::size_t>(config_bytes.numel()));
  for (const double b : config_bytes.data())
    text += static_cast<char>(static_cast<unsigned char>(b));
  RunConfig cfg = RunConfig::from_doc(TomlDoc::parse(text, checkpoint_path));

  Trainer t(cfg);

  const auto restore = [&](Tensor& dst, const std::string& name) {
    const Tensor& src = need(name);
    if (src.shape() != dst.shape())
      throw IoError(checkpoint_path + ": record \"" + name + "\" has shape " +
                    shape_str(src.shape()) + ", model expects " +
                    shape_str(dst.shape()));
    dst.raw_data() = src.data();
  };

  for (auto& [name, param] : t.params_.items) restore(param, "param." + name);
  for (auto& [name, param] : t.teacher_enc_pairs_.items)
    restore(param, "teacher." + name);
  restore(t.heads_.teacher_w, "teacher.cls.w");
  restore(t.heads_.teacher_b, "teacher.cls.b");
  restore(t.heads_.center, "center");

  for (auto& slot : t.opt_.slots) {
    const Tensor& m = need("opt.m." + slot.name);
    const Tensor& v = need("opt.v." + slot.name);
    if (m.numel() != static_cast<std::int64_t>(slot.m.size()) ||
        v.numel() != static_cast<std::int64_t>(slot.v.size()))
      throw IoError(checkpoint_path + ": optimizer state size mismatch for " +
                    slot.name);
    slot.m = m.data();
    slot.v = v.data();
  }

  const Tensor& state = need("state");
  if (state.numel() != 3)
    throw IoError(checkpoint_path + ": malformed state record");
  t.step_ = static_cast<std::int64_t>(state.data()[0]);
  t.tau_ = state.data()[1];
  t.opt_.step_count = static_cast<std::int64_t>(state.data()[2]);
  if (t.step_ < 0 || t.step_ > cfg.steps)
    throw IoError(checkpoint_path + ": step " + std::to_string(t.step_) +
                  " outside the configured run");
  return t;
}

}  // namespace mclp
