#include "mclp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mclp/error.hpp"
#include "mclp/objectives.hpp"
#include "mclp/patch.hpp"

namespace fs = std::filesystem;

namespace mclp {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

WinnerLog collect_winners(Trainer& trainer, const CollectOptions& opt) {
  if (opt.sample_limit <= 0)
    throw ConfigError("collect_winners: sample_limit must be positive");
  const RunConfig& cfg = trainer.config();
  const auto clips = trainer.store().indices_of_split(opt.split);
  if (clips.empty())
    throw InputError("collect_winners: no clips in split \"" + opt.split +
                     "\"");

  WinnerLog log;
  log.hypotheses = cfg.hypotheses;
  std::vector<double> patch_rows;
  const std::int64_t want = trainer.features().crop_frames(cfg.crop_seconds);

  for (const std::int64_t clip : clips) {
    if (log.total() >= opt.sample_limit) break;
    const LogMelSpec& full = trainer.features().full(clip);
    if (full.frames < want)
      throw InputError("collect_winners: clip " + std::to_string(clip) +
                       " has " + std::to_string(full.frames) +
                       " frames, a crop needs " + std::to_string(want));
    std::int64_t off = 0;
    const std::int64_t max_off = full.frames - want;
    if (max_off > 0) {
      Rng crop_rng(derive_seed(opt.seed, "crop",
                               static_cast<std::uint64_t>(clip)));
      off = static_cast<std::int64_t>(
          crop_rng.below(static_cast<std::uint64_t>(max_off) + 1));
    }
    PatchBatch pb = patchify(trainer.features().slice(clip, off, want));
    MaskSplit split;
    if (opt.forced_mask.empty()) {
      Rng mask_rng(derive_seed(opt.seed, "mask",
                               static_cast<std::uint64_t>(clip)));
      split = random_mask(pb.count(), cfg.mask_ratio, mask_rng);
    } else {
      split = mask_from_indices(pb.count(), opt.forced_mask);
    }

    Tensor embedded = embed_patches(trainer.student(), pb);
    Tensor z_vis =
        encode(trainer.student(), gather_rows(embedded, split.visible_idx));
    HypothesisSet hyps = predict_masked(trainer.predictor(), z_vis, split);
    Tensor z_all = encode(trainer.teacher(),
                          embed_patches(trainer.teacher(), pb));
    Tensor z_m = gather_rows(z_all, split.masked_idx);
    Tensor distances = hypothesis_distances(hyps, z_m);
    const auto winners = winners_of(distances);

    const auto& patch_data = pb.patches.data();
    for (std::size_t m = 0; m < split.masked_idx.size(); ++m) {
      if (log.total() >= opt.sample_limit) break;
      const std::int64_t p = split.masked_idx[m];
      WinnerRecord rec;
      rec.clip = clip;
      rec.row = pb.positions[static_cast<std::size_t>(p)].t;
      rec.col = pb.positions[static_cast<std::size_t>(p)].f;
      rec.winner = static_cast<int>(winners[m]);
      rec.dmin = distances.at(static_cast<std::int64_t>(m), winners[m]);
      log.records.push_back(rec);
      const double* src = patch_data.data() + p * kPatchDim;
      patch_rows.insert(patch_rows.end(), src, src + kPatchDim);
    }
  }

  if (!log.records.empty()) {
    const std::int64_t n = log.total();
    log.patches = Tensor::from_data({n, kPatchDim}, std::move(patch_rows));
  }
  return log;
}

std::vector<double> utilisation_histogram(const WinnerLog& log) {
  if (log.hypotheses < 1)
    throw ConfigError("utilisation_histogram: log has no guess count");
  if (log.records.empty())
    throw InputError("utilisation_histogram: empty winner log");
  std::vector<double> fractions(static_cast<std::size_t>(log.hypotheses),
                                0.0);
  for (const auto& rec : log.records) {
    if (rec.winner < 0 || rec.winner >= log.hypotheses)
      throw InputError("utilisation_histogram: winner " +
                       std::to_string(rec.winner) + " outside " +
                       std::to_string(log.hypotheses) + " guesses");
    fractions[static_cast<std::size_t>(rec.winner)] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(log.total());
  for (double& f : fractions) f *= inv;
  return fractions;
}

void write_winner_csv(const std::string& path, const WinnerLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "clip,row,col,winner,dmin\n";
  for (const auto& rec : log.records)
    out << rec.clip << "," << rec.row << "," << rec.col << "," << rec.winner
        << "," << fmt17(rec.dmin) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

// ---- k-means ----

namespace {

double sq_dist(const double* a, const double* b, std::int64_t d) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed,
                    int max_iters, double tol) {
  if (!points.defined() || points.rank() != 2)
    throw ShapeError("kmeans: points must be a [n, dim] matrix");
  const std::int64_t m = points.dim(0);
  const std::int64_t d = points.dim(1);
  if (k < 1) throw ConfigError("kmeans: cluster count must be positive");
  if (m < k)
    throw InputError("kmeans: " + std::to_string(m) +
                     " points cannot fill " + std::to_string(k) +
                     " clusters");
  if (max_iters < 1) throw ConfigError("kmeans: max_iters must be positive");
  if (tol < 0.0) throw ConfigError("kmeans: tol must be non-negative");

  const auto& x = points.data();
  const auto row = [&](std::int64_t i) { return x.data() + i * d; };
  Rng rng(seed);

  // Seeding: first centroid uniform, the rest proportional to the squared
  // distance from the nearest centroid so far. Once every point coincides
  // with a centroid the remaining picks fall back to uniform draws.
  std::vector<double> centroids;
  centroids.reserve(static_cast<std::size_t>(k) *
                    static_cast<std::size_t>(d));
  std::vector<double> nearest(static_cast<std::size_t>(m),
                              std::numeric_limits<double>::infinity());
  const auto add_centroid = [&](std::int64_t i) {
    const double* p = row(i);
    centroids.insert(centroids.end(), p, p + d);
    for (std::int64_t j = 0; j < m; ++j)
      nearest[static_cast<std::size_t>(j)] =
          std::min(nearest[static_cast<std::size_t>(j)], sq_dist(row(j), p, d));
  };
  add_centroid(static_cast<std::int64_t>(rng.below(
      static_cast<std::uint64_t>(m))));
  while (static_cast<std::int64_t>(centroids.size()) / d < k) {
    double total = 0.0;
    for (const double v : nearest) total += v;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      std::int64_t pick = m - 1;
      for (std::int64_t j = 0; j < m; ++j) {
        cum += nearest[static_cast<std::size_t>(j)];
        if (cum >= u) {
          pick = j;
          break;
        }
      }
      add_centroid(pick);
    } else {
      add_centroid(static_cast<std::int64_t>(
          rng.below(static_cast<std::uint64_t>(m))));
    }
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(m), 0);
  res.sizes.assign(static_cast<std::size_t>(k), 0);
  std::vector<double> point_dist(static_cast<std::size_t>(m), 0.0);

  const auto assign = [&]() {
    double sum = 0.0;
    std::fill(res.sizes.begin(), res.sizes.end(), std::int64_t{0});
    for (std::int64_t i = 0; i < m; ++i) {
      std::int64_t best = 0;
      double best_d = sq_dist(row(i), centroids.data(), d);
      for (std::int64_t c = 1; c < k; ++c) {
        const double dist = sq_dist(row(i), centroids.data() + c * d, d);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = best;
      res.sizes[static_cast<std::size_t>(best)] += 1;
      point_dist[static_cast<std::size_t>(i)] = best_d;
      sum += best_d;
    }
    return sum / static_cast<double>(m);
  };

  res.distortion = assign();
  res.trace.push_back(res.distortion);

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<double> next(centroids.size(), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
      const std::int64_t c = res.assignment[static_cast<std::size_t>(i)];
      const double* p = row(i);
      for (std::int64_t j = 0; j < d; ++j) next[c * d + j] += p[j];
    }
    std::vector<std::int64_t> empties;
    for (std::int64_t c = 0; c < k; ++c) {
      const std::int64_t n = res.sizes[static_cast<std::size_t>(c)];
      if (n == 0) {
        empties.push_back(c);
        continue;
      }
      for (std::int64_t j = 0; j < d; ++j)
        next[c * d + j] /= static_cast<double>(n);
    }
    if (!empties.empty()) {
      // Each empty cluster restarts at the point currently farthest from
      // its own centroid; successive empties take successive points.
      std::vector<std::int64_t> order(static_cast<std::size_t>(m));
      for (std::int64_t i = 0; i < m; ++i)
        order[static_cast<std::size_t>(i)] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::int64_t a, std::int64_t b) {
                         return point_dist[static_cast<std::size_t>(a)] >
                                point_dist[static_cast<std::size_t>(b)];
                       });
      for (std::size_t e = 0; e < empties.size(); ++e) {
        const double* p = row(order[e % order.size()]);
        std::copy(p, p + d, next.begin() + empties[e] * d);
      }
    }
    double shift = 0.0;
    for (std::int64_t c = 0; c < k; ++c)
      shift = std::max(shift,
                       std::sqrt(sq_dist(next.data() + c * d,
                                         centroids.data() + c * d, d)));
    centroids.swap(next);
    res.distortion = assign();
    res.trace.push_back(res.distortion);
    if (shift < tol) break;
  }

  res.centroids = Tensor::from_data({static_cast<std::int64_t>(k), d},
                                    std::move(centroids));
  return res;
}

// ---- prototypes ----

PrototypeSet prototypes(const WinnerLog& log, int clusters,
                        std::uint64_t seed) {
  if (clusters < 1)
    throw ConfigError("prototypes: cluster count must be positive");
  if (log.records.empty())
    throw InputError("prototypes: empty winner log");
  if (!log.patches.defined() || log.patches.dim(0) != log.total())
    throw ShapeError("prototypes: log patches do not match its records");
  const std::int64_t width = log.patches.dim(1);

  PrototypeSet set;
  set.clusters_requested = clusters;
  const auto& patch_data = log.patches.data();
  for (int j = 0; j < log.hypotheses; ++j) {
    HypothesisPrototypes hp;
    hp.hypothesis = j;
    std::vector<double> rows;
    for (std::int64_t i = 0; i < log.total(); ++i) {
      if (log.records[static_cast<std::size_t>(i)].winner != j) continue;
      const double* src = patch_data.data() + i * width;
      rows.insert(rows.end(), src, src + width);
      hp.patch_count += 1;
    }
    if (hp.patch_count >= clusters) {
      Tensor group =
          Tensor::from_data({hp.patch_count, width}, std::move(rows));
      hp.clusters = kmeans(group, clusters,
                           derive_seed(seed, "proto",
                                       static_cast<std::uint64_t>(j)));
      hp.clustered = true;
    }
    set.per_hypothesis.push_back(std::move(hp));
  }
  return set;
}

void write_prototype_images(const std::string& dir, const PrototypeSet& set) {
  fs::create_directories(dir);
  std::ofstream index(dir + "/prototypes.csv",
                      std::ios::binary | std::ios::trunc);
  std::ofstream values(dir + "/prototype_values.csv",
                       std::ios::binary | std::ios::trunc);
  if (!index || !values) throw IoError("cannot write prototype CSVs in " + dir);
  index << "hypothesis,cluster,size,value_min,value_max,file\n";
  values << "hypothesis,cluster";
  for (int j = 0; j < kPatchDim; ++j) values << ",v" << j;
  values << "\n";

  for (const auto& hp : set.per_hypothesis) {
    if (!hp.clustered) continue;
    const Tensor& c = hp.clusters.centroids;
    if (c.dim(1) != kPatchDim)
      throw ShapeError("write_prototype_images: centroid width " +
                       std::to_string(c.dim(1)) + ", expected " +
                       std::to_string(kPatchDim));
    const auto& cd = c.data();
    for (std::int64_t i = 0; i < c.dim(0); ++i) {
      const double* v = cd.data() + i * kPatchDim;
      double lo = v[0], hi = v[0];
      for (int j = 1; j < kPatchDim; ++j) {
        lo = std::min(lo, v[j]);
        hi = std::max(hi, v[j]);
      }
      const std::string name = "proto_h" + std::to_string(hp.hypothesis) +
                               "_c" + std::to_string(i) + ".pgm";
      std::ofstream pgm(dir + "/" + name,
                        std::ios::binary | std::ios::trunc);
      if (!pgm) throw IoError("cannot write " + dir + "/" + name);
      pgm << "P5\n" << kPatch << " " << kPatch << "\n255\n";
      const double span = hi - lo;
      for (int j = 0; j < kPatchDim; ++j) {
        const double unit = span > 0.0 ? (v[j] - lo) / span : 0.0;
        pgm.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(unit * 255.0))));
      }
      if (!pgm) throw IoError("failed writing " + dir + "/" + name);

      index << hp.hypothesis << "," << i << ","
            << hp.clusters.sizes[static_cast<std::size_t>(i)] << ","
            << fmt17(lo) << "," << fmt17(hi) << "," << name << "\n";
      values << hp.hypothesis << "," << i;
      for (int j = 0; j < kPatchDim; ++j) values << "," << fmt17(v[j]);
      values << "\n";
    }
  }
  if (!index || !values)
    throw IoError("failed writing prototype CSVs in " + dir);
}

// ---- forced-mask evaluation ----

ForcedMaskEval forced_mask_eval(Trainer& trainer,
                                const std::vector<std::int64_t>& masked,
                                const std::string& split) {
  const auto clips = trainer.store().indices_of_split(split);
  if (clips.empty())
    throw InputError("forced_mask_eval: no clips in split \"" + split + "\"");
  const std::int64_t want =
      trainer.features().crop_frames(trainer.config().crop_seconds);

  ForcedMaskEval eval;
  double sum = 0.0;
  std::vector<double> latent_rows;
  std::int64_t embed_dim = 0;

  for (const std::int64_t clip : clips) {
    const LogMelSpec& full = trainer.features().full(clip);
    if (full.frames < want)
      throw InputError("forced_mask_eval: clip " + std::to_string(clip) +
                       " has " + std::to_string(full.frames) +
                       " frames, a crop needs " + std::to_string(want));
    PatchBatch pb = patchify(trainer.features().slice(clip, 0, want));
    MaskSplit split_idx = mask_from_indices(pb.count(), masked);

    Tensor embedded = embed_patches(trainer.student(), pb);
    Tensor z_vis = encode(trainer.student(),
                          gather_rows(embedded, split_idx.visible_idx));
    HypothesisSet hyps = predict_masked(trainer.predictor(), z_vis, split_idx);
    Tensor z_all = encode(trainer.teacher(),
                          embed_patches(trainer.teacher(), pb));
    Tensor z_m = gather_rows(z_all, split_idx.masked_idx);
    Tensor distances = hypothesis_distances(hyps, z_m);
    const auto winners = winners_of(distances);
    for (std::size_t m = 0; m < winners.size(); ++m)
      sum += distances.at(static_cast<std::int64_t>(m), winners[m]);

    Tensor unit = l2_normalize_rows(z_m);
    const auto& ud = unit.data();
    latent_rows.insert(latent_rows.end(), ud.begin(), ud.end());
    embed_dim = unit.dim(1);
    eval.positions += split_idx.masked_count();
  }

  eval.mean_min_distance = sum / static_cast<double>(eval.positions);
  eval.target_latents =
      Tensor::from_data({eval.positions, embed_dim}, std::move(latent_rows));
  return eval;
}

namespace {

std::vector<std::int64_t> slot_rows(const TwoModeConfig& cfg, int slot,
                                    const MelConfig& mel, bool contained,
                                    const char* who) {
  if (slot < 0 || slot >= cfg.slots)
    throw UsageError(std::string(who) + ": slot " + std::to_string(slot) +
                     " outside " + std::to_string(cfg.slots) + " slots");
  const double sr = static_cast<double>(mel.sample_rate);
  const std::int64_t total =
      static_cast<std::int64_t>(std::llround(cfg.duration * sr));
  if (total < mel.win_length)
    throw InputError(std::string(who) + ": clip shorter than one window");
  const std::int64_t frames = (total - mel.win_length) / mel.hop_length + 1;
  const std::int64_t rows = frames / kPatch;
  const std::int64_t lo =
      static_cast<std::int64_t>(std::llround(slot_start(cfg, slot) * sr));
  const std::int64_t hi = static_cast<std::int64_t>(
      std::llround((slot_start(cfg, slot) + cfg.slot_len) * sr));

  std::vector<std::int64_t> out;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t first = mel.hop_length * (kPatch * r);
    const std::int64_t last =
        mel.hop_length * (kPatch * r + kPatch - 1) + mel.win_length;
    const bool keep =
        contained ? first >= lo && last <= hi : first < hi && last > lo;
    if (keep) out.push_back(r);
  }
  if (out.empty())
    throw InputError(std::string(who) + ": no patch row meets slot " +
                     std::to_string(slot));
  return out;
}

}  // namespace

std::vector<std::int64_t> slot_patch_rows(const TwoModeConfig& cfg, int slot,
                                          const MelConfig& mel) {
  return slot_rows(cfg, slot, mel, true, "slot_patch_rows");
}

std::vector<std::int64_t> slot_overlap_rows(const TwoModeConfig& cfg,
                                            int slot, const MelConfig& mel) {
  return slot_rows(cfg, slot, mel, false, "slot_overlap_rows");
}

double energy_center_of_mass(const Tensor& patches, std::int64_t row) {
  if (!patches.defined() || patches.rank() != 2 ||
      patches.dim(1) != kPatchDim)
    throw ShapeError("energy_center_of_mass: expected [n, " +
                     std::to_string(kPatchDim) + "] patches");
  if (row < 0 || row >= patches.dim(0))
    throw UsageError("energy_center_of_mass: row " + std::to_string(row) +
                     " outside " + std::to_string(patches.dim(0)) + " rows");
  const double* p = patches.data().data() + row * kPatchDim;
  double lo = p[0];
  for (int i = 1; i < kPatchDim; ++i) lo = std::min(lo, p[i]);
  double wsum = 0.0, moment = 0.0;
  for (int f = 0; f < kPatch; ++f)
    for (int b = 0; b < kPatch; ++b) {
      const double w = p[f * kPatch + b] - lo;
      wsum += w;
      moment += w * static_cast<double>(b);
    }
  if (wsum <= 0.0) return (kPatch - 1) / 2.0;
  return moment / wsum;
}

}  // namespace mclp
