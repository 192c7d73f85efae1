// Winner collection, utilisation accounting, k-means prototypes, and the
// forced-mask evaluation used to study guess specialisation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mclp/analysis.hpp"
#include "mclp/error.hpp"
#include "mclp/patch.hpp"
#include "support.hpp"

using namespace mclp;
using test_support::random_tensor;
namespace fs = std::filesystem;

namespace {

RunConfig analysis_cfg() {
  RunConfig cfg;
  cfg.embed_dim = 16;
  cfg.encoder_blocks = 1;
  cfg.predictor_blocks = 1;
  cfg.heads = 2;
  cfg.hypotheses = 2;
  cfg.classes = 8;
  cfg.max_patches = 16;
  cfg.steps = 4;
  cfg.warmup = 1;
  cfg.source = "events";
  cfg.clips_per_class = 2;
  cfg.test_per_class = 1;
  cfg.crop_seconds = 1.0;
  cfg.batch = 2;
  cfg.out_dir = "/tmp/mclp_analysis_run";
  cfg.log_every = 1000;
  return cfg;
}

WinnerLog hand_log(int hypotheses, const std::vector<int>& winners,
                   std::uint64_t patch_seed = 11) {
  WinnerLog log;
  log.hypotheses = hypotheses;
  for (std::size_t i = 0; i < winners.size(); ++i) {
    WinnerRecord rec;
    rec.clip = static_cast<std::int64_t>(i);
    rec.row = static_cast<int>(i % 6);
    rec.col = 0;
    rec.winner = winners[i];
    rec.dmin = 0.25 * static_cast<double>(i % 4);
    log.records.push_back(rec);
  }
  log.patches = random_tensor(
      {static_cast<std::int64_t>(winners.size()), kPatchDim}, patch_seed);
  return log;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

void check_logs_equal(const WinnerLog& a, const WinnerLog& b) {
  REQUIRE(a.total() == b.total());
  CHECK(a.hypotheses == b.hypotheses);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].clip == b.records[i].clip);
    CHECK(a.records[i].row == b.records[i].row);
    CHECK(a.records[i].col == b.records[i].col);
    CHECK(a.records[i].winner == b.records[i].winner);
    CHECK(a.records[i].dmin == b.records[i].dmin);
  }
  CHECK(a.patches.data() == b.patches.data());
}

}  // namespace

TEST_CASE("utilisation fractions match hand counts") {
  WinnerLog log = hand_log(2, {0, 1, 0, 0});
  auto h = utilisation_histogram(log);
  REQUIRE(h.size() == 2);
  CHECK(h[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(h[1] == doctest::Approx(0.25).epsilon(1e-12));

  WinnerLog even = hand_log(2, {1, 0, 0, 1});
  auto he = utilisation_histogram(even);
  CHECK(he[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(he[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(he[0] + he[1] == doctest::Approx(1.0).epsilon(1e-12));

  WinnerLog empty;
  empty.hypotheses = 2;
  CHECK_THROWS_AS(utilisation_histogram(empty), InputError);
  WinnerLog bad = hand_log(2, {0, 1});
  bad.records[1].winner = 7;
  CHECK_THROWS_AS(utilisation_histogram(bad), InputError);
}

TEST_CASE("winner csv lists one line per record") {
  WinnerLog log = hand_log(3, {0, 2, 1});
  const std::string path = "/tmp/mclp_analysis_winners.csv";
  write_winner_csv(path, log);
  auto lines = read_lines(path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "clip,row,col,winner,dmin");
  auto fields = split_csv(lines[2]);
  REQUIRE(fields.size() == 5);
  CHECK(fields[0] == "1");
  CHECK(fields[3] == "2");
  CHECK(std::stod(fields[4]) == log.records[1].dmin);
  fs::remove(path);
}

TEST_CASE("kmeans with as many clusters as points lands on the points") {
  Tensor pts = Tensor::from_data({3, 2}, {0.0, 0.0, 5.0, 1.0, -2.0, 4.0});
  auto res = kmeans(pts, 3, 17);
  CHECK(res.distortion == 0.0);
  REQUIRE(res.sizes.size() == 3);
  for (const auto s : res.sizes) CHECK(s == 1);
  // Every point is its own centroid, in some order.
  for (std::int64_t i = 0; i < 3; ++i) {
    const std::int64_t c = res.assignment[static_cast<std::size_t>(i)];
    CHECK(res.centroids.at(c, 0) == pts.at(i, 0));
    CHECK(res.centroids.at(c, 1) == pts.at(i, 1));
  }
}

TEST_CASE("kmeans with one cluster returns the mean") {
  Tensor pts =
      Tensor::from_data({4, 2}, {1.0, 2.0, 3.0, 6.0, -1.0, 0.0, 5.0, 4.0});
  auto res = kmeans(pts, 1, 3);
  CHECK(res.centroids.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.centroids.at(0, 1) == doctest::Approx(3.0).epsilon(1e-12));
  // Mean squared distance to the mean, summed by hand over the 4 points.
  double want = 0.0;
  for (std::int64_t i = 0; i < 4; ++i) {
    const double dx = pts.at(i, 0) - 2.0;
    const double dy = pts.at(i, 1) - 3.0;
    want += dx * dx + dy * dy;
  }
  want /= 4.0;
  CHECK(res.distortion == doctest::Approx(want).epsilon(1e-12));
  CHECK(res.sizes[0] == 4);
}

TEST_CASE("kmeans separates two blobs and reports honest distortion") {
  const std::int64_t per = 20;
  Rng rng(91);
  std::vector<double> data;
  for (std::int64_t i = 0; i < 2 * per; ++i) {
    const double center = i < per ? -2.0 : 2.0;
    for (int j = 0; j < 3; ++j) data.push_back(center + rng.normal(0.0, 0.3));
  }
  Tensor pts = Tensor::from_data({2 * per, 3}, std::move(data));
  auto res = kmeans(pts, 2, 5);

  // One centroid per blob, each close to its sample mean.
  for (int blob = 0; blob < 2; ++blob) {
    std::vector<double> mean(3, 0.0);
    for (std::int64_t i = blob * per; i < (blob + 1) * per; ++i)
      for (int j = 0; j < 3; ++j) mean[static_cast<std::size_t>(j)] +=
          pts.at(i, j) / static_cast<double>(per);
    double best = 1e9;
    for (std::int64_t c = 0; c < 2; ++c) {
      double d = 0.0;
      for (int j = 0; j < 3; ++j) {
        const double diff = res.centroids.at(c, j) -
                            mean[static_cast<std::size_t>(j)];
        d += diff * diff;
      }
      best = std::min(best, std::sqrt(d));
    }
    CHECK(best < 0.1);
  }

  // Reported distortion equals a from-scratch recount on the returned
  // assignment and centroids.
  double recount = 0.0;
  for (std::int64_t i = 0; i < 2 * per; ++i) {
    const std::int64_t c = res.assignment[static_cast<std::size_t>(i)];
    for (int j = 0; j < 3; ++j) {
      const double diff = pts.at(i, j) - res.centroids.at(c, j);
      recount += diff * diff;
    }
  }
  recount /= static_cast<double>(2 * per);
  CHECK(res.distortion == doctest::Approx(recount).epsilon(1e-12));

  std::int64_t total = 0;
  for (const auto s : res.sizes) total += s;
  CHECK(total == 2 * per);

  REQUIRE(res.trace.size() >= 2);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i] <= res.trace[i - 1] + 1e-15);
}

TEST_CASE("kmeans repeats bitwise under one seed") {
  Tensor pts = random_tensor({30, 4}, 23);
  auto a = kmeans(pts, 4, 99);
  auto b = kmeans(pts, 4, 99);
  CHECK(a.centroids.data() == b.centroids.data());
  CHECK(a.assignment == b.assignment);
  CHECK(a.distortion == b.distortion);
  CHECK(a.trace == b.trace);
}

TEST_CASE("kmeans tolerates duplicate points") {
  // Four coincident points and one outlier cannot fill three distinct
  // clusters; the sweep must still settle with every point on a centroid.
  Tensor pts = Tensor::from_data(
      {5, 2}, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 10.0});
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto res = kmeans(pts, 3, seed);
    CHECK(res.distortion == 0.0);
    std::int64_t total = 0;
    for (const auto s : res.sizes) total += s;
    CHECK(total == 5);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
      CHECK(res.trace[i] <= res.trace[i - 1] + 1e-15);
  }
}

TEST_CASE("kmeans validation") {
  Tensor pts = random_tensor({3, 2}, 1);
  CHECK_THROWS_AS(kmeans(pts, 4, 0), InputError);
  CHECK_THROWS_AS(kmeans(pts, 0, 0), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 2, 0, 0), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 2, 0, 10, -1.0), ConfigError);
  CHECK_THROWS_AS(kmeans(random_tensor({6}, 2), 2, 0), ShapeError);
}

TEST_CASE("slot rows sit inside their bursts") {
  TwoModeConfig cfg;
  MelConfig mel;
  mel.n_mels = 16;
  // With 3 s clips and two 0.64 s slots the gaps are 0.5733 s, so slot 0
  // spans samples [9173, 19413) and slot 1 spans [28587, 38827). Patch row
  // r spans samples [2560r, 2560r + 2800).
  CHECK(slot_patch_rows(cfg, 0, mel) ==
        std::vector<std::int64_t>{4, 5, 6});
  CHECK(slot_patch_rows(cfg, 1, mel) ==
        std::vector<std::int64_t>{12, 13, 14});
  CHECK_THROWS_AS(slot_patch_rows(cfg, 2, mel), UsageError);
  CHECK_THROWS_AS(slot_patch_rows(cfg, -1, mel), UsageError);

  // Overlap adds the boundary rows that touch the burst without lying
  // inside it: row 3 ends at 10480 > 9173 and row 7 starts at 17920 <
  // 19413, and rows 11 and 15 mirror that around slot 1.
  CHECK(slot_overlap_rows(cfg, 0, mel) ==
        std::vector<std::int64_t>{3, 4, 5, 6, 7});
  CHECK(slot_overlap_rows(cfg, 1, mel) ==
        std::vector<std::int64_t>{11, 12, 13, 14, 15});
  CHECK_THROWS_AS(slot_overlap_rows(cfg, 2, mel), UsageError);

  // Every contained row overlaps by definition.
  for (int slot = 0; slot < 2; ++slot) {
    const auto inner = slot_patch_rows(cfg, slot, mel);
    const auto outer = slot_overlap_rows(cfg, slot, mel);
    for (const auto r : inner)
      CHECK(std::find(outer.begin(), outer.end(), r) != outer.end());
  }
}

TEST_CASE("center of mass tracks the loud bins") {
  // All cells at -10 except mel bin 12, which is raised to 0 in every
  // frame: the shifted weights live only on bin 12.
  std::vector<double> flat(kPatchDim, -10.0);
  for (int f = 0; f < kPatch; ++f) flat[f * kPatch + 12] = 0.0;
  std::vector<double> uniform(kPatchDim, 3.25);
  std::vector<double> low(kPatchDim, -10.0);
  for (int f = 0; f < kPatch; ++f) low[f * kPatch + 3] = -1.0;
  std::vector<double> rows;
  rows.insert(rows.end(), flat.begin(), flat.end());
  rows.insert(rows.end(), uniform.begin(), uniform.end());
  rows.insert(rows.end(), low.begin(), low.end());
  Tensor patches = Tensor::from_data({3, kPatchDim}, std::move(rows));

  CHECK(energy_center_of_mass(patches, 0) == 12.0);
  CHECK(energy_center_of_mass(patches, 1) == 7.5);
  CHECK(energy_center_of_mass(patches, 2) == 3.0);
  CHECK(energy_center_of_mass(patches, 2) <
        energy_center_of_mass(patches, 0));

  CHECK_THROWS_AS(energy_center_of_mass(patches, 3), UsageError);
  CHECK_THROWS_AS(energy_center_of_mass(random_tensor({2, 8}, 3), 0),
                  ShapeError);
}

TEST_CASE("collected winner logs are deterministic and complete") {
  Trainer t(analysis_cfg());
  t.train_step();
  CollectOptions opt;
  opt.split = "train";
  opt.sample_limit = 10000;
  opt.seed = 5;

  WinnerLog log = collect_winners(t, opt);
  // 8 training clips, 6 patches each, round(0.7 * 6) = 4 masked apiece.
  REQUIRE(log.total() == 32);
  CHECK(log.hypotheses == 2);
  REQUIRE(log.patches.dim(0) == 32);
  CHECK(log.patches.dim(1) == kPatchDim);
  for (const auto& rec : log.records) {
    CHECK(rec.row >= 0);
    CHECK(rec.row < 6);
    CHECK(rec.col == 0);
    CHECK(rec.winner >= 0);
    CHECK(rec.winner < 2);
    CHECK(rec.dmin >= 0.0);
    CHECK(rec.dmin <= 4.0);
  }
  auto h = utilisation_histogram(log);
  CHECK(h[0] + h[1] == doctest::Approx(1.0).epsilon(1e-12));

  WinnerLog again = collect_winners(t, opt);
  check_logs_equal(log, again);

  CollectOptions capped = opt;
  capped.sample_limit = 5;
  CHECK(collect_winners(t, capped).total() == 5);
  CollectOptions bad = opt;
  bad.sample_limit = 0;
  CHECK_THROWS_AS(collect_winners(t, bad), ConfigError);
  CollectOptions lost = opt;
  lost.split = "nowhere";
  CHECK_THROWS_AS(collect_winners(t, lost), InputError);
}

TEST_CASE("forced masks pin the scored positions") {
  Trainer t(analysis_cfg());
  CollectOptions opt;
  opt.split = "train";
  opt.sample_limit = 10000;
  opt.forced_mask = {1, 3};

  WinnerLog log = collect_winners(t, opt);
  REQUIRE(log.total() == 16);  // 8 clips, 2 forced positions each
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    CHECK(log.records[i].row == (i % 2 == 0 ? 1 : 3));
    CHECK(log.records[i].col == 0);
  }

  // The stored patch rows are the raw features of the masked positions.
  // 1 s clips match the crop exactly, so the crop offset is always zero.
  const std::int64_t clip = log.records[0].clip;
  const std::int64_t frames = t.features().crop_frames(1.0);
  PatchBatch pb = patchify(t.features().slice(clip, 0, frames));
  for (int k = 0; k < kPatchDim; ++k) {
    CHECK(log.patches.at(0, k) == pb.patches.at(1, k));
    CHECK(log.patches.at(1, k) == pb.patches.at(3, k));
  }

  CollectOptions capped = opt;
  capped.sample_limit = 5;
  CHECK(collect_winners(t, capped).total() == 5);
}

TEST_CASE("forced-mask eval agrees with the collected distances") {
  Trainer t(analysis_cfg());
  t.train_step();
  const std::vector<std::int64_t> masked = {1, 3};

  ForcedMaskEval eval = forced_mask_eval(t, masked, "train");
  CollectOptions opt;
  opt.split = "train";
  opt.sample_limit = 10000;
  opt.forced_mask = masked;
  WinnerLog log = collect_winners(t, opt);

  REQUIRE(eval.positions == log.total());
  double mean = 0.0;
  for (const auto& rec : log.records) mean += rec.dmin;
  mean /= static_cast<double>(log.total());
  CHECK(eval.mean_min_distance == doctest::Approx(mean).epsilon(1e-12));

  REQUIRE(eval.target_latents.dim(0) == eval.positions);
  CHECK(eval.target_latents.dim(1) == t.config().embed_dim);
  for (std::int64_t i = 0; i < eval.positions; ++i) {
    double norm = 0.0;
    for (std::int64_t j = 0; j < eval.target_latents.dim(1); ++j)
      norm += eval.target_latents.at(i, j) * eval.target_latents.at(i, j);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  }

  ForcedMaskEval again = forced_mask_eval(t, masked, "train");
  CHECK(again.mean_min_distance == eval.mean_min_distance);
  CHECK(again.target_latents.data() == eval.target_latents.data());

  CHECK_THROWS_AS(forced_mask_eval(t, masked, "nowhere"), InputError);
}

TEST_CASE("prototype sets partition the winner patches") {
  std::vector<int> winners;
  for (int i = 0; i < 12; ++i) winners.push_back(0);
  for (int i = 0; i < 6; ++i) winners.push_back(1);
  winners.push_back(2);
  winners.push_back(2);
  WinnerLog log = hand_log(3, winners);

  PrototypeSet set = prototypes(log, 5, 42);
  CHECK(set.clusters_requested == 5);
  REQUIRE(set.per_hypothesis.size() == 3);

  CHECK(set.per_hypothesis[0].clustered);
  CHECK(set.per_hypothesis[0].patch_count == 12);
  CHECK(set.per_hypothesis[1].clustered);
  CHECK(set.per_hypothesis[1].patch_count == 6);
  CHECK_FALSE(set.per_hypothesis[2].clustered);
  CHECK(set.per_hypothesis[2].patch_count == 2);

  std::int64_t total = 0;
  for (const auto& hp : set.per_hypothesis) {
    total += hp.patch_count;
    if (!hp.clustered) continue;
    CHECK(hp.clusters.centroids.dim(0) == 5);
    CHECK(hp.clusters.centroids.dim(1) == kPatchDim);
    std::int64_t in_clusters = 0;
    for (const auto s : hp.clusters.sizes) in_clusters += s;
    CHECK(in_clusters == hp.patch_count);
  }
  CHECK(total == log.total());

  WinnerLog empty;
  empty.hypotheses = 2;
  CHECK_THROWS_AS(prototypes(empty, 5, 0), InputError);
  CHECK_THROWS_AS(prototypes(log, 0, 0), ConfigError);
  WinnerLog torn = hand_log(2, {0, 1, 1});
  torn.records.pop_back();
  CHECK_THROWS_AS(prototypes(torn, 2, 0), ShapeError);
}

TEST_CASE("prototype images land on disk with a faithful byte mapping") {
  WinnerLog log = hand_log(2, {0, 0, 0, 0, 1, 1});
  PrototypeSet set = prototypes(log, 2, 7);
  const std::string dir = "/tmp/mclp_analysis_proto";
  fs::remove_all(dir);
  write_prototype_images(dir, set);

  auto index = read_lines(dir + "/prototypes.csv");
  REQUIRE(index.size() == 5);  // header + 2 guesses x 2 clusters
  CHECK(index[0] == "hypothesis,cluster,size,value_min,value_max,file");

  auto fields = split_csv(index[1]);
  REQUIRE(fields.size() == 6);
  CHECK(fields[0] == "0");
  CHECK(fields[1] == "0");
  const double lo = std::stod(fields[3]);
  const double hi = std::stod(fields[4]);
  const std::string pgm = read_file(dir + "/" + fields[5]);
  const std::string header = "P5\n16 16\n255\n";
  REQUIRE(pgm.size() == header.size() + kPatchDim);
  CHECK(pgm.substr(0, header.size()) == header);

  const Tensor& c = set.per_hypothesis[0].clusters.centroids;
  for (int j = 0; j < kPatchDim; ++j) {
    const double unit = hi > lo ? (c.at(0, j) - lo) / (hi - lo) : 0.0;
    const auto want =
        static_cast<unsigned char>(std::lround(unit * 255.0));
    CHECK(static_cast<unsigned char>(pgm[header.size() +
                                         static_cast<std::size_t>(j)]) ==
          want);
  }

  auto values = read_lines(dir + "/prototype_values.csv");
  REQUIRE(values.size() == 5);
  auto row = split_csv(values[1]);
  REQUIRE(row.size() == 2 + kPatchDim);
  for (int j = 0; j < kPatchDim; ++j)
    CHECK(std::stod(row[static_cast<std::size_t>(2 + j)]) == c.at(0, j));

  fs::remove_all(dir);
}
