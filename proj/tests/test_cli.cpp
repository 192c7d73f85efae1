// Command-line behaviour: exit-code contract, config overrides, and the
// files each subcommand leaves behind.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mclp/cli.hpp"
#include "mclp/data.hpp"
#include "mclp/run_config.hpp"
#include "mclp/tensor_io.hpp"
#include "mclp/verify.hpp"

using namespace mclp;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"mclp"};
  storage.insert(storage.end(), args);
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// One tiny pretraining run: 1 s clips give a 6x1 patch grid.
int tiny_pretrain(const std::string& out_dir,
                  std::initializer_list<std::string> extra = {}) {
  std::vector<std::string> args{"pretrain",
                                "--quiet",
                                "--set",
                                "model.embed_dim=16",
                                "--set",
                                "model.encoder_blocks=1",
                                "--set",
                                "model.predictor_blocks=1",
                                "--set",
                                "model.heads=2",
                                "--set",
                                "model.hypotheses=2",
                                "--set",
                                "model.classes=8",
                                "--set",
                                "model.max_patches=16",
                                "--set",
                                "schedule.steps=3",
                                "--set",
                                "schedule.warmup=1",
                                "--set",
                                "data.clips_per_class=2",
                                "--set",
                                "data.test_per_class=1",
                                "--set",
                                "data.crop_seconds=1.0",
                                "--set",
                                "data.batch=2",
                                "--set",
                                "run.log_every=1000",
                                "--set",
                                "run.out_dir=" + out_dir};
  args.insert(args.end(), extra);
  std::vector<std::string> storage{"mclp"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string fresh_dir(const std::string& name) {
  std::string dir = "/tmp/mclp_cli_test_" + name;
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
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

}  // namespace

TEST_CASE("gradient check command covers every strategy") {
  CHECK(cli({"grad-check", "--seeds", "1"}) == 0);
  CHECK(cli({"grad-check", "--strategy", "mean", "--seeds", "1"}) == 0);
  CHECK(cli({"grad-check", "--strategy", "greedy", "--seeds", "1"}) == 0);
  CHECK(cli({"grad-check", "--seeds", "1", "--inject-fault"}) == 2);
  CHECK(cli({"grad-check", "--strategy", "sideways"}) == 1);
  CHECK(cli({"grad-check", "--seeds", "0"}) == 1);
}

TEST_CASE("injected faults are actually detected") {
  MicroCheckOptions opt;
  opt.seed = 1;
  opt.fault_scale = 2.0;
  opt.max_entries_per_tensor = 4;
  CHECK_FALSE(micro_gradient_check(opt).pass);
  opt.fault_scale = 1.0;
  CHECK(micro_gradient_check(opt).pass);
}

TEST_CASE("pretrain writes a run directory the other commands can read") {
  const std::string dir = fresh_dir("pretrain");
  REQUIRE(tiny_pretrain(dir) == 0);
  CHECK(fs::exists(dir + "/metrics.csv"));
  CHECK(fs::exists(dir + "/diagnostics.csv"));
  CHECK(fs::exists(dir + "/final.mclt"));

  // The echoed config reloads to the run's exact settings.
  RunConfig cfg = RunConfig::from_file(dir + "/resolved.toml");
  CHECK(cfg.embed_dim == 16);
  CHECK(cfg.steps == 3);
  CHECK(cfg.out_dir == dir);

  CHECK(read_lines(dir + "/metrics.csv").size() == 4);

  // The checkpoint inventory holds model, momentum copy, optimizer moments,
  // run state, and the config bytes.
  const NamedTensors records = read_tensor_file(dir + "/final.mclt");
  std::vector<std::string> names;
  for (const auto& [name, t] : records) names.push_back(name);
  const auto has = [&](const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
  };
  CHECK(has("param.enc.embed.w"));
  CHECK(has("teacher.enc.embed.w"));
  CHECK(has("teacher.cls.w"));
  CHECK(has("center"));
  CHECK(has("opt.m.enc.embed.w"));
  CHECK(has("opt.v.cls.w"));
  CHECK(has("state"));
  CHECK(has("config"));

  CHECK(cli({"inspect-ckpt", dir + "/final.mclt"}) == 0);
  fs::remove_all(dir);
}

TEST_CASE("probe command writes the results table") {
  const std::string dir = fresh_dir("probe");
  REQUIRE(tiny_pretrain(dir) == 0);
  REQUIRE(cli({"probe", "--checkpoint", dir + "/final.mclt", "--seeds", "2",
               "--out", dir + "/probe", "--quiet"}) == 0);

  auto lines = read_lines(dir + "/probe/probe_results.csv");
  REQUIRE(lines.size() == 4);  // header, two seeds, mean
  CHECK(lines[0] == "task,metric,value,epoch");
  auto first = split_csv(lines[1]);
  REQUIRE(first.size() == 4);
  CHECK(first[0] == "probe_seed0");
  CHECK(first[1] == "accuracy");
  const double v = std::stod(first[2]);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  auto mean = split_csv(lines[3]);
  CHECK(mean[0] == "probe_mean");
  CHECK(mean[3] == "-1");

  // A fresh model of the same shape probes too, without a checkpoint.
  REQUIRE(cli({"probe", "--random-init", "--config", dir + "/resolved.toml",
               "--seeds", "1", "--out", dir + "/probe_fresh",
               "--quiet"}) == 0);
  CHECK(fs::exists(dir + "/probe_fresh/probe_results.csv"));

  CHECK(cli({"probe", "--checkpoint", dir + "/final.mclt", "--random-init"}) ==
        1);
  CHECK(cli({"probe"}) == 1);
  CHECK(cli({"probe", "--checkpoint", dir + "/final.mclt", "--seeds", "0"}) ==
        1);
  fs::remove_all(dir);
}

TEST_CASE("analyze command writes winners, histogram, and prototypes") {
  const std::string dir = fresh_dir("analyze");
  REQUIRE(tiny_pretrain(dir) == 0);
  REQUIRE(cli({"analyze", "--checkpoint", dir + "/final.mclt", "--split",
               "train", "--clusters", "2", "--seed", "3", "--out",
               dir + "/analysis", "--quiet"}) == 0);

  // 8 training clips at 6 patches, 4 masked each.
  CHECK(read_lines(dir + "/analysis/winners.csv").size() == 33);
  auto hist = read_lines(dir + "/analysis/histogram.csv");
  REQUIRE(hist.size() == 3);
  CHECK(hist[0] == "hypothesis,count,fraction");
  double total_fraction = 0.0;
  std::int64_t total_count = 0;
  for (int j = 1; j <= 2; ++j) {
    auto f = split_csv(hist[static_cast<std::size_t>(j)]);
    REQUIRE(f.size() == 3);
    total_count += std::stoll(f[1]);
    total_fraction += std::stod(f[2]);
  }
  CHECK(total_count == 32);
  CHECK(total_fraction == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fs::exists(dir + "/analysis/prototypes.csv"));

  // Forced masking pins the scored rows; 8 clips x 2 rows.
  REQUIRE(cli({"analyze", "--checkpoint", dir + "/final.mclt", "--split",
               "train", "--mask-rows", "1,3", "--clusters", "2", "--out",
               dir + "/forced", "--quiet"}) == 0);
  CHECK(read_lines(dir + "/forced/winners.csv").size() == 17);

  CHECK(cli({"analyze", "--checkpoint", dir + "/final.mclt", "--mask-rows",
             "1,x", "--out", dir + "/bad"}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("synth-data renders clips a manifest store can reopen") {
  const std::string dir = fresh_dir("synth");
  REQUIRE(cli({"synth-data", "--out", dir, "--source", "events", "--set",
               "data.clips_per_class=1", "--set", "data.test_per_class=1",
               "--set", "data.crop_seconds=1.0"}) == 0);
  CHECK(read_lines(dir + "/manifest.csv").size() == 9);  // header + 8 clips

  ManifestStore store(dir + "/manifest.csv");
  CHECK(store.size() == 8);
  CHECK(store.indices_of_split("train").size() == 4);
  CHECK(store.indices_of_split("test").size() == 4);
  const AudioClip clip = store.load(0);
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.samples.size() == 16000);

  CHECK(cli({"synth-data", "--out", dir, "--source", "manifest"}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("exit codes separate bad input from runtime failures") {
  CHECK(cli({"pretrain", "--set", "loss.alpha=2.0"}) == 1);
  CHECK(cli({"pretrain", "--set", "malformed"}) == 1);
  CHECK(cli({"pretrain", "--set", "no_such.key=1"}) == 1);
  CHECK(cli({"pretrain", "--resume", "/tmp/mclp_cli_missing.mclt"}) == 2);
  CHECK(cli({"pretrain", "--resume", "x", "--set", "run.seed=2"}) == 1);
  CHECK(cli({"inspect-ckpt", "/tmp/mclp_cli_missing.mclt"}) == 2);
  CHECK(cli({"analyze", "--checkpoint", "/tmp/mclp_cli_missing.mclt"}) == 2);
  CHECK(cli({"no-such-command"}) == 1);
  CHECK(cli({}) == 1);
  CHECK(cli({"--help"}) == 0);
}
