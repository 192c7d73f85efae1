// Trainer behaviour at toy scale: bitwise determinism across instances,
// exact continuation from a checkpoint, teacher isolation, and the run-log
// contract.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mclp/error.hpp"
#include "mclp/schedule.hpp"
#include "mclp/trainer.hpp"

using namespace mclp;
namespace fs = std::filesystem;

namespace {

// Small enough to train in milliseconds: 1 s synthetic clips give a 6x1
// patch grid, so each crop splits into 4 masked and 2 visible patches.
RunConfig tiny_cfg(const std::string& out_dir) {
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
  cfg.out_dir = out_dir;
  cfg.log_every = 1000;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  std::string dir = "/tmp/mclp_trainer_test_" + name;
  fs::remove_all(dir);
  return dir;
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

void check_stats_equal(const StepStats& a, const StepStats& b) {
  CHECK(a.step == b.step);
  CHECK(a.pred_loss == b.pred_loss);
  CHECK(a.cls_loss == b.cls_loss);
  CHECK(a.total_loss == b.total_loss);
  CHECK(a.tau == b.tau);
  CHECK(a.lambda == b.lambda);
  CHECK(a.lr == b.lr);
  CHECK(a.winner_counts == b.winner_counts);
  CHECK(a.mean_row_entropy == b.mean_row_entropy);
  CHECK(a.batch_entropy == b.batch_entropy);
}

}  // namespace

TEST_CASE("two trainers with one config walk the same bitwise path") {
  auto cfg = tiny_cfg(fresh_dir("det"));
  Trainer a(cfg);
  Trainer b(cfg);

  for (int i = 0; i < 3; ++i) {
    StepStats sa = a.train_step();
    StepStats sb = b.train_step();
    check_stats_equal(sa, sb);
  }

  const ParamMap& pa = a.parameters();
  const ParamMap& pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.items.size(); ++i) {
    CAPTURE(pa.items[i].first);
    CHECK(pa.items[i].first == pb.items[i].first);
    CHECK(pa.items[i].second.data() == pb.items[i].second.data());
  }
}

TEST_CASE("step stats report the schedules and a full winner count") {
  auto cfg = tiny_cfg(fresh_dir("stats"));
  Trainer t(cfg);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    StepStats s = t.train_step();
    CAPTURE(step);
    CHECK(s.step == step);
    CHECK(s.lr == lr_at(cfg.lr, cfg.warmup, step, cfg.steps));
    CHECK(s.lambda ==
          momentum_at(cfg.momentum_start, cfg.momentum_final, step,
                      cfg.steps));
    CHECK(s.pred_loss >= 0.0);
    CHECK(s.total_loss ==
          doctest::Approx(0.5 * s.pred_loss + 0.5 * s.cls_loss)
              .epsilon(1e-12));

    // Every masked patch of every clip in the batch names one winner.
    std::int64_t total = 0;
    for (const auto c : s.winner_counts) total += c;
    CHECK(total == 2 * 4);

    CHECK(s.mean_row_entropy >= 0.0);
    CHECK(s.mean_row_entropy <= std::log(8.0) + 1e-9);
    CHECK(s.batch_entropy >= 0.0);
    CHECK(s.batch_entropy <= std::log(8.0) + 1e-9);
  }

  // The annealing moved tau off its start by the expected factor.
  CHECK(t.tau() ==
        doctest::Approx(std::pow(cfg.tau_decay, 4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(t.train_step(), UsageError);
}

TEST_CASE("teacher stays bitwise frozen when all momenta are one") {
  auto cfg = tiny_cfg(fresh_dir("frozen"));
  cfg.momentum_start = 1.0;
  cfg.momentum_final = 1.0;
  cfg.head_momentum = 1.0;
  Trainer t(cfg);

  ParamMap teacher_before;
  t.teacher().register_into(teacher_before, "enc");
  std::vector<std::vector<double>> snapshot;
  for (const auto& [name, p] : teacher_before.items)
    snapshot.push_back(p.data());
  std::vector<double> head_w = t.heads().teacher_w.data();
  std::vector<double> student_w0 = t.student().embed_w.data();

  t.train_step();
  t.train_step();

  ParamMap teacher_after;
  t.teacher().register_into(teacher_after, "enc");
  for (std::size_t i = 0; i < teacher_after.items.size(); ++i) {
    CAPTURE(teacher_after.items[i].first);
    CHECK(teacher_after.items[i].second.data() == snapshot[i]);
    CHECK_FALSE(teacher_after.items[i].second.requires_grad());
    CHECK_FALSE(teacher_after.items[i].second.has_grad());
  }
  CHECK(t.heads().teacher_w.data() == head_w);
  // The student must have moved while the teacher stood still.
  CHECK(t.student().embed_w.data() != student_w0);
}

TEST_CASE("run writes the log files with the promised schema") {
  const std::string dir = fresh_dir("run");
  auto cfg = tiny_cfg(dir);
  cfg.checkpoint_every = 2;
  Trainer(cfg).run(true);

  CHECK(fs::exists(dir + "/resolved.toml"));
  CHECK(fs::exists(dir + "/ckpt_2.mclt"));
  CHECK(fs::exists(dir + "/final.mclt"));

  auto metrics = read_lines(dir + "/metrics.csv");
  REQUIRE(metrics.size() == 5);
  CHECK(metrics[0] ==
        "step,pred_loss,cls_loss,total,tau_mcl,lambda,winner_0,winner_1");
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    auto fields = split_csv(metrics[i]);
    REQUIRE(fields.size() == 8);
    CHECK(fields[0] == std::to_string(i - 1));
    CHECK(std::stoll(fields[6]) + std::stoll(fields[7]) == 8);
  }

  auto diagnostics = read_lines(dir + "/diagnostics.csv");
  REQUIRE(diagnostics.size() == 5);
  CHECK(diagnostics[0] == "step,mean_row_entropy,batch_entropy");
  for (std::size_t i = 1; i < diagnostics.size(); ++i) {
    auto fields = split_csv(diagnostics[i]);
    REQUIRE(fields.size() == 3);
    double h = std::stod(fields[1]);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(8.0) + 1e-9);
  }

  // The echoed config file parses back to the identical resolved form.
  RunConfig echoed = RunConfig::from_file(dir + "/resolved.toml");
  CHECK(echoed.resolved_text() == cfg.resolved_text());

  // A finished run cannot be stepped further.
  Trainer done = Trainer::resume(dir + "/final.mclt");
  CHECK(done.step() == 4);
  CHECK_THROWS_AS(done.train_step(), UsageError);
}

TEST_CASE("resume continues the exact sample path of the original run") {
  const std::string dir = fresh_dir("resume");
  auto cfg = tiny_cfg(dir);
  fs::create_directories(dir);

  Trainer a(cfg);
  std::vector<StepStats> a_stats;
  a_stats.push_back(a.train_step());
  a_stats.push_back(a.train_step());
  a.save_checkpoint(dir + "/mid.mclt");
  a_stats.push_back(a.train_step());
  a_stats.push_back(a.train_step());
  a.save_checkpoint(dir + "/full_a.mclt");

  Trainer b = Trainer::resume(dir + "/mid.mclt");
  CHECK(b.step() == 2);
  CHECK(b.tau() == a_stats[2].tau);
  CHECK(b.config().resolved_text() == cfg.resolved_text());

  check_stats_equal(b.train_step(), a_stats[2]);
  check_stats_equal(b.train_step(), a_stats[3]);
  b.save_checkpoint(dir + "/full_b.mclt");

  // Same state, same serialization: the files must match byte for byte.
  CHECK(read_file(dir + "/full_a.mclt") == read_file(dir + "/full_b.mclt"));
}

TEST_CASE("trainer rejects impossible configurations and bad checkpoints") {
  auto cfg = tiny_cfg(fresh_dir("reject"));
  cfg.batch = 100;  // only 8 training clips exist
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

  cfg = tiny_cfg(fresh_dir("reject2"));
  cfg.strategy = "bogus";
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

  CHECK_THROWS_AS(Trainer::resume("/tmp/mclp_no_such_checkpoint.mclt"),
                  IoError);
  const std::string junk = "/tmp/mclp_trainer_junk.mclt";
  {
    std::ofstream out(junk, std::ios::binary | std::ios::trunc);
    out << "not a tensor file";
  }
  CHECK_THROWS_AS(Trainer::resume(junk), IoError);
  std::remove(junk.c_str());
}
