#include "mclp/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mclp/analysis.hpp"
#include "mclp/error.hpp"
#include "mclp/probe.hpp"
#include "mclp/tensor_io.hpp"
#include "mclp/trainer.hpp"
#include "mclp/verify.hpp"

namespace fs = std::filesystem;

namespace mclp {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::pair<std::string, std::string>> parse_sets(
    const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--set expects section.key=value, got \"" + s + "\"");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& sets) {
  const auto overrides = parse_sets(sets);
  if (path.empty()) {
    TomlDoc doc = TomlDoc::parse("", "<defaults>");
    for (const auto& [key, value] : overrides) doc.set_override(key, value);
    return RunConfig::from_doc(doc);
  }
  return RunConfig::from_file(path, overrides);
}

std::vector<std::int64_t> parse_index_list(const std::string& text) {
  std::vector<std::int64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(pos, comma - pos);
    std::size_t used = 0;
    try {
      out.push_back(std::stoll(tok, &used));
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != tok.size())
      throw UsageError("--mask-rows expects comma-joined integers, got \"" +
                       tok + "\"");
    pos = comma + 1;
  }
  return out;
}

int cmd_pretrain(const std::string& config_path,
                 const std::vector<std::string>& sets,
                 const std::string& resume_path, bool quiet) {
  if (!resume_path.empty()) {
    if (!config_path.empty() || !sets.empty())
      throw UsageError("pretrain: --resume replaces --config and --set");
    Trainer t = Trainer::resume(resume_path);
    t.run(quiet);
    if (!quiet)
      std::printf("resumed to step %lld; outputs in %s\n",
                  static_cast<long long>(t.step()),
                  t.config().out_dir.c_str());
    return 0;
  }
  Trainer t(load_config(config_path, sets));
  t.run(quiet);
  if (!quiet)
    std::printf("finished %lld steps; outputs in %s\n",
                static_cast<long long>(t.step()), t.config().out_dir.c_str());
  return 0;
}

int cmd_probe(const std::string& checkpoint, const std::string& config_path,
              const std::vector<std::string>& sets, bool random_init,
              int seeds, std::string out_dir, bool quiet) {
  if (seeds < 1) throw UsageError("probe: --seeds must be positive");
  if (!checkpoint.empty() && random_init)
    throw UsageError("probe: --checkpoint conflicts with --random-init");
  if (checkpoint.empty() && !random_init)
    throw UsageError("probe: pass --checkpoint, or --random-init for an "
                     "untrained baseline");

  std::unique_ptr<Trainer> t;
  if (!checkpoint.empty())
    t = std::make_unique<Trainer>(Trainer::resume(checkpoint));
  else
    t = std::make_unique<Trainer>(load_config(config_path, sets));
  const RunConfig& cfg = t->config();

  ExtractConfig xc;
  xc.mel = cfg.mel();
  xc.crop_seconds = cfg.crop_seconds;
  EmbeddingTable table = extract_embeddings(t->student(), t->store(), xc);
  for (const auto& w : table.warnings)
    std::fprintf(stderr, "probe: skipped %s\n", w.c_str());
  carve_validation(table);

  if (out_dir.empty()) out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir + "/probe_results.csv",
                    std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + out_dir + "/probe_results.csv");
  csv << "task,metric,value,epoch\n";

  std::string metric;
  double mean = 0.0;
  for (int s = 0; s < seeds; ++s) {
    ProbeConfig pc;
    pc.seed = static_cast<std::uint64_t>(s);
    ProbeModel model = train_probe(table, pc);
    metric = model.result.metric;
    mean += model.result.value / static_cast<double>(seeds);
    csv << "probe_seed" << s << "," << metric << ","
        << fmt17(model.result.value) << "," << model.result.best_epoch
        << "\n";
    if (!quiet)
      std::printf("probe seed %d: %s %.4f (epoch %d)\n", s, metric.c_str(),
                  model.result.value, model.result.best_epoch);
  }
  csv << "probe_mean," << metric << "," << fmt17(mean) << ",-1\n";
  if (!csv) throw IoError("failed writing " + out_dir + "/probe_results.csv");
  std::printf("probe %s over %d seeds: %.4f\n", metric.c_str(), seeds, mean);
  return 0;
}

int cmd_analyze(const std::string& checkpoint, const std::string& split,
                std::int64_t limit, std::uint64_t seed,
                const std::string& mask_rows, int clusters,
                std::string out_dir, bool quiet) {
  Trainer t = Trainer::resume(checkpoint);
  CollectOptions co;
  co.split = split;
  co.sample_limit = limit;
  co.seed = seed;
  if (!mask_rows.empty()) co.forced_mask = parse_index_list(mask_rows);

  WinnerLog log = collect_winners(t, co);
  if (out_dir.empty()) out_dir = t.config().out_dir + "/analysis";
  fs::create_directories(out_dir);
  write_winner_csv(out_dir + "/winners.csv", log);

  std::vector<std::int64_t> counts(
      static_cast<std::size_t>(log.hypotheses), 0);
  for (const auto& rec : log.records)
    counts[static_cast<std::size_t>(rec.winner)] += 1;
  const auto fractions = utilisation_histogram(log);
  std::ofstream hist(out_dir + "/histogram.csv",
                     std::ios::binary | std::ios::trunc);
  if (!hist) throw IoError("cannot write " + out_dir + "/histogram.csv");
  hist << "hypothesis,count,fraction\n";
  for (int j = 0; j < log.hypotheses; ++j)
    hist << j << "," << counts[static_cast<std::size_t>(j)] << ","
         << fmt17(fractions[static_cast<std::size_t>(j)]) << "\n";
  if (!hist) throw IoError("failed writing " + out_dir + "/histogram.csv");

  PrototypeSet set = prototypes(log, clusters, seed);
  write_prototype_images(out_dir, set);

  if (!quiet) {
    for (const auto& hp : set.per_hypothesis)
      std::printf("guess %d: %lld wins (%.3f)%s\n", hp.hypothesis,
                  static_cast<long long>(hp.patch_count),
                  fractions[static_cast<std::size_t>(hp.hypothesis)],
                  hp.clustered ? "" : "  [too few patches to cluster]");
    std::printf("analysis of %lld positions written to %s\n",
                static_cast<long long>(log.total()), out_dir.c_str());
  }
  return 0;
}

int cmd_synth_data(std::string out_dir, const std::string& config_path,
                   const std::vector<std::string>& sets,
                   const std::string& source) {
  std::vector<std::string> all_sets = sets;
  if (!source.empty()) all_sets.push_back("data.source=" + source);
  RunConfig cfg = load_config(config_path, all_sets);
  const auto recipes = dataset_recipes(cfg);
  write_wav_dataset(out_dir, recipes);
  std::printf("wrote %zu clips and manifest.csv to %s\n", recipes.size(),
              out_dir.c_str());
  return 0;
}

int cmd_grad_check(const std::string& strategy, int seeds, double tolerance,
                   bool inject_fault) {
  if (seeds < 1) throw UsageError("grad-check: --seeds must be positive");
  MicroCheckOptions opt;
  opt.strategy = parse_strategy(strategy);
  opt.tolerance = tolerance;
  if (inject_fault) opt.fault_scale = 2.0;

  bool all_pass = true;
  for (int s = 1; s <= seeds; ++s) {
    opt.seed = static_cast<std::uint64_t>(s);
    const GradCheckReport rep = micro_gradient_check(opt);
    std::printf(
        "seed %d: %s  (%d entries, worst %s[%lld]: rel err %.3g, "
        "analytic %.6g vs numeric %.6g)\n",
        s, rep.pass ? "ok" : "MISMATCH", rep.entries_checked,
        rep.worst_param.c_str(), static_cast<long long>(rep.worst_entry),
        rep.max_rel_err, rep.worst_analytic, rep.worst_numeric);
    all_pass = all_pass && rep.pass;
  }
  if (inject_fault) {
    std::printf(all_pass ? "fault went undetected\n" : "fault detected\n");
    return 2;
  }
  std::printf(all_pass ? "gradients verified (%s strategy, %d seeds)\n"
                       : "gradient check FAILED (%s strategy, %d seeds)\n",
              strategy.c_str(), seeds);
  return all_pass ? 0 : 2;
}

int cmd_inspect(const std::string& path) {
  const NamedTensors records = read_tensor_file(path);
  for (const auto& [name, t] : records)
    std::printf("%-32s %s\n", name.c_str(), shape_str(t.shape()).c_str());
  std::printf("%zu records\n", records.size());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"masked-latent pretraining workbench"};
  app.require_subcommand(1);

  std::string config_path, resume_path, checkpoint, out_dir, ckpt_path;
  std::string split = "test";
  std::string strategy = "annealed";
  std::string source, mask_rows;
  std::vector<std::string> sets;
  bool quiet = false, random_init = false, inject_fault = false;
  int seeds = 5, check_seeds = 3, clusters = 5;
  std::int64_t limit = 20000;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;

  auto* pre =
      app.add_subcommand("pretrain", "Train a model and write run logs");
  pre->add_option("--config", config_path, "TOML run configuration");
  pre->add_option("--set", sets, "Override one key, section.key=value");
  pre->add_option("--resume", resume_path, "Continue from a checkpoint");
  pre->add_flag("--quiet", quiet, "Suppress progress lines");

  auto* prb =
      app.add_subcommand("probe", "Linear probe over frozen embeddings");
  prb->add_option("--checkpoint", checkpoint, "Trained checkpoint to probe");
  prb->add_option("--config", config_path,
                  "Configuration for an untrained baseline");
  prb->add_option("--set", sets, "Override one key, section.key=value");
  prb->add_flag("--random-init", random_init,
                "Probe a freshly initialized model instead of a checkpoint");
  prb->add_option("--seeds", seeds, "Probe repetitions");
  prb->add_option("--out", out_dir, "Output directory (default: run dir)");
  prb->add_flag("--quiet", quiet, "Only print the final mean");

  auto* ana =
      app.add_subcommand("analyze", "Winner statistics and patch prototypes");
  ana->add_option("--checkpoint", checkpoint, "Checkpoint to analyze")
      ->required();
  ana->add_option("--split", split, "Dataset split to score");
  ana->add_option("--limit", limit, "Masked positions to collect");
  ana->add_option("--seed", seed, "Crop and mask randomness");
  ana->add_option("--mask-rows", mask_rows,
                  "Force-mask these patch rows, comma-joined");
  ana->add_option("--clusters", clusters, "Prototypes per guess");
  ana->add_option("--out", out_dir,
                  "Output directory (default: <run dir>/analysis)");
  ana->add_flag("--quiet", quiet, "Suppress summary lines");

  auto* syn = app.add_subcommand("synth-data",
                                 "Render a synthetic dataset to WAV files");
  syn->add_option("--out", out_dir, "Dataset directory")->required();
  syn->add_option("--config", config_path, "TOML run configuration");
  syn->add_option("--set", sets, "Override one key, section.key=value");
  syn->add_option("--source", source, "events or two_mode");

  auto* chk = app.add_subcommand(
      "grad-check", "Finite-difference check of the training objective");
  chk->add_option("--strategy", strategy, "annealed, mean, or greedy");
  chk->add_option("--seeds", check_seeds, "Model initializations to check");
  chk->add_option("--tolerance", tolerance, "Max relative gradient error");
  chk->add_flag("--inject-fault", inject_fault,
                "Corrupt one gradient on purpose; the check must catch it");

  auto* ins = app.add_subcommand("inspect-ckpt", "List checkpoint records");
  ins->add_option("path", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(pre))
      return cmd_pretrain(config_path, sets, resume_path, quiet);
    if (app.got_subcommand(prb))
      return cmd_probe(checkpoint, config_path, sets, random_init, seeds,
                       out_dir, quiet);
    if (app.got_subcommand(ana))
      return cmd_analyze(checkpoint, split, limit, seed, mask_rows, clusters,
                         out_dir, quiet);
    if (app.got_subcommand(syn))
      return cmd_synth_data(out_dir, config_path, sets, source);
    if (app.got_subcommand(chk))
      return cmd_grad_check(strategy, check_seeds, tolerance, inject_fault);
    if (app.got_subcommand(ins)) return cmd_inspect(ckpt_path);
    std::fprintf(stderr, "error: no subcommand selected\n");
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace mclp
