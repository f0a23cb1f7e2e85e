// Command-line front end: data generation, training, attacks, and the
// table1..table5 experiment recipes, all driven by one JSON config.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "madv/checkpoint.hpp"
#include "madv/experiments.hpp"
#include "madv/harness.hpp"

namespace {

// Exit codes: 0 ok, 2 usage, 3 malformed config, 4 missing file/checkpoint,
// 5 invalid data or configuration semantics, 1 anything else.
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitMissing = 4;
constexpr int kExitData = 5;

struct GlobalArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int workers = -1;
};

madv::harness::ExperimentConfig load_config(const GlobalArgs& g) {
  auto cfg = madv::harness::ExperimentConfig::from_file(g.config_path);
  if (!g.out_override.empty()) cfg.out_dir = g.out_override;
  if (g.seed_set) {
    cfg.master_seed = g.seed_override;
    cfg.detector.seed = g.seed_override;
    cfg.gan_train.seed = g.seed_override;
    cfg.feature_net.seed = g.seed_override;
  }
  if (g.workers >= 0) cfg.workers = g.workers;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manifold-adv: adversarial fake-image toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON experiment config")->required();
  app.add_option("--out", g.out_override, "Override output directory");
  auto* seed_opt = app.add_option("--seed", g.seed_override, "Override master seed");
  app.add_option("--workers", g.workers, "Worker threads (0 = hardware)");

  auto* gen_data = app.add_subcommand("gen-data", "Materialize corpus previews and stats");
  auto* train_gan = app.add_subcommand("train-gan", "Train the toy generator");
  auto* train_det = app.add_subcommand("train-detector", "Train one forensic detector");
  std::string arch = "A";
  train_det->add_option("--arch", arch, "Detector architecture: A or B")
      ->check(CLI::IsMember({"A", "B"}));
  auto* attack_cmd = app.add_subcommand("attack", "Run one attack method over the attack set");
  madv::harness::AttackCommandOptions attack_opts;
  attack_cmd->add_option("--method", attack_opts.method,
                         "latent | noise | latent+noise | noise-level-<k> | fgsm | pgd-linf | pgd-l2")
      ->required();
  attack_cmd->add_option("--target", attack_opts.target,
                         "A | B | ensemble-loss | ensemble-logits | ensemble-alternating")
      ->required();
  attack_cmd->add_option("--samples", attack_opts.samples, "Limit the number of samples");
  attack_cmd->add_flag("--record-steps", attack_opts.record_steps,
                       "Write per-iteration PNG snapshots for a few samples");
  auto* table1 = app.add_subcommand("table1", "White-box accuracy table");
  auto* table2 = app.add_subcommand("table2", "Black-box transfer table");
  auto* table3 = app.add_subcommand("table3", "Ensemble attack table");
  auto* table4 = app.add_subcommand("table4", "Per-level noise ablation table");
  auto* table5 = app.add_subcommand("table5", "Quality metrics table and image grids");
  auto* report = app.add_subcommand("report", "Collate tables into report.md");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    auto cfg = load_config(g);
    madv::harness::Manifest manifest(cfg);

    if (gen_data->parsed()) {
      // Fake previews require a trained generator; real previews do not.
      std::optional<madv::synthesis::Generator> gen;
      try {
        gen = madv::io::load_generator(cfg.path(cfg.generator_ckpt));
      } catch (const madv::IoError&) {
        std::fprintf(stderr, "note: no generator checkpoint yet; writing real previews only\n");
      }
      madv::harness::run_gen_data(cfg, manifest, gen ? &*gen : nullptr);
    } else if (train_gan->parsed()) {
      madv::harness::run_train_gan(cfg, manifest);
    } else if (train_det->parsed()) {
      auto generator = madv::io::load_generator(cfg.path(cfg.generator_ckpt));
      auto a = arch == "A" ? madv::forensics::Arch::kSepConv : madv::forensics::Arch::kBottleneck;
      double test_acc = 0.0;
      madv::harness::run_train_detector(cfg, a, generator, manifest, &test_acc);
      std::printf("detector %s: held-out accuracy %.4f\n", arch.c_str(), test_acc);
    } else if (attack_cmd->parsed()) {
      madv::harness::run_attack_command(cfg, attack_opts, manifest);
    } else if (table1->parsed() || table2->parsed() || table3->parsed() || table4->parsed() ||
               table5->parsed()) {
      auto art = madv::harness::load_artifacts(cfg);
      madv::harness::AttackRunner runner(cfg, art);
      if (table1->parsed()) madv::harness::run_whitebox_table(cfg, art, runner, manifest);
      if (table2->parsed()) madv::harness::run_transfer_table(cfg, art, runner, manifest);
      if (table3->parsed()) madv::harness::run_ensemble_table(cfg, art, runner, manifest);
      if (table4->parsed()) madv::harness::run_level_ablation(cfg, art, runner, manifest);
      if (table5->parsed()) madv::harness::run_quality_report(cfg, art, runner, manifest);
    } else if (report->parsed()) {
      madv::harness::run_report(cfg, manifest);
    } else if (pipeline->parsed()) {
      auto summary = madv::harness::run_full_pipeline(cfg);
      std::printf("pipeline done in %.1fs; detector accuracies A=%.4f B=%.4f\n",
                  summary.total_seconds, summary.clean_test_accuracy_a,
                  summary.clean_test_accuracy_b);
    }
    return 0;
  } catch (const madv::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const madv::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissing;
  } catch (const madv::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
