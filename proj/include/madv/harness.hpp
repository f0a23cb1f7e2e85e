#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "madv/attacks.hpp"
#include "madv/dataset.hpp"
#include "madv/forensics.hpp"
#include "madv/gan.hpp"
#include "madv/metrics.hpp"
#include "madv/synthesis.hpp"

namespace madv::harness {

struct CorpusConfig {
  int train_per_class = 2000;
  int val_per_class = 500;
  int test_per_class = 500;
  int attack_set = 500;
  int resolution = 32;
};

struct AttackSection {
  double eps_latent = 0.004;
  double eps_noise = 0.05;
  int max_iters = 10;
  int transfer_iters = 3;  // black-box sets use this fixed step count
  int ablation_iters = 3;  // per-level ablation likewise
  double pgd_alpha = 0.01;
  int pgd_iters = 40;
  double pgd_eps_max = 0.3;
  double fgsm_eps_max = 0.3;
};

struct QualitySection {
  int min_matched = 50;
  int grid_samples = 6;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 7;
  std::string out_dir = "run";
  int workers = 0;  // 0 = hardware concurrency
  CorpusConfig corpus;
  synthesis::GeneratorConfig generator;
  forensics::TrainConfig detector;
  gan::GanTrainConfig gan_train;
  metrics::FeatureNetTrainConfig feature_net;
  AttackSection attack;
  QualitySection quality;

  std::string generator_ckpt = "checkpoints/generator.bin";
  std::string detector_a_ckpt = "checkpoints/detector_A.bin";
  std::string detector_b_ckpt = "checkpoints/detector_B.bin";
  std::string feature_ckpt = "checkpoints/feature_net.bin";

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;

  /// Hash of the effective (defaults-applied) configuration.
  std::string config_hash() const;

  /// Absolute path of an artifact relative to out_dir.
  std::string path(const std::string& rel) const;

  void validate() const;
};

/// Append-only record of stages, outputs, and checksums under out_dir.
class Manifest {
 public:
  explicit Manifest(const ExperimentConfig& cfg);

  void record(const std::string& stage, const std::vector<std::string>& rel_outputs,
              double wall_seconds, nlohmann::json extra = nlohmann::json::object());

  /// Recomputes every recorded checksum; returns the mismatched paths.
  static std::vector<std::string> verify(const std::string& out_dir);

  static std::string file_name() { return "manifest.json"; }

 private:
  std::string path_;
  std::string out_dir_;
  std::string config_hash_;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string format_fixed(double v, int digits = 6);

/// Runs fn(i) for i in [0,n) on `workers` threads. Work is independent per
/// index; callers own any result ordering.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace madv::harness
