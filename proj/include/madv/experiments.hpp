#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "madv/harness.hpp"

namespace madv::harness {

/// Checkpointed models plus the deterministic attack sample set.
struct Artifacts {
  synthesis::Generator generator;
  forensics::Detector det_a;
  forensics::Detector det_b;
  metrics::FeatureNet feature_net;
  std::vector<dataset::AttackSample> attack_set;
};

Artifacts load_artifacts(const ExperimentConfig& cfg);

struct Outcome {
  ImageTensor final_image;
  bool success = false;
  std::optional<int> success_step;
  std::vector<double> final_p;
  std::vector<std::vector<double>> p_steps;
  double linf = 0.0;
  double l2 = 0.0;
};
using OutcomeSet = std::vector<Outcome>;

/// Runs attack methods over the attack set, caching by method name so tables
/// sharing a configuration reuse one computation. Each computed set is also
/// persisted as attacks/<name>/results.jsonl under the run directory.
class AttackRunner {
 public:
  AttackRunner(const ExperimentConfig& cfg, const Artifacts& art);

  const OutcomeSet& manifold(char target, attacks::ManifoldStrategy strategy, int iters,
                             int noise_level = 0);
  const OutcomeSet& ensemble(attacks::EnsembleMode mode);
  const OutcomeSet& norm(char target, const std::string& method);

  /// Relative jsonl paths written since the last call.
  std::vector<std::string> take_new_outputs();

 private:
  const OutcomeSet& compute(const std::string& name,
                            const std::function<attacks::AttackResult(std::size_t)>& run,
                            const std::vector<char>& detector_ids);
  const ExperimentConfig& cfg_;
  const Artifacts& art_;
  std::map<std::string, OutcomeSet> cache_;
  std::vector<std::string> new_outputs_;
};

/// Fraction of outcomes the detector still classifies as fake (label 1).
double accuracy_as_fake(const forensics::Detector& det, const OutcomeSet& set);
double clean_accuracy_as_fake(const forensics::Detector& det,
                              const std::vector<dataset::AttackSample>& set);

// Pipeline stages. Each writes its outputs under cfg.out_dir and records a
// manifest entry.
void run_gen_data(const ExperimentConfig& cfg, Manifest& manifest,
                  const synthesis::Generator* generator);
synthesis::Generator run_train_gan(const ExperimentConfig& cfg, Manifest& manifest);
forensics::Detector run_train_detector(const ExperimentConfig& cfg, forensics::Arch arch,
                                       const synthesis::Generator& generator, Manifest& manifest,
                                       double* test_accuracy = nullptr);
metrics::FeatureNet run_train_feature_net(const ExperimentConfig& cfg,
                                          const synthesis::Generator& generator,
                                          Manifest& manifest);

void run_whitebox_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest);
void run_transfer_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest);
void run_ensemble_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest);
void run_level_ablation(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest);
void run_quality_report(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest);
void run_report(const ExperimentConfig& cfg, Manifest& manifest);

struct AttackCommandOptions {
  std::string method;  // latent | noise | latent+noise | noise-level-<k> | fgsm | pgd-linf | pgd-l2
  std::string target;  // A | B | ensemble-loss | ensemble-logits | ensemble-alternating
  int samples = 0;     // 0 = full attack set
  bool record_steps = false;
};

void run_attack_command(const ExperimentConfig& cfg, const AttackCommandOptions& opts,
                        Manifest& manifest);

struct PipelineSummary {
  double clean_test_accuracy_a = 0.0;
  double clean_test_accuracy_b = 0.0;
  double val_accuracy_a = 0.0;
  double val_accuracy_b = 0.0;
  std::map<std::string, double> stage_seconds;
  double total_seconds = 0.0;
  std::vector<std::string> table_paths;  // relative to out_dir
};

/// Full deterministic pipeline: corpora, GAN, detectors, feature net, all
/// five tables, report.
PipelineSummary run_full_pipeline(const ExperimentConfig& cfg);

}  // namespace madv::harness
