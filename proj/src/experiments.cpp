#include "madv/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "madv/checkpoint.hpp"
#include "madv/image_io.hpp"

namespace madv::harness {

using nlohmann::json;

namespace {

constexpr std::uint64_t kDetectorASeedTag = 0xDA;
constexpr std::uint64_t kDetectorBSeedTag = 0xDB;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<forensics::LabeledImage> mixed_set(const ExperimentConfig& cfg,
                                               const synthesis::Generator& generator,
                                               std::uint64_t real_stream,
                                               std::uint64_t fake_stream, int per_class) {
  auto set = dataset::build_real_corpus(Rng::derive(cfg.master_seed, real_stream), per_class,
                                        cfg.corpus.resolution);
  auto fakes =
      dataset::build_fake_corpus(generator, Rng::derive(cfg.master_seed, fake_stream), per_class);
  set.insert(set.end(), std::make_move_iterator(fakes.begin()),
             std::make_move_iterator(fakes.end()));
  return set;
}

std::vector<dataset::AttackSample> make_attack_set(const ExperimentConfig& cfg,
                                                   const synthesis::Generator& generator) {
  return dataset::build_attack_set(generator, Rng::derive(cfg.master_seed, streams::kAttackSet),
                                   cfg.corpus.attack_set);
}

const forensics::Detector& pick_detector(const Artifacts& art, char id) {
  if (id == 'A') return art.det_a;
  if (id == 'B') return art.det_b;
  throw ConfigError(std::string("unknown detector id '") + id + "'");
}

std::string strategy_name(attacks::ManifoldStrategy s, int level) {
  switch (s) {
    case attacks::ManifoldStrategy::kLatent: return "latent";
    case attacks::ManifoldStrategy::kNoise: return "noise";
    case attacks::ManifoldStrategy::kLatentNoise: return "latent_noise";
    case attacks::ManifoldStrategy::kNoiseLevel: return "noise_level" + std::to_string(level);
  }
  return "unknown";
}

std::string ensemble_name(attacks::EnsembleMode m) {
  switch (m) {
    case attacks::EnsembleMode::kLossSum: return "loss_sum";
    case attacks::EnsembleMode::kLogitFusion: return "logit_fusion";
    case attacks::EnsembleMode::kAlternating: return "alternating";
  }
  return "unknown";
}

void write_table_sidecar(const ExperimentConfig& cfg, const std::string& rel_csv, json info) {
  info["config_hash"] = cfg.config_hash();
  info["attack_set"] = cfg.corpus.attack_set;
  std::string path = cfg.path(rel_csv + ".meta.json");
  std::ofstream out(path, std::ios::trunc);
  out << info.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path);
}

}  // namespace

Artifacts load_artifacts(const ExperimentConfig& cfg) {
  Artifacts art;
  art.generator = io::load_generator(cfg.path(cfg.generator_ckpt));
  art.det_a = io::load_detector(cfg.path(cfg.detector_a_ckpt));
  art.det_b = io::load_detector(cfg.path(cfg.detector_b_ckpt));
  art.feature_net = io::load_feature_net(cfg.path(cfg.feature_ckpt));
  art.attack_set = make_attack_set(cfg, art.generator);
  return art;
}

AttackRunner::AttackRunner(const ExperimentConfig& cfg, const Artifacts& art)
    : cfg_(cfg), art_(art) {}

const OutcomeSet& AttackRunner::compute(
    const std::string& name, const std::function<attacks::AttackResult(std::size_t)>& run,
    const std::vector<char>& detector_ids) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;

  const std::size_t n = art_.attack_set.size();
  OutcomeSet set(n);
  parallel_for(n, cfg_.workers, [&](std::size_t i) {
    attacks::AttackResult res = run(i);
    Outcome& o = set[i];
    o.final_image = std::move(res.final_image);
    o.success = res.success;
    o.success_step = res.success_step;
    o.final_p = std::move(res.final_p_fake);
    o.p_steps = std::move(res.p_fake_steps);
    o.linf = res.linf_perturbation;
    o.l2 = res.l2_perturbation;
  });

  // One JSON record per attacked sample, in sample order.
  std::string rel = "attacks/" + name + "/results.jsonl";
  std::string full = cfg_.path(rel);
  std::filesystem::create_directories(std::filesystem::path(full).parent_path());
  std::ofstream out(full, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + full);
  for (std::size_t i = 0; i < n; ++i) {
    const Outcome& o = set[i];
    json rec;
    rec["index"] = i;
    rec["latent_seed"] = dataset::latent_seed(Rng::derive(cfg_.master_seed, streams::kAttackSet),
                                              static_cast<int>(i));
    rec["config_hash"] = cfg_.config_hash();
    rec["detectors"] = json::array();
    for (char id : detector_ids) rec["detectors"].push_back(std::string(1, id));
    rec["success"] = o.success;
    if (o.success_step) {
      rec["success_step"] = *o.success_step;
    } else {
      rec["success_step"] = nullptr;
    }
    rec["final_p_fake"] = o.final_p;
    rec["p_fake_steps"] = o.p_steps;
    if (o.linf > 0.0 || o.l2 > 0.0) {
      rec["perturbation"] = {{"linf", o.linf}, {"l2", o.l2}};
    }
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + full);
  new_outputs_.push_back(rel);

  return cache_.emplace(name, std::move(set)).first->second;
}

const OutcomeSet& AttackRunner::manifold(char target, attacks::ManifoldStrategy strategy,
                                         int iters, int noise_level) {
  std::string name = strategy_name(strategy, noise_level) + "_it" + std::to_string(iters) + "_vs_" +
                     std::string(1, target);
  const forensics::Detector& det = pick_detector(art_, target);
  attacks::ManifoldAttackConfig acfg;
  acfg.strategy = strategy;
  acfg.noise_level = noise_level;
  acfg.eps_latent = cfg_.attack.eps_latent;
  acfg.eps_noise = cfg_.attack.eps_noise;
  acfg.max_iters = iters;
  acfg.stop_on_success = false;
  return compute(
      name,
      [&, acfg](std::size_t i) {
        const auto& s = art_.attack_set[i];
        attacks::ManifoldAttackConfig c = acfg;
        c.seed = static_cast<std::uint64_t>(i);
        return attacks::manifold_attack(art_.generator, {&det}, s.z, s.noise, c);
      },
      {target});
}

const OutcomeSet& AttackRunner::ensemble(attacks::EnsembleMode mode) {
  std::string name = "ensemble_" + ensemble_name(mode);
  attacks::EnsembleConfig ens;
  ens.mode = mode;
  attacks::ManifoldAttackConfig acfg;
  acfg.strategy = attacks::ManifoldStrategy::kLatentNoise;
  acfg.eps_latent = cfg_.attack.eps_latent;
  acfg.eps_noise = cfg_.attack.eps_noise;
  acfg.max_iters = cfg_.attack.max_iters;
  acfg.stop_on_success = false;
  return compute(
      name,
      [&, acfg, ens](std::size_t i) {
        const auto& s = art_.attack_set[i];
        attacks::ManifoldAttackConfig c = acfg;
        c.seed = static_cast<std::uint64_t>(i);
        return attacks::manifold_attack(art_.generator, {&art_.det_a, &art_.det_b}, s.z, s.noise, c,
                                        ens);
      },
      {'A', 'B'});
}

const OutcomeSet& AttackRunner::norm(char target, const std::string& method) {
  std::string name = method + "_vs_" + std::string(1, target);
  const forensics::Detector& det = pick_detector(art_, target);
  attacks::NormAttackConfig ncfg;
  if (method == "fgsm") {
    ncfg = attacks::NormAttackConfig::fgsm_defaults();
    ncfg.eps_max = cfg_.attack.fgsm_eps_max;
    ncfg.alpha = cfg_.attack.fgsm_eps_max;
  } else if (method == "pgd_linf" || method == "pgd_l2") {
    ncfg = attacks::NormAttackConfig::pgd_defaults(
        method == "pgd_l2" ? attacks::NormKind::kL2 : attacks::NormKind::kLinf);
    ncfg.eps_max = cfg_.attack.pgd_eps_max;
    ncfg.alpha = cfg_.attack.pgd_alpha;
    ncfg.iters = cfg_.attack.pgd_iters;
  } else {
    throw ConfigError("unknown norm attack method: " + method);
  }
  return compute(
      name,
      [&, ncfg](std::size_t i) {
        const auto& s = art_.attack_set[i];
        attacks::NormAttackConfig c = ncfg;
        c.seed = static_cast<std::uint64_t>(i);
        return attacks::pgd_attack({&det}, s.image, 1, c);
      },
      {target});
}

std::vector<std::string> AttackRunner::take_new_outputs() {
  std::vector<std::string> out = std::move(new_outputs_);
  new_outputs_.clear();
  return out;
}

double accuracy_as_fake(const forensics::Detector& det, const OutcomeSet& set) {
  if (set.empty()) throw DataError("accuracy_as_fake: empty set");
  std::size_t correct = 0;
  for (const Outcome& o : set) {
    if (det.predict(o.final_image).label == 1) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double clean_accuracy_as_fake(const forensics::Detector& det,
                              const std::vector<dataset::AttackSample>& set) {
  if (set.empty()) throw DataError("clean_accuracy_as_fake: empty set");
  std::size_t correct = 0;
  for (const auto& s : set) {
    if (det.predict(s.image).label == 1) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

void run_gen_data(const ExperimentConfig& cfg, Manifest& manifest,
                  const synthesis::Generator* generator) {
  double t0 = now_seconds();
  std::vector<std::string> outputs;
  auto reals = dataset::build_real_corpus(Rng::derive(cfg.master_seed, streams::kRealTrain),
                                          std::min(8, cfg.corpus.train_per_class),
                                          cfg.corpus.resolution);
  std::vector<Tensor> preview;
  for (const auto& li : reals) preview.push_back(li.image);
  io::write_png(cfg.path("corpora/real_preview.png"), io::hstack_images(preview), 4);
  outputs.push_back("corpora/real_preview.png");

  json stats;
  {
    auto full = dataset::build_real_corpus(Rng::derive(cfg.master_seed, streams::kRealTrain),
                                           cfg.corpus.train_per_class, cfg.corpus.resolution);
    double mean = 0.0;
    for (const auto& li : full) mean += li.image.mean();
    stats["real_train_pixel_mean"] = mean / static_cast<double>(full.size());
    stats["real_train_size"] = full.size();
  }

  if (generator) {
    auto fakes = dataset::build_fake_corpus(
        *generator, Rng::derive(cfg.master_seed, streams::kFakeTrain), 8);
    preview.clear();
    for (const auto& li : fakes) preview.push_back(li.image);
    io::write_png(cfg.path("corpora/fake_preview.png"), io::hstack_images(preview), 4);
    outputs.push_back("corpora/fake_preview.png");
    auto full = dataset::build_fake_corpus(
        *generator, Rng::derive(cfg.master_seed, streams::kFakeTrain), cfg.corpus.train_per_class);
    double mean = 0.0;
    for (const auto& li : full) mean += li.image.mean();
    stats["fake_train_pixel_mean"] = mean / static_cast<double>(full.size());
    stats["fake_train_size"] = full.size();
  }

  {
    std::string p = cfg.path("corpora/stats.json");
    std::filesystem::create_directories(std::filesystem::path(p).parent_path());
    std::ofstream out(p, std::ios::trunc);
    out << stats.dump(2) << "\n";
    outputs.push_back("corpora/stats.json");
  }
  manifest.record("gen-data", outputs, now_seconds() - t0, stats);
}

synthesis::Generator run_train_gan(const ExperimentConfig& cfg, Manifest& manifest) {
  double t0 = now_seconds();
  auto reals = dataset::build_real_corpus(Rng::derive(cfg.master_seed, streams::kRealTrain),
                                          cfg.corpus.train_per_class, cfg.corpus.resolution);
  gan::GanTrainStats stats;
  synthesis::Generator gen = gan::train_generator(cfg.generator, reals, cfg.gan_train, &stats);
  io::save_generator(gen, cfg.path(cfg.generator_ckpt));
  json info = {{"real_pixel_mean", stats.real_pixel_mean},
               {"fake_pixel_mean", stats.fake_pixel_mean},
               {"real_pixel_std", stats.real_pixel_std},
               {"fake_pixel_std", stats.fake_pixel_std}};
  manifest.record("train-gan", {cfg.generator_ckpt}, now_seconds() - t0, info);
  return gen;
}

forensics::Detector run_train_detector(const ExperimentConfig& cfg, forensics::Arch arch,
                                       const synthesis::Generator& generator, Manifest& manifest,
                                       double* test_accuracy) {
  double t0 = now_seconds();
  auto train = mixed_set(cfg, generator, streams::kRealTrain, streams::kFakeTrain,
                         cfg.corpus.train_per_class);
  auto val = mixed_set(cfg, generator, streams::kRealVal, streams::kFakeVal,
                       cfg.corpus.val_per_class);
  auto test = mixed_set(cfg, generator, streams::kRealTest, streams::kFakeTest,
                        cfg.corpus.test_per_class);

  forensics::TrainConfig tcfg = cfg.detector;
  tcfg.seed = Rng::derive(cfg.master_seed,
                          arch == forensics::Arch::kSepConv ? kDetectorASeedTag : kDetectorBSeedTag);
  forensics::Detector det = forensics::train_detector(arch, train, val, tcfg);
  double test_acc = forensics::evaluate_accuracy(det, test);
  if (test_accuracy) *test_accuracy = test_acc;

  std::string rel =
      arch == forensics::Arch::kSepConv ? cfg.detector_a_ckpt : cfg.detector_b_ckpt;
  io::save_detector(det, cfg.path(rel));
  json info = {{"architecture", std::string(1, forensics::arch_id(arch))},
               {"best_val_accuracy", det.best_val_accuracy()},
               {"test_accuracy", test_acc},
               {"parameter_count", det.net().parameter_count()},
               {"weighted_layers", det.net().weighted_layer_count()}};
  manifest.record(std::string("train-detector-") + forensics::arch_id(arch), {rel},
                  now_seconds() - t0, info);
  return det;
}

metrics::FeatureNet run_train_feature_net(const ExperimentConfig& cfg,
                                          const synthesis::Generator& generator,
                                          Manifest& manifest) {
  double t0 = now_seconds();
  auto train = mixed_set(cfg, generator, streams::kRealTrain, streams::kFakeTrain,
                         cfg.corpus.train_per_class);
  metrics::FeatureNet fn = metrics::train_feature_net(train, cfg.feature_net);
  io::save_feature_net(fn, cfg.path(cfg.feature_ckpt));
  manifest.record("train-feature-net", {cfg.feature_ckpt}, now_seconds() - t0);
  return fn;
}

void run_whitebox_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest) {
  double t0 = now_seconds();
  using Strategy = attacks::ManifoldStrategy;
  const int iters = cfg.attack.max_iters;

  std::vector<std::vector<std::string>> rows;
  auto add_row = [&](const std::string& method, double acc_a, double acc_b) {
    rows.push_back({method, format_fixed(acc_a), format_fixed(acc_b)});
  };

  add_row("clean", clean_accuracy_as_fake(art.det_a, art.attack_set),
          clean_accuracy_as_fake(art.det_b, art.attack_set));
  for (const std::string& m : {std::string("pgd_linf"), std::string("pgd_l2")}) {
    add_row(m, accuracy_as_fake(art.det_a, runner.norm('A', m)),
            accuracy_as_fake(art.det_b, runner.norm('B', m)));
  }
  add_row("fgsm", accuracy_as_fake(art.det_a, runner.norm('A', "fgsm")),
          accuracy_as_fake(art.det_b, runner.norm('B', "fgsm")));
  add_row("noise", accuracy_as_fake(art.det_a, runner.manifold('A', Strategy::kNoise, iters)),
          accuracy_as_fake(art.det_b, runner.manifold('B', Strategy::kNoise, iters)));
  add_row("latent", accuracy_as_fake(art.det_a, runner.manifold('A', Strategy::kLatent, iters)),
          accuracy_as_fake(art.det_b, runner.manifold('B', Strategy::kLatent, iters)));
  add_row("latent_noise",
          accuracy_as_fake(art.det_a, runner.manifold('A', Strategy::kLatentNoise, iters)),
          accuracy_as_fake(art.det_b, runner.manifold('B', Strategy::kLatentNoise, iters)));

  std::string rel = "tables/table1.csv";
  write_csv(cfg.path(rel), {"method", "detector_a", "detector_b"}, rows);
  write_table_sidecar(cfg, rel, {{"table", "whitebox"}, {"iters", iters}});
  std::vector<std::string> outputs = runner.take_new_outputs();
  outputs.push_back(rel);
  outputs.push_back(rel + ".meta.json");
  manifest.record("table1", outputs, now_seconds() - t0);
}

void run_transfer_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest) {
  double t0 = now_seconds();
  std::vector<std::vector<std::string>> rows;
  for (char target : {'A', 'B'}) {
    for (const std::string& m :
         {std::string("fgsm"), std::string("pgd_linf"), std::string("pgd_l2"),
          std::string("ours")}) {
      const OutcomeSet& set =
          m == "ours" ? runner.manifold(target, attacks::ManifoldStrategy::kLatentNoise,
                                        cfg.attack.transfer_iters)
                      : runner.norm(target, m);
      rows.push_back({std::string(1, target), m, format_fixed(accuracy_as_fake(art.det_a, set)),
                      format_fixed(accuracy_as_fake(art.det_b, set))});
    }
  }
  std::string rel = "tables/table2.csv";
  write_csv(cfg.path(rel), {"target", "method", "detector_a", "detector_b"}, rows);
  write_table_sidecar(cfg, rel,
                      {{"table", "transfer"}, {"ours_iters", cfg.attack.transfer_iters}});
  std::vector<std::string> outputs = runner.take_new_outputs();
  outputs.push_back(rel);
  outputs.push_back(rel + ".meta.json");
  manifest.record("table2", outputs, now_seconds() - t0);
}

void run_ensemble_table(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest) {
  double t0 = now_seconds();
  std::vector<std::vector<std::string>> rows;
  for (auto mode : {attacks::EnsembleMode::kLossSum, attacks::EnsembleMode::kLogitFusion,
                    attacks::EnsembleMode::kAlternating}) {
    const OutcomeSet& set = runner.ensemble(mode);
    rows.push_back({ensemble_name(mode), format_fixed(accuracy_as_fake(art.det_a, set)),
                    format_fixed(accuracy_as_fake(art.det_b, set))});
  }
  std::string rel = "tables/table3.csv";
  write_csv(cfg.path(rel), {"ensemble_mode", "detector_a", "detector_b"}, rows);
  write_table_sidecar(cfg, rel, {{"table", "ensemble"}, {"iters", cfg.attack.max_iters}});
  std::vector<std::string> outputs = runner.take_new_outputs();
  outputs.push_back(rel);
  outputs.push_back(rel + ".meta.json");
  manifest.record("table3", outputs, now_seconds() - t0);
}

void run_level_ablation(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest) {
  double t0 = now_seconds();
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"0", format_fixed(clean_accuracy_as_fake(art.det_a, art.attack_set)),
                  format_fixed(clean_accuracy_as_fake(art.det_b, art.attack_set))});
  for (int level = 1; level <= cfg.generator.levels; ++level) {
    double acc_a = accuracy_as_fake(
        art.det_a, runner.manifold('A', attacks::ManifoldStrategy::kNoiseLevel,
                                   cfg.attack.ablation_iters, level));
    double acc_b = accuracy_as_fake(
        art.det_b, runner.manifold('B', attacks::ManifoldStrategy::kNoiseLevel,
                                   cfg.attack.ablation_iters, level));
    rows.push_back({std::to_string(level), format_fixed(acc_a), format_fixed(acc_b)});
  }
  std::string rel = "tables/table4.csv";
  write_csv(cfg.path(rel), {"level", "detector_a", "detector_b"}, rows);
  write_table_sidecar(cfg, rel,
                      {{"table", "level_ablation"},
                       {"iters", cfg.attack.ablation_iters},
                       {"eps_noise", cfg.attack.eps_noise}});
  std::vector<std::string> outputs = runner.take_new_outputs();
  outputs.push_back(rel);
  outputs.push_back(rel + ".meta.json");
  manifest.record("table4", outputs, now_seconds() - t0);
}

void run_quality_report(const ExperimentConfig& cfg, const Artifacts& art, AttackRunner& runner,
                        Manifest& manifest) {
  double t0 = now_seconds();
  const OutcomeSet& ours =
      runner.manifold('A', attacks::ManifoldStrategy::kLatentNoise, cfg.attack.max_iters);
  const OutcomeSet& pgd = runner.norm('A', "pgd_linf");
  const OutcomeSet& fgsm = runner.norm('A', "fgsm");

  // Matched set: samples where every compared method fools detector A.
  std::vector<std::size_t> matched;
  for (std::size_t i = 0; i < art.attack_set.size(); ++i) {
    bool all = art.det_a.predict(ours[i].final_image).label == 0 &&
               art.det_a.predict(pgd[i].final_image).label == 0 &&
               art.det_a.predict(fgsm[i].final_image).label == 0;
    if (all) matched.push_back(i);
  }
  bool under_powered = matched.size() < static_cast<std::size_t>(cfg.quality.min_matched);

  struct Method {
    std::string name;
    const OutcomeSet* set;
  };
  std::vector<Method> methods = {{"fgsm", &fgsm}, {"pgd_linf", &pgd}, {"ours", &ours}};

  std::vector<std::vector<std::string>> rows;
  {
    // Reference against itself pins the degenerate metric values.
    metrics::QualityReport self{};
    if (!matched.empty()) {
      const ImageTensor& ref = art.attack_set[matched[0]].image;
      self = metrics::quality_report(ref, ref, art.feature_net);
    } else {
      self = metrics::quality_report(art.attack_set[0].image, art.attack_set[0].image,
                                     art.feature_net);
    }
    rows.push_back({"reference", format_fixed(self.mse), format_fixed(self.psnr),
                    format_fixed(self.ssim), format_fixed(self.perceptual)});
  }
  json means;
  for (const Method& m : methods) {
    double s_mse = 0, s_psnr = 0, s_ssim = 0, s_perc = 0;
    for (std::size_t i : matched) {
      const ImageTensor& ref = art.attack_set[i].image;
      metrics::QualityReport q =
          metrics::quality_report(ref, (*m.set)[i].final_image, art.feature_net);
      s_mse += q.mse;
      s_psnr += q.psnr;
      s_ssim += q.ssim;
      s_perc += q.perceptual;
    }
    double n = std::max<double>(1.0, static_cast<double>(matched.size()));
    rows.push_back({m.name, format_fixed(s_mse / n), format_fixed(s_psnr / n),
                    format_fixed(s_ssim / n), format_fixed(s_perc / n)});
    means[m.name] = {{"mse", s_mse / n},
                     {"psnr", s_psnr / n},
                     {"ssim", s_ssim / n},
                     {"perceptual", s_perc / n}};
  }

  std::string rel = "tables/table5.csv";
  write_csv(cfg.path(rel), {"method", "mse", "psnr", "ssim", "perceptual"}, rows);
  json info = {{"table", "quality"},
               {"matched", matched.size()},
               {"min_matched", cfg.quality.min_matched},
               {"under_powered", under_powered},
               {"means", means}};
  write_table_sidecar(cfg, rel, info);

  std::vector<std::string> outputs = runner.take_new_outputs();
  outputs.push_back(rel);
  outputs.push_back(rel + ".meta.json");

  // Side-by-side grid: reference | fgsm | pgd | ours.
  if (!matched.empty()) {
    std::vector<Tensor> grid_rows;
    std::size_t n_rows =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.quality.grid_samples), matched.size());
    for (std::size_t r = 0; r < n_rows; ++r) {
      std::size_t i = matched[r];
      grid_rows.push_back(io::hstack_images({art.attack_set[i].image, fgsm[i].final_image,
                                             pgd[i].final_image, ours[i].final_image}));
    }
    io::write_png(cfg.path("tables/quality_grid.png"), io::vstack_images(grid_rows), 4);
    outputs.push_back("tables/quality_grid.png");

    // Iteration strip for the first matched sample (manifold trajectory).
    const auto& s = art.attack_set[matched[0]];
    attacks::ManifoldAttackConfig acfg;
    acfg.strategy = attacks::ManifoldStrategy::kLatentNoise;
    acfg.eps_latent = cfg.attack.eps_latent;
    acfg.eps_noise = cfg.attack.eps_noise;
    acfg.max_iters = cfg.attack.max_iters;
    acfg.stop_on_success = false;
    acfg.record_step_images = true;
    auto res = attacks::manifold_attack(art.generator, {&art.det_a}, s.z, s.noise, acfg);
    for (std::size_t t = 0; t < res.step_images.size(); ++t) {
      std::string p = "attacks/latent_noise_steps/sample_" + std::to_string(matched[0]) +
                      "_step_" + std::to_string(t) + ".png";
      io::write_png(cfg.path(p), res.step_images[t], 4);
      outputs.push_back(p);
    }
  }

  manifest.record("table5", outputs, now_seconds() - t0, info);
}

void run_report(const ExperimentConfig& cfg, Manifest& manifest) {
  double t0 = now_seconds();
  std::ostringstream md;
  md << "# Run report\n\nconfig hash: " << cfg.config_hash() << "\n\n";
  struct Entry {
    const char* rel;
    const char* title;
  };
  Entry entries[] = {{"tables/table1.csv", "Table 1: white-box accuracy"},
                     {"tables/table2.csv", "Table 2: black-box transfer"},
                     {"tables/table3.csv", "Table 3: ensemble attacks"},
                     {"tables/table4.csv", "Table 4: per-level noise ablation"},
                     {"tables/table5.csv", "Table 5: quality metrics"}};
  for (const Entry& e : entries) {
    std::ifstream in(cfg.path(e.rel));
    if (!in) throw IoError("report: missing " + cfg.path(e.rel));
    md << "## " << e.title << "\n\n";
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      std::string row = "|";
      std::size_t start = 0;
      std::size_t cols = 0;
      while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        std::string cell =
            comma == std::string::npos ? line.substr(start) : line.substr(start, comma - start);
        row += " " + cell + " |";
        ++cols;
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      md << row << "\n";
      if (header) {
        md << "|";
        for (std::size_t i = 0; i < cols; ++i) md << " --- |";
        md << "\n";
        header = false;
      }
    }
    md << "\n";
  }
  auto bad = Manifest::verify(cfg.out_dir);
  md << "## Manifest\n\n";
  if (bad.empty()) {
    md << "All recorded artifacts match their checksums.\n";
  } else {
    md << "Checksum mismatches:\n";
    for (const auto& b : bad) md << "- " << b << "\n";
  }
  std::string rel = "report.md";
  std::ofstream out(cfg.path(rel), std::ios::trunc | std::ios::binary);
  out << md.str();
  if (!out) throw IoError("cannot write report");
  manifest.record("report", {rel}, now_seconds() - t0);
}

void run_attack_command(const ExperimentConfig& cfg, const AttackCommandOptions& opts,
                        Manifest& manifest) {
  double t0 = now_seconds();
  Artifacts art = load_artifacts(cfg);
  if (opts.samples > 0 && opts.samples < static_cast<int>(art.attack_set.size())) {
    art.attack_set.resize(static_cast<std::size_t>(opts.samples));
  }
  AttackRunner runner(cfg, art);

  const std::string& m = opts.method;
  if (opts.target.rfind("ensemble", 0) == 0) {
    attacks::EnsembleMode mode;
    if (opts.target == "ensemble-loss") {
      mode = attacks::EnsembleMode::kLossSum;
    } else if (opts.target == "ensemble-logits") {
      mode = attacks::EnsembleMode::kLogitFusion;
    } else if (opts.target == "ensemble-alternating") {
      mode = attacks::EnsembleMode::kAlternating;
    } else {
      throw ConfigError("attack: unknown ensemble target " + opts.target);
    }
    runner.ensemble(mode);
  } else {
    if (opts.target != "A" && opts.target != "B") {
      throw ConfigError("attack: target must be A, B, or ensemble-*");
    }
    char target = opts.target[0];
    if (m == "fgsm" || m == "pgd-linf" || m == "pgd-l2") {
      std::string key = m;
      std::replace(key.begin(), key.end(), '-', '_');
      runner.norm(target, key);
    } else if (m == "latent") {
      runner.manifold(target, attacks::ManifoldStrategy::kLatent, cfg.attack.max_iters);
    } else if (m == "noise") {
      runner.manifold(target, attacks::ManifoldStrategy::kNoise, cfg.attack.max_iters);
    } else if (m == "latent+noise") {
      runner.manifold(target, attacks::ManifoldStrategy::kLatentNoise, cfg.attack.max_iters);
    } else if (m.rfind("noise-level-", 0) == 0) {
      int level = std::stoi(m.substr(std::string("noise-level-").size()));
      runner.manifold(target, attacks::ManifoldStrategy::kNoiseLevel, cfg.attack.max_iters, level);
    } else {
      throw ConfigError("attack: unknown method " + m);
    }
  }

  std::vector<std::string> outputs = runner.take_new_outputs();

  if (opts.record_steps && !art.attack_set.empty() && opts.target.size() == 1) {
    // Per-step snapshots for the first few samples of a manifold method.
    attacks::ManifoldAttackConfig acfg;
    acfg.eps_latent = cfg.attack.eps_latent;
    acfg.eps_noise = cfg.attack.eps_noise;
    acfg.max_iters = cfg.attack.max_iters;
    acfg.stop_on_success = false;
    acfg.record_step_images = true;
    bool manifold = true;
    if (m == "latent") {
      acfg.strategy = attacks::ManifoldStrategy::kLatent;
    } else if (m == "noise") {
      acfg.strategy = attacks::ManifoldStrategy::kNoise;
    } else if (m == "latent+noise") {
      acfg.strategy = attacks::ManifoldStrategy::kLatentNoise;
    } else if (m.rfind("noise-level-", 0) == 0) {
      acfg.strategy = attacks::ManifoldStrategy::kNoiseLevel;
      acfg.noise_level = std::stoi(m.substr(std::string("noise-level-").size()));
    } else {
      manifold = false;
    }
    if (manifold) {
      const forensics::Detector& det = pick_detector(art, opts.target[0]);
      std::size_t count = std::min<std::size_t>(4, art.attack_set.size());
      std::string dir = "attacks/" + strategy_name(acfg.strategy, acfg.noise_level) + "_steps_vs_" +
                        opts.target;
      for (std::size_t i = 0; i < count; ++i) {
        const auto& s = art.attack_set[i];
        auto res = attacks::manifold_attack(art.generator, {&det}, s.z, s.noise, acfg);
        for (std::size_t t = 0; t < res.step_images.size(); ++t) {
          std::string p =
              dir + "/sample_" + std::to_string(i) + "_step_" + std::to_string(t) + ".png";
          io::write_png(cfg.path(p), res.step_images[t], 4);
          outputs.push_back(p);
        }
      }
    }
  }

  manifest.record("attack:" + m + ":" + opts.target, outputs, now_seconds() - t0);
}

PipelineSummary run_full_pipeline(const ExperimentConfig& cfg) {
  PipelineSummary summary;
  Manifest manifest(cfg);
  double t_start = now_seconds();
  auto timed = [&](const std::string& name, const std::function<void()>& fn) {
    double t0 = now_seconds();
    fn();
    summary.stage_seconds[name] = now_seconds() - t0;
  };

  synthesis::Generator gen;
  timed("train-gan", [&] { gen = run_train_gan(cfg, manifest); });
  timed("gen-data", [&] { run_gen_data(cfg, manifest, &gen); });

  forensics::Detector det_a, det_b;
  timed("train-detector-A", [&] {
    det_a = run_train_detector(cfg, forensics::Arch::kSepConv, gen, manifest,
                               &summary.clean_test_accuracy_a);
  });
  timed("train-detector-B", [&] {
    det_b = run_train_detector(cfg, forensics::Arch::kBottleneck, gen, manifest,
                               &summary.clean_test_accuracy_b);
  });
  summary.val_accuracy_a = det_a.best_val_accuracy();
  summary.val_accuracy_b = det_b.best_val_accuracy();

  metrics::FeatureNet fn;
  timed("train-feature-net", [&] { fn = run_train_feature_net(cfg, gen, manifest); });

  Artifacts art;
  art.generator = std::move(gen);
  art.det_a = std::move(det_a);
  art.det_b = std::move(det_b);
  art.feature_net = std::move(fn);
  art.attack_set = make_attack_set(cfg, art.generator);

  // Training summary table (not one of the five analogs, but deterministic).
  {
    std::vector<std::vector<std::string>> rows = {
        {"A", format_fixed(summary.val_accuracy_a), format_fixed(summary.clean_test_accuracy_a),
         std::to_string(art.det_a.net().parameter_count()),
         std::to_string(art.det_a.net().weighted_layer_count())},
        {"B", format_fixed(summary.val_accuracy_b), format_fixed(summary.clean_test_accuracy_b),
         std::to_string(art.det_b.net().parameter_count()),
         std::to_string(art.det_b.net().weighted_layer_count())}};
    write_csv(cfg.path("tables/training_summary.csv"),
              {"detector", "best_val_accuracy", "test_accuracy", "parameters", "weighted_layers"},
              rows);
  }

  AttackRunner runner(cfg, art);
  timed("table1", [&] { run_whitebox_table(cfg, art, runner, manifest); });
  timed("table2", [&] { run_transfer_table(cfg, art, runner, manifest); });
  timed("table3", [&] { run_ensemble_table(cfg, art, runner, manifest); });
  timed("table4", [&] { run_level_ablation(cfg, art, runner, manifest); });
  timed("table5", [&] { run_quality_report(cfg, art, runner, manifest); });
  timed("report", [&] { run_report(cfg, manifest); });

  summary.total_seconds = now_seconds() - t_start;
  summary.table_paths = {"tables/table1.csv", "tables/table2.csv", "tables/table3.csv",
                         "tables/table4.csv", "tables/table5.csv"};
  return summary;
}

}  // namespace madv::harness
