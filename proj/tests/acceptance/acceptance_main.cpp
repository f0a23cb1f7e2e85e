// Acceptance suite: runs the full desk-scale protocol twice and checks each
// criterion at its stated tolerance, printing one PASS/FAIL line per
// criterion. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "madv/attacks.hpp"
#include "madv/experiments.hpp"
#include "madv/harness.hpp"
#include "test_util.hpp"

using namespace madv;
using madv::harness::ExperimentConfig;
using madv::harness::PipelineSummary;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// --- tiny csv reader -------------------------------------------------------

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("csv: no column " + name);
  }
  const std::vector<std::string>& row(const std::string& key) const {
    for (const auto& r : rows) {
      if (!r.empty() && r[0] == key) return r;
    }
    throw std::runtime_error("csv: no row " + key);
  }
  double value(const std::string& row_key, const std::string& col_name) const {
    return std::stod(row(row_key).at(static_cast<std::size_t>(col(col_name))));
  }
};

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing csv: " + path);
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      cells.push_back(comma == std::string::npos ? line.substr(start)
                                                 : line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      csv.header = cells;
      first = false;
    } else {
      csv.rows.push_back(cells);
    }
  }
  return csv;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- criterion 1: gradient oracle ------------------------------------------

void criterion1() {
  double t0 = now_s();
  bool pass = true;
  std::string detail;
  int configs = 0;

  // Generator compositions.
  Rng meta(2024);
  for (int trial = 0; trial < 12; ++trial) {
    synthesis::GeneratorConfig cfg;
    cfg.mapping_depth = static_cast<int>(meta.below(3));
    cfg.d_z = 2 + static_cast<int>(meta.below(4));
    cfg.d_w = cfg.mapping_depth == 0 ? cfg.d_z : 2 + static_cast<int>(meta.below(4));
    cfg.levels = 1 + static_cast<int>(meta.below(2));
    cfg.base_resolution = 4;
    cfg.features.clear();
    for (int l = 0; l < cfg.levels; ++l) cfg.features.push_back(3 + static_cast<int>(meta.below(3)));
    synthesis::Generator gen = synthesis::Generator::random_init(cfg, meta.next_u64());
    auto z = synthesis::sample_latent(meta.next_u64(), cfg.d_z);
    auto noise = synthesis::sample_noise(meta.next_u64(), cfg);

    std::size_t res = static_cast<std::size_t>(cfg.output_resolution());
    Rng wrng(meta.next_u64());
    Tensor weights = testutil::random_tensor({3, res, res}, wrng);
    synthesis::LossHead head = [&](const ImageTensor& img) {
      double loss = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) loss += img[i] * weights[i];
      return synthesis::HeadResult{loss, weights};
    };
    auto grads = gen.input_gradients(z, noise, head);
    auto loss_now = [&]() {
      ImageTensor img = gen.generate(z, noise);
      double loss = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) loss += img[i] * weights[i];
      return loss;
    };
    auto zc = testutil::compare_grads(grads.z, testutil::finite_diff(loss_now, z.values));
    pass &= zc.passed();
    for (std::size_t l = 0; l < noise.levels.size(); ++l) {
      auto nc =
          testutil::compare_grads(grads.noise[l], testutil::finite_diff(loss_now, noise.levels[l]));
      pass &= nc.passed() && nc.rel_fraction() >= 0.95;
    }
    ++configs;
  }

  // Detector compositions.
  forensics::Arch archs[] = {forensics::Arch::kSepConv, forensics::Arch::kBottleneck,
                             forensics::Arch::kPlain};
  for (int trial = 0; trial < 9; ++trial) {
    auto net = forensics::BinaryConvNet::random_init(archs[trial % 3], 8, meta.next_u64());
    Rng irng(meta.next_u64());
    ImageTensor img = testutil::random_image({3, 8, 8}, irng);
    int y = trial % 2;
    forensics::BinaryConvNet::Forward cache;
    double logit = net.logit(img, &cache);
    double p = 1.0 / (1.0 + std::exp(-logit));
    Tensor g = net.input_grad(cache, p - y, nullptr);
    auto f = [&]() {
      double l = net.logit(img);
      return forensics::bce_loss(1.0 / (1.0 + std::exp(-l)), y);
    };
    auto check = testutil::compare_grads(g, testutil::finite_diff(f, img));
    pass &= check.passed() && check.rel_fraction() >= 0.95;
    ++configs;
  }

  double dt = now_s() - t0;
  pass &= dt < 60.0;
  std::ostringstream d;
  d << configs << " random configs, rel<1e-4/abs<1e-6, " << std::fixed << dt << "s";
  report(1, pass, "gradient oracle vs central finite differences", d.str());
}

// --- criterion 2: projection/step exactness ---------------------------------

void criterion2() {
  bool pass = true;

  // latent_step from the origin moves by exactly +-eps.
  synthesis::LatentVector z{Tensor({2}, {0.0, 0.0})};
  auto stepped = attacks::latent_step(z, Tensor({2}, {5.0, -5.0}), 0.004);
  pass &= stepped.values[0] == 0.004 && stepped.values[1] == -0.004;

  // noise_step masking leaves unmasked levels bit-identical.
  synthesis::GeneratorConfig gcfg;
  auto noise = synthesis::sample_noise(5, gcfg);
  std::vector<Tensor> grads;
  for (const auto& t : noise.levels) grads.push_back(Tensor::full(t.shape(), 1.0));
  auto masked = attacks::noise_step(noise, grads, 0.05, std::set<int>{2});
  pass &= masked.levels[0].max_abs_diff(noise.levels[0]) == 0.0;
  pass &= masked.levels[2].max_abs_diff(noise.levels[2]) == 0.0;
  for (std::size_t i = 0; i < noise.levels[1].size(); ++i) {
    pass &= masked.levels[1][i] == noise.levels[1][i] + 0.05;
  }

  // FGSM: one sign step then clip, checked against a direct recomputation.
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kSepConv, 77, 8);
  ImageTensor x = Tensor::full({3, 8, 8}, 0.9);
  ImageTensor fgsm = attacks::fgsm_attack(det, x, 1, 0.3);
  Tensor g;
  det.loss_and_input_grad(x, 1, g);
  Tensor s = attacks::sign(g);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double expect = std::clamp(0.9 + 0.3 * s[i], 0.0, 1.0);
    pass &= fgsm[i] == expect;
    if (s[i] > 0.0) pass &= fgsm[i] == 1.0;
  }

  // PGD l_inf clamp: every iterate stays inside the box, bit-exactly.
  attacks::NormAttackConfig ncfg = attacks::NormAttackConfig::pgd_defaults(attacks::NormKind::kLinf);
  ncfg.iters = 8;
  ncfg.record_step_images = true;
  Rng rng(3);
  ImageTensor x0 = testutil::random_image({3, 8, 8}, rng);
  auto res = attacks::pgd_attack({&det}, x0, 1, ncfg);
  for (const auto& xt : res.step_images) {
    Tensor delta = xt - x0;
    pass &= delta.linf_norm() <= 0.3;
    pass &= xt.min() >= 0.0 && xt.max() <= 1.0;
  }

  // PGD l2 radial rescale: ||delta||=0.6 halves exactly at eps 0.3.
  Tensor delta({4}, {0.3, -0.3, 0.3, -0.3});
  Tensor projected = attacks::project_l2(delta, 0.3);
  pass &= projected[0] == 0.15 && projected[1] == -0.15 && projected[2] == 0.15 &&
          projected[3] == -0.15;

  report(2, pass, "projection and step exactness on hand-constructed tensors",
         "latent/noise/fgsm/pgd-linf/pgd-l2");
}

}  // namespace

int main(int argc, char** argv) {
  std::string base = argc > 1 ? argv[1] : "acceptance_runs";
  std::filesystem::create_directories(base);

  criterion1();
  criterion2();

  // Shared pipeline run A drives criteria 3-8; run B drives criterion 9.
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
  cfg.out_dir = base + "/run_a";
  std::filesystem::remove_all(cfg.out_dir);

  std::printf("running full pipeline (run A) ...\n");
  std::fflush(stdout);
  PipelineSummary a = harness::run_full_pipeline(cfg);
  for (const auto& [stage, secs] : a.stage_seconds) {
    std::printf("  stage %-18s %8.1fs\n", stage.c_str(), secs);
  }
  std::printf("  total %.1fs\n", a.total_seconds);
  std::fflush(stdout);

  // Criterion 3: clean-detection analog.
  {
    double train_time =
        a.stage_seconds.at("train-detector-A") + a.stage_seconds.at("train-detector-B");
    bool pass = a.clean_test_accuracy_a >= 0.90 && a.clean_test_accuracy_b >= 0.90 &&
                train_time < 900.0;
    std::ostringstream d;
    d << "held-out accuracy A=" << harness::format_fixed(a.clean_test_accuracy_a, 4)
      << " B=" << harness::format_fixed(a.clean_test_accuracy_b, 4) << ", train "
      << harness::format_fixed(train_time, 1) << "s";
    report(3, pass, "both detectors reach >=90% held-out accuracy", d.str());
  }

  Csv t1 = read_csv(cfg.path("tables/table1.csv"));
  double clean_a = t1.value("clean", "detector_a");
  double clean_b = t1.value("clean", "detector_b");

  // Criterion 4: white-box collapse.
  {
    bool pass = true;
    for (const std::string m : {std::string("noise"), std::string("latent"),
                                std::string("latent_noise"), std::string("pgd_linf")}) {
      pass &= t1.value(m, "detector_a") <= 0.10;
      pass &= t1.value(m, "detector_b") <= 0.10;
    }
    pass &= t1.value("fgsm", "detector_a") < clean_a;
    pass &= t1.value("fgsm", "detector_b") < clean_b;
    pass &= a.stage_seconds.at("table1") < 600.0;
    std::ostringstream d;
    d << "latent=" << t1.value("latent", "detector_a") << "/" << t1.value("latent", "detector_b")
      << " noise=" << t1.value("noise", "detector_a") << "/" << t1.value("noise", "detector_b")
      << " both=" << t1.value("latent_noise", "detector_a") << "/"
      << t1.value("latent_noise", "detector_b") << " pgd=" << t1.value("pgd_linf", "detector_a")
      << "/" << t1.value("pgd_linf", "detector_b") << " in "
      << harness::format_fixed(a.stage_seconds.at("table1"), 1) << "s";
    report(4, pass, "manifold strategies and PGD l_inf collapse accuracy to <=10%", d.str());
  }

  // Criterion 5: ensembles.
  {
    Csv t3 = read_csv(cfg.path("tables/table3.csv"));
    bool pass = true;
    for (const std::string m : {std::string("loss_sum"), std::string("logit_fusion"),
                                std::string("alternating")}) {
      pass &= t3.value(m, "detector_a") <= 0.10;
      pass &= t3.value(m, "detector_b") <= 0.10;
    }
    pass &= a.stage_seconds.at("table3") < 600.0;
    std::ostringstream d;
    d << "loss=" << t3.value("loss_sum", "detector_a") << "/" << t3.value("loss_sum", "detector_b")
      << " logits=" << t3.value("logit_fusion", "detector_a") << "/"
      << t3.value("logit_fusion", "detector_b") << " alt=" << t3.value("alternating", "detector_a")
      << "/" << t3.value("alternating", "detector_b");
    report(5, pass, "all three ensemble modes reach <=10% on both detectors", d.str());
  }

  // Criterion 6: transfer.
  {
    Csv t2 = read_csv(cfg.path("tables/table2.csv"));
    bool pass = false;
    std::string best;
    double best_drop = 0.0;
    for (const auto& row : t2.rows) {
      const std::string& target = row[0];
      const std::string& method = row[1];
      double acc_a = std::stod(row[2]);
      double acc_b = std::stod(row[3]);
      double cross = target == "A" ? acc_b : acc_a;
      double clean = target == "A" ? clean_b : clean_a;
      double drop = clean - cross;
      if (drop >= 0.15) pass = true;
      if (drop > best_drop) {
        best_drop = drop;
        best = method + " crafted on " + target;
      }
    }
    std::ostringstream d;
    d << "best cross-model drop " << harness::format_fixed(best_drop, 4) << " via " << best;
    report(6, pass, "some transfer direction drops accuracy by >=15 points", d.str());
  }

  // Criterion 7: level ablation ordering.
  {
    Csv t4 = read_csv(cfg.path("tables/table4.csv"));
    int top = cfg.generator.levels;
    bool pass = t4.value(std::to_string(top), "detector_a") <= t4.value("1", "detector_a") &&
                t4.value(std::to_string(top), "detector_b") <= t4.value("1", "detector_b") &&
                t4.value("0", "detector_a") == clean_a && t4.value("0", "detector_b") == clean_b;
    std::ostringstream d;
    d << "level1 " << t4.value("1", "detector_a") << "/" << t4.value("1", "detector_b")
      << " vs level" << top << " " << t4.value(std::to_string(top), "detector_a") << "/"
      << t4.value(std::to_string(top), "detector_b");
    report(7, pass, "finest-level noise attack is at least as strong as coarsest", d.str());
  }

  // Criterion 8: quality ordering.
  {
    Csv t5 = read_csv(cfg.path("tables/table5.csv"));
    nlohmann::json meta;
    {
      std::ifstream in(cfg.path("tables/table5.csv.meta.json"));
      meta = nlohmann::json::parse(in, nullptr, false);
    }
    std::size_t matched = meta.value("matched", std::size_t{0});
    bool pass = t5.value("ours", "perceptual") < t5.value("pgd_linf", "perceptual");
    pass &= matched >= 50;
    pass &= t5.value("reference", "mse") == 0.0 && t5.value("reference", "psnr") == 100.0 &&
            t5.value("reference", "ssim") == 1.0 && t5.value("reference", "perceptual") == 0.0;
    std::ostringstream d;
    d << "perceptual ours=" << t5.value("ours", "perceptual")
      << " pgd=" << t5.value("pgd_linf", "perceptual") << ", matched=" << matched;
    report(8, pass, "manifold images sit closer in perceptual-proxy distance than PGD", d.str());
  }

  // Criterion 9: end-to-end determinism + runtime budget.
  {
    ExperimentConfig cfg_b = cfg;
    cfg_b.out_dir = base + "/run_b";
    std::filesystem::remove_all(cfg_b.out_dir);
    std::printf("running full pipeline (run B) ...\n");
    std::fflush(stdout);
    PipelineSummary b = harness::run_full_pipeline(cfg_b);

    bool pass = a.total_seconds < 2700.0 && b.total_seconds < 2700.0;
    std::string first_diff;
    for (const std::string& rel : a.table_paths) {
      std::string fa = read_file(cfg.path(rel));
      std::string fb = read_file(cfg_b.path(rel));
      if (fa.empty() || fa != fb) {
        pass = false;
        if (first_diff.empty()) first_diff = rel;
      }
    }
    std::ostringstream d;
    d << "runs " << harness::format_fixed(a.total_seconds, 1) << "s / "
      << harness::format_fixed(b.total_seconds, 1) << "s";
    if (!first_diff.empty()) d << ", first difference: " << first_diff;
    report(9, pass, "rerun reproduces all five CSV tables byte-identically", d.str());
  }

  std::printf("%d criterion failure(s)\n", g_failures);
  return g_failures;
}
