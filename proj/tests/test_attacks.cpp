#include <doctest.h>

#include <cmath>

#include "madv/attacks.hpp"
#include "test_util.hpp"

using namespace madv;
using namespace madv::attacks;
using namespace madv::testutil;

namespace {

synthesis::GeneratorConfig tiny_gen_config() {
  synthesis::GeneratorConfig cfg;
  cfg.d_z = 4;
  cfg.d_w = 4;
  cfg.mapping_depth = 1;
  cfg.levels = 3;
  cfg.base_resolution = 2;  // resolutions 2/4/8
  cfg.features = {4, 4, 3};
  return cfg;
}

forensics::Detector biased_detector(forensics::Arch arch, double bias, std::uint64_t seed) {
  auto net = forensics::BinaryConvNet::random_init(arch, 8, seed);
  net.ops_mutable().back().b[0] = bias;
  return forensics::Detector(std::move(net), seed, -1.0);
}

}  // namespace

TEST_CASE("sign: definition and idempotence") {
  Tensor v({3}, {2.3, -0.1, 0.0});
  Tensor s = sign(v);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == -1.0);
  CHECK(s[2] == 0.0);

  Tensor neg = Tensor::full({5}, -3.0);
  Tensor sn = sign(neg);
  for (std::size_t i = 0; i < sn.size(); ++i) CHECK(sn[i] == -1.0);

  Rng rng(1);
  Tensor r = random_tensor({32}, rng);
  CHECK(sign(sign(r)).max_abs_diff(sign(r)) == 0.0);
}

TEST_CASE("latent_step: exact coordinate moves") {
  synthesis::LatentVector z{Tensor({2}, {0.0, 0.0})};
  Tensor grad({2}, {5.0, -5.0});
  synthesis::LatentVector stepped = latent_step(z, grad, 0.004);
  CHECK(stepped.values[0] == 0.004);
  CHECK(stepped.values[1] == -0.004);

  synthesis::LatentVector frozen = latent_step(z, Tensor::zeros({2}), 0.004);
  CHECK(frozen.values.max_abs_diff(z.values) == 0.0);

  CHECK_THROWS_AS(latent_step(z, Tensor({3}), 0.004), ShapeError);

  // k steps with persistent signs land exactly at k * eps for an exact eps.
  synthesis::LatentVector walk{Tensor({2}, {0.0, 0.0})};
  const double eps = 0.25;
  for (int k = 0; k < 7; ++k) walk = latent_step(walk, grad, eps);
  CHECK(walk.values[0] == 7 * 0.25);
  CHECK(walk.values.linf_norm() == 7 * 0.25);
}

TEST_CASE("noise_step: masking leaves other levels bit-identical") {
  synthesis::GeneratorConfig cfg;  // L=3 desk config
  synthesis::NoiseStack n = synthesis::sample_noise(3, cfg);
  std::vector<Tensor> grads;
  for (const Tensor& t : n.levels) grads.push_back(Tensor::full(t.shape(), 2.0));

  SUBCASE("mask {2}") {
    synthesis::NoiseStack out = noise_step(n, grads, 0.05, std::set<int>{2});
    CHECK(out.levels[0].max_abs_diff(n.levels[0]) == 0.0);
    CHECK(out.levels[2].max_abs_diff(n.levels[2]) == 0.0);
    for (std::size_t i = 0; i < out.levels[1].size(); ++i) {
      CHECK(out.levels[1][i] == n.levels[1][i] + 0.05);
    }
  }
  SUBCASE("no mask steps all levels") {
    synthesis::NoiseStack out = noise_step(n, grads, 0.05);
    for (int l = 0; l < 3; ++l) {
      CHECK(out.levels[l].max_abs_diff(n.levels[l]) == doctest::Approx(0.05).epsilon(1e-12));
    }
  }
  SUBCASE("invalid level") {
    CHECK_THROWS_AS(noise_step(n, grads, 0.05, std::set<int>{0}), ConfigError);
    CHECK_THROWS_AS(noise_step(n, grads, 0.05, std::set<int>{4}), ConfigError);
  }
}

TEST_CASE("projections: hand-constructed tensors") {
  SUBCASE("l2 rescale halves a 0.6-norm delta at eps 0.3") {
    Tensor delta({4}, {0.3, -0.3, 0.3, -0.3});  // ||delta||_2 = 0.6
    CHECK(delta.l2_norm() == doctest::Approx(0.6).epsilon(1e-15));
    Tensor projected = project_l2(delta, 0.3);
    CHECK(projected[0] == 0.15);
    CHECK(projected[1] == -0.15);
    CHECK(projected.l2_norm() == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("l2 leaves in-ball deltas untouched") {
    Tensor delta({2}, {0.1, 0.1});
    CHECK(project_l2(delta, 0.3).max_abs_diff(delta) == 0.0);
  }
  SUBCASE("linf clamp") {
    Tensor delta({3}, {0.5, -0.7, 0.1});
    Tensor projected = project_linf(delta, 0.3);
    CHECK(projected[0] == 0.3);
    CHECK(projected[1] == -0.3);
    CHECK(projected[2] == 0.1);
  }
}

TEST_CASE("fgsm: formula, clipping, zero gradient") {
  Rng rng(5);
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kSepConv, 9, 8);
  ImageTensor x = Tensor::full({3, 8, 8}, 0.9);

  ImageTensor out = fgsm_attack(det, x, 1, 0.3);

  // Independent recomputation of clip(x + eps*sign(grad)).
  Tensor g;
  det.loss_and_input_grad(x, 1, g);
  Tensor s = sign(g);
  bool saw_positive = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double expect = std::clamp(0.9 + 0.3 * s[i], 0.0, 1.0);
    CHECK(out[i] == expect);
    if (s[i] > 0) {
      CHECK(out[i] == 1.0);  // 0.9 + 0.3 clips to 1
      saw_positive = true;
    }
  }
  CHECK(saw_positive);
  CHECK((out - x).linf_norm() <= 0.3 + 1e-15);

  SUBCASE("zero-gradient detector leaves the image unchanged") {
    forensics::Detector zero = forensics::Detector::zero_init(forensics::Arch::kSepConv, 8);
    ImageTensor same = fgsm_attack(zero, x, 1, 0.3);
    CHECK(same.max_abs_diff(x) == 0.0);
  }
  SUBCASE("input validation") {
    ImageTensor bad = x;
    bad[0] = 1.5;
    CHECK_THROWS_AS(fgsm_attack(det, bad, 1, 0.3), DataError);
  }
}

TEST_CASE("pgd: budget safety on every iterate") {
  Rng rng(6);
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kBottleneck, 4, 8);
  ImageTensor x = random_image({3, 8, 8}, rng);

  for (NormKind norm : {NormKind::kLinf, NormKind::kL2}) {
    NormAttackConfig cfg = NormAttackConfig::pgd_defaults(norm);
    cfg.iters = 12;
    cfg.record_step_images = true;
    AttackResult res = pgd_attack({&det}, x, 1, cfg);
    REQUIRE(res.step_images.size() == 13);  // initial + 12 iterates
    for (const ImageTensor& xt : res.step_images) {
      CHECK(xt.min() >= 0.0);
      CHECK(xt.max() <= 1.0);
      Tensor delta = xt - x;
      if (norm == NormKind::kLinf) {
        CHECK(delta.linf_norm() <= 0.3 + 1e-12);
      } else {
        CHECK(delta.l2_norm() <= 0.3 + 1e-12);
      }
    }
    CHECK(res.p_fake_steps[0].size() == 13);
    if (norm == NormKind::kLinf) {
      CHECK(res.linf_perturbation <= 0.3 + 1e-12);
    } else {
      CHECK(res.l2_perturbation <= 0.3 + 1e-12);
    }
  }
}

TEST_CASE("pgd config validation") {
  NormAttackConfig cfg = NormAttackConfig::pgd_defaults(NormKind::kLinf);
  cfg.alpha = 0.4;  // alpha > eps_max
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NormAttackConfig::pgd_defaults(NormKind::kLinf);
  cfg.iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("ascent direction: directional derivative equals gradient l1 norm") {
  Rng rng(7);
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kSepConv, 13, 8);
  ImageTensor x = random_image({3, 8, 8}, rng);
  Tensor g;
  det.loss_and_input_grad(x, 1, g);
  double l1 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) l1 += std::fabs(g[i]);

  Tensor dir = sign(g);
  const double h = 1e-6;
  ImageTensor up = x, down = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    up[i] += h * dir[i];
    down[i] -= h * dir[i];
  }
  auto loss_of = [&](const ImageTensor& img) {
    Tensor tmp;
    return det.loss_and_input_grad(img, 1, tmp);
  };
  double fd = (loss_of(up) - loss_of(down)) / (2.0 * h);
  CHECK(fd == doctest::Approx(l1).epsilon(1e-3));
  CHECK(fd >= 0.0);
}

TEST_CASE("ensemble gradients: identities") {
  Rng rng(8);
  forensics::Detector da = forensics::Detector::random_init(forensics::Arch::kSepConv, 21, 8);
  forensics::Detector db = forensics::Detector::random_init(forensics::Arch::kBottleneck, 22, 8);
  ImageTensor x = random_image({3, 8, 8}, rng);
  const int y = 1;

  SUBCASE("loss-sum equals the sum of per-model gradients") {
    EnsembleConfig ens;
    ens.mode = EnsembleMode::kLossSum;
    Tensor combined = ensemble_gradient_image({&da, &db}, x, y, ens, 0);
    Tensor ga, gb;
    da.loss_and_input_grad(x, y, ga);
    db.loss_and_input_grad(x, y, gb);
    Tensor manual = Tensor::zeros(x.shape());
    manual += ga;
    manual += gb;
    CHECK(combined.max_abs_diff(manual) == 0.0);
  }
  SUBCASE("alternating follows the modular schedule") {
    EnsembleConfig ens;
    ens.mode = EnsembleMode::kAlternating;
    Tensor ga, gb;
    da.loss_and_input_grad(x, y, ga);
    db.loss_and_input_grad(x, y, gb);
    CHECK(ensemble_gradient_image({&da, &db}, x, y, ens, 0).max_abs_diff(ga) == 0.0);
    CHECK(ensemble_gradient_image({&da, &db}, x, y, ens, 1).max_abs_diff(gb) == 0.0);
    CHECK(ensemble_gradient_image({&da, &db}, x, y, ens, 2).max_abs_diff(ga) == 0.0);
  }
  SUBCASE("duplicated model under logit fusion reduces to the single model") {
    EnsembleConfig ens;
    ens.mode = EnsembleMode::kLogitFusion;
    ens.weights = {0.5, 0.5};
    Tensor fused = ensemble_gradient_image({&da, &da}, x, y, ens, 0);
    Tensor single;
    da.loss_and_input_grad(x, y, single);
    CHECK(fused.max_abs_diff(single) == 0.0);
  }
  SUBCASE("config validation") {
    EnsembleConfig ens;
    CHECK_THROWS_AS(ensemble_gradient_image({}, x, y, ens, 0), ConfigError);
    ens.mode = EnsembleMode::kLogitFusion;
    ens.weights = {0.6, 0.6};
    CHECK_THROWS_AS(ens.validate(2), ConfigError);
    ens.weights = {-0.5, 1.5};
    CHECK_THROWS_AS(ens.validate(2), ConfigError);
    ens.weights = {0.7, 0.3};
    CHECK_NOTHROW(ens.validate(2));
  }
}

TEST_CASE("manifold attack: vacuous success leaves the image unchanged") {
  synthesis::GeneratorConfig gcfg = tiny_gen_config();
  synthesis::Generator gen = synthesis::Generator::random_init(gcfg, 31);
  auto z = synthesis::sample_latent(1, gcfg.d_z);
  auto n = synthesis::sample_noise(2, gcfg);

  forensics::Detector fooled = biased_detector(forensics::Arch::kSepConv, -10.0, 41);
  ManifoldAttackConfig cfg;
  cfg.stop_on_success = true;
  AttackResult res = manifold_attack(gen, {&fooled}, z, n, cfg);
  CHECK(res.success);
  CHECK(res.success_step == 0);
  CHECK(res.final_image.max_abs_diff(res.initial_image) == 0.0);
  CHECK(res.final_z.values.max_abs_diff(z.values) == 0.0);
}

TEST_CASE("manifold attack: zero step sizes freeze the iterates") {
  synthesis::GeneratorConfig gcfg = tiny_gen_config();
  synthesis::Generator gen = synthesis::Generator::random_init(gcfg, 32);
  auto z = synthesis::sample_latent(3, gcfg.d_z);
  auto n = synthesis::sample_noise(4, gcfg);
  forensics::Detector det = biased_detector(forensics::Arch::kSepConv, 10.0, 42);  // never fooled

  ManifoldAttackConfig cfg;
  cfg.eps_latent = 0.0;
  cfg.eps_noise = 0.0;
  cfg.max_iters = 4;
  cfg.stop_on_success = false;
  AttackResult res = manifold_attack(gen, {&det}, z, n, cfg);
  CHECK_FALSE(res.success);
  CHECK(res.final_z.values.max_abs_diff(z.values) == 0.0);
  for (std::size_t l = 0; l < n.levels.size(); ++l) {
    CHECK(res.final_noise.levels[l].max_abs_diff(n.levels[l]) == 0.0);
  }
  CHECK(res.p_fake_steps[0].size() == 5);
}

TEST_CASE("manifold attack: per-level masking and frozen models") {
  synthesis::GeneratorConfig gcfg = tiny_gen_config();
  synthesis::Generator gen = synthesis::Generator::random_init(gcfg, 33);
  auto z = synthesis::sample_latent(5, gcfg.d_z);
  auto n = synthesis::sample_noise(6, gcfg);
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kBottleneck, 43, 8);

  std::uint64_t gen_sum = gen.checksum();
  std::uint64_t det_sum = det.checksum();

  ManifoldAttackConfig cfg;
  cfg.strategy = ManifoldStrategy::kNoiseLevel;
  cfg.noise_level = 2;
  cfg.max_iters = 3;
  cfg.stop_on_success = false;
  AttackResult res = manifold_attack(gen, {&det}, z, n, cfg);

  CHECK(res.final_noise.levels[0].max_abs_diff(n.levels[0]) == 0.0);
  CHECK(res.final_noise.levels[2].max_abs_diff(n.levels[2]) == 0.0);
  CHECK(res.final_z.values.max_abs_diff(z.values) == 0.0);  // latent untouched
  CHECK(res.final_noise.levels[1].max_abs_diff(n.levels[1]) > 0.0);

  CHECK(gen.checksum() == gen_sum);
  CHECK(det.checksum() == det_sum);

  SUBCASE("invalid level") {
    cfg.noise_level = 5;
    CHECK_THROWS_AS(manifold_attack(gen, {&det}, z, n, cfg), ConfigError);
  }
  SUBCASE("multiple detectors need an ensemble config") {
    forensics::Detector d2 = forensics::Detector::random_init(forensics::Arch::kSepConv, 44, 8);
    cfg.noise_level = 1;
    CHECK_THROWS_AS(manifold_attack(gen, {&det, &d2}, z, n, cfg), ConfigError);
  }
}

TEST_CASE("attacks are deterministic") {
  synthesis::GeneratorConfig gcfg = tiny_gen_config();
  synthesis::Generator gen = synthesis::Generator::random_init(gcfg, 34);
  auto z = synthesis::sample_latent(7, gcfg.d_z);
  auto n = synthesis::sample_noise(8, gcfg);
  forensics::Detector det = forensics::Detector::random_init(forensics::Arch::kSepConv, 45, 8);

  ManifoldAttackConfig cfg;
  cfg.max_iters = 5;
  cfg.stop_on_success = false;
  AttackResult r1 = manifold_attack(gen, {&det}, z, n, cfg);
  AttackResult r2 = manifold_attack(gen, {&det}, z, n, cfg);
  CHECK(r1.final_image.max_abs_diff(r2.final_image) == 0.0);
  CHECK(r1.p_fake_steps == r2.p_fake_steps);

  Rng rng(9);
  ImageTensor x = random_image({3, 8, 8}, rng);
  NormAttackConfig ncfg = NormAttackConfig::pgd_defaults(NormKind::kLinf);
  ncfg.iters = 6;
  AttackResult p1 = pgd_attack({&det}, x, 1, ncfg);
  AttackResult p2 = pgd_attack({&det}, x, 1, ncfg);
  CHECK(p1.final_image.max_abs_diff(p2.final_image) == 0.0);
}
