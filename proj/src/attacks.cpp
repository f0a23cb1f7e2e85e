#include "madv/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "madv/nn.hpp"
#include "madv/rng.hpp"

namespace madv::attacks {

Tensor sign(const Tensor& v) {
  Tensor s = v;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = (s[i] > 0.0) ? 1.0 : (s[i] < 0.0 ? -1.0 : 0.0);
  }
  return s;
}

Tensor project_linf(Tensor delta, double eps) {
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(delta[i], -eps, eps);
  return delta;
}

Tensor project_l2(Tensor delta, double eps) {
  double norm = delta.l2_norm();
  if (norm > eps) delta *= eps / norm;
  return delta;
}

synthesis::LatentVector latent_step(const synthesis::LatentVector& z, const Tensor& grad_z,
                                    double eps1) {
  require_same_shape(z.values, grad_z, "latent_step");
  Tensor s = sign(grad_z);
  Tensor out = z.values;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps1 * s[i];
  return synthesis::LatentVector{std::move(out)};
}

synthesis::NoiseStack noise_step(const synthesis::NoiseStack& noise,
                                 const std::vector<Tensor>& grad_noise, double eps2,
                                 const std::optional<std::set<int>>& level_mask) {
  const int levels = static_cast<int>(noise.levels.size());
  if (static_cast<int>(grad_noise.size()) != levels) {
    throw ShapeError("noise_step: gradient stack has " + std::to_string(grad_noise.size()) +
                     " levels, noise has " + std::to_string(levels));
  }
  if (level_mask) {
    for (int l : *level_mask) {
      if (l < 1 || l > levels) {
        throw ConfigError("noise_step: level " + std::to_string(l) + " outside 1.." +
                          std::to_string(levels));
      }
    }
  }
  synthesis::NoiseStack out;
  out.levels.reserve(static_cast<std::size_t>(levels));
  for (int l = 1; l <= levels; ++l) {
    const Tensor& n = noise.levels[static_cast<std::size_t>(l - 1)];
    if (level_mask && level_mask->count(l) == 0) {
      out.levels.push_back(n);
      continue;
    }
    const Tensor& g = grad_noise[static_cast<std::size_t>(l - 1)];
    require_same_shape(n, g, "noise_step");
    Tensor s = sign(g);
    Tensor stepped = n;
    for (std::size_t i = 0; i < stepped.size(); ++i) stepped[i] += eps2 * s[i];
    out.levels.push_back(std::move(stepped));
  }
  return out;
}

void ManifoldAttackConfig::validate(int generator_levels) const {
  // Zero steps are legal and freeze the iterates; negatives are not.
  if (eps_latent < 0.0 || eps_noise < 0.0) {
    throw ConfigError("manifold attack: step sizes must be nonnegative");
  }
  if (max_iters < 1) throw ConfigError("manifold attack: max_iters must be >= 1");
  if (strategy == ManifoldStrategy::kNoiseLevel &&
      (noise_level < 1 || noise_level > generator_levels)) {
    throw ConfigError("manifold attack: noise level " + std::to_string(noise_level) +
                      " outside 1.." + std::to_string(generator_levels));
  }
}

std::vector<double> EnsembleConfig::effective_weights(std::size_t n_models) const {
  if (weights.empty()) {
    double w = mode == EnsembleMode::kLogitFusion ? 1.0 / static_cast<double>(n_models) : 1.0;
    return std::vector<double>(n_models, w);
  }
  return weights;
}

void EnsembleConfig::validate(std::size_t n_models) const {
  if (n_models == 0) throw ConfigError("ensemble: empty model list");
  if (weights.empty()) return;
  if (weights.size() != n_models) {
    throw ConfigError("ensemble: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(n_models) + " models");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw ConfigError("ensemble: weights must be positive");
    sum += w;
  }
  if (mode == EnsembleMode::kLogitFusion && std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("ensemble: logit-fusion weights must sum to 1");
  }
}

NormAttackConfig NormAttackConfig::pgd_defaults(NormKind norm_kind) {
  NormAttackConfig cfg;
  cfg.method = NormMethod::kPgd;
  cfg.norm = norm_kind;
  cfg.eps_max = 0.3;
  cfg.alpha = 0.01;
  cfg.iters = 40;
  return cfg;
}

NormAttackConfig NormAttackConfig::fgsm_defaults() {
  NormAttackConfig cfg;
  cfg.method = NormMethod::kFgsm;
  cfg.norm = NormKind::kLinf;
  cfg.eps_max = 0.3;
  cfg.alpha = 0.3;
  cfg.iters = 1;
  return cfg;
}

void NormAttackConfig::validate() const {
  if (eps_max <= 0.0) throw ConfigError("norm attack: eps_max must be positive");
  if (alpha <= 0.0 || alpha > eps_max) {
    throw ConfigError("norm attack: require 0 < alpha <= eps_max");
  }
  if (iters < 1) throw ConfigError("norm attack: iters must be >= 1");
}

Tensor ensemble_gradient_image(const std::vector<const forensics::Detector*>& models,
                               const ImageTensor& image, int y, const EnsembleConfig& ens,
                               int step_index, double* loss_out) {
  ens.validate(models.size());
  std::vector<double> w = ens.effective_weights(models.size());
  Tensor grad = Tensor::zeros(image.shape());
  double loss = 0.0;

  switch (ens.mode) {
    case EnsembleMode::kLossSum: {
      for (std::size_t m = 0; m < models.size(); ++m) {
        forensics::BinaryConvNet::Forward cache;
        double logit = models[m]->net().logit(image, &cache);
        double p = nn::sigmoid(logit);
        loss += w[m] * forensics::bce_loss(p, y);
        grad += models[m]->net().input_grad(cache, w[m] * (p - static_cast<double>(y)), nullptr);
      }
      break;
    }
    case EnsembleMode::kLogitFusion: {
      std::vector<forensics::BinaryConvNet::Forward> caches(models.size());
      double fused = 0.0;
      for (std::size_t m = 0; m < models.size(); ++m) {
        fused += w[m] * models[m]->net().logit(image, &caches[m]);
      }
      double p = nn::sigmoid(fused);
      loss = forensics::bce_loss(p, y);
      double g_fused = p - static_cast<double>(y);
      for (std::size_t m = 0; m < models.size(); ++m) {
        grad += models[m]->net().input_grad(caches[m], g_fused * w[m], nullptr);
      }
      break;
    }
    case EnsembleMode::kAlternating: {
      std::size_t m = static_cast<std::size_t>(step_index) % models.size();
      forensics::BinaryConvNet::Forward cache;
      double logit = models[m]->net().logit(image, &cache);
      double p = nn::sigmoid(logit);
      loss = forensics::bce_loss(p, y);
      grad = models[m]->net().input_grad(cache, p - static_cast<double>(y), nullptr);
      break;
    }
  }
  if (loss_out) *loss_out = loss;
  return grad;
}

namespace {

std::vector<double> detector_probs(const std::vector<const forensics::Detector*>& detectors,
                                   const ImageTensor& image) {
  std::vector<double> p;
  p.reserve(detectors.size());
  for (const auto* d : detectors) p.push_back(d->predict(image).p_fake);
  return p;
}

bool all_fooled(const std::vector<double>& probs) {
  for (double p : probs) {
    if (p >= 0.5) return false;
  }
  return true;
}

void record_step(AttackResult& res, const std::vector<double>& probs) {
  for (std::size_t m = 0; m < probs.size(); ++m) res.p_fake_steps[m].push_back(probs[m]);
}

}  // namespace

AttackResult manifold_attack(const synthesis::Generator& generator,
                             const std::vector<const forensics::Detector*>& detectors,
                             const synthesis::LatentVector& z0, const synthesis::NoiseStack& n0,
                             const ManifoldAttackConfig& cfg,
                             const std::optional<EnsembleConfig>& ens) {
  cfg.validate(generator.config().levels);
  if (detectors.empty()) throw ConfigError("manifold_attack: no detectors");
  if (detectors.size() > 1 && !ens.has_value()) {
    throw ConfigError("manifold_attack: multiple detectors require an ensemble config");
  }
  EnsembleConfig ens_cfg = ens.value_or(EnsembleConfig{});
  ens_cfg.validate(detectors.size());

  std::optional<std::set<int>> mask;
  bool step_latent = cfg.strategy == ManifoldStrategy::kLatent ||
                     cfg.strategy == ManifoldStrategy::kLatentNoise;
  bool step_noise = cfg.strategy != ManifoldStrategy::kLatent;
  if (cfg.strategy == ManifoldStrategy::kNoiseLevel) {
    mask = std::set<int>{cfg.noise_level};
  }

  AttackResult res;
  res.p_fake_steps.resize(detectors.size());
  res.initial_z = z0;
  res.initial_noise = n0;

  synthesis::LatentVector z = z0;
  synthesis::NoiseStack noise = n0;

  synthesis::Generator::Forward cache;
  ImageTensor image = generator.forward(z, noise, cache);
  res.initial_image = image;
  if (cfg.record_step_images) res.step_images.push_back(image);

  std::vector<double> probs = detector_probs(detectors, image);
  record_step(res, probs);
  if (all_fooled(probs)) {
    res.success = true;
    res.success_step = 0;
  }

  int y = cfg.target_label;
  for (int t = 1; t <= cfg.max_iters && !(res.success && cfg.stop_on_success); ++t) {
    // Ensemble objective gradient with respect to the current image.
    double loss = 0.0;
    Tensor g_image = ensemble_gradient_image(detectors, image, y, ens_cfg, t - 1, &loss);
    synthesis::InputGradients grads = generator.backward(cache, g_image, nullptr);

    if (step_latent) z = latent_step(z, grads.z, cfg.eps_latent);
    if (step_noise) noise = noise_step(noise, grads.noise, cfg.eps_noise, mask);

    image = generator.forward(z, noise, cache);
    if (cfg.record_step_images) res.step_images.push_back(image);
    probs = detector_probs(detectors, image);
    record_step(res, probs);
    if (!res.success && all_fooled(probs)) {
      res.success = true;
      res.success_step = t;
    }
  }

  res.final_z = std::move(z);
  res.final_noise = std::move(noise);
  res.final_image = std::move(image);
  res.final_p_fake = std::move(probs);
  return res;
}

ImageTensor fgsm_attack(const forensics::Detector& detector, const ImageTensor& x, int y,
                        double eps_max) {
  if (x.min() < 0.0 || x.max() > 1.0) throw DataError("fgsm_attack: image outside [0,1]");
  Tensor g;
  detector.loss_and_input_grad(x, y, g);
  Tensor s = sign(g);
  ImageTensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i] + eps_max * s[i], 0.0, 1.0);
  }
  return out;
}

AttackResult pgd_attack(const std::vector<const forensics::Detector*>& detectors,
                        const ImageTensor& x, int y, const NormAttackConfig& cfg,
                        const std::optional<EnsembleConfig>& ens) {
  cfg.validate();
  if (detectors.empty()) throw ConfigError("pgd_attack: no detectors");
  if (detectors.size() > 1 && !ens.has_value()) {
    throw ConfigError("pgd_attack: multiple detectors require an ensemble config");
  }
  if (x.min() < 0.0 || x.max() > 1.0) throw DataError("pgd_attack: image outside [0,1]");
  EnsembleConfig ens_cfg = ens.value_or(EnsembleConfig{});
  ens_cfg.validate(detectors.size());

  AttackResult res;
  res.p_fake_steps.resize(detectors.size());
  res.initial_image = x;

  ImageTensor xt = x;
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < xt.size(); ++i) {
      xt[i] = std::clamp(xt[i] + rng.uniform(-cfg.eps_max, cfg.eps_max), 0.0, 1.0);
    }
    if (cfg.norm == NormKind::kL2) {
      Tensor delta = xt - x;
      double norm = delta.l2_norm();
      if (norm > cfg.eps_max) {
        delta *= cfg.eps_max / norm;
        xt = x + delta;
      }
    }
  }
  if (cfg.record_step_images) res.step_images.push_back(xt);

  std::vector<double> probs = detector_probs(detectors, xt);
  record_step(res, probs);
  if (all_fooled(probs)) {
    res.success = true;
    res.success_step = 0;
  }

  const int iters = cfg.method == NormMethod::kFgsm ? 1 : cfg.iters;
  const double step = cfg.method == NormMethod::kFgsm ? cfg.eps_max : cfg.alpha;
  for (int t = 1; t <= iters; ++t) {
    Tensor g = ensemble_gradient_image(detectors, xt, y, ens_cfg, t - 1, nullptr);
    if (cfg.norm == NormKind::kLinf) {
      Tensor s = sign(g);
      for (std::size_t i = 0; i < xt.size(); ++i) xt[i] += step * s[i];
    } else {
      double norm = g.l2_norm();
      double scale = step / std::max(norm, 1e-12);
      for (std::size_t i = 0; i < xt.size(); ++i) xt[i] += scale * g[i];
    }
    // Project the cumulative perturbation, then clip pixels.
    Tensor delta = cfg.norm == NormKind::kLinf ? project_linf(xt - x, cfg.eps_max)
                                               : project_l2(xt - x, cfg.eps_max);
    for (std::size_t i = 0; i < xt.size(); ++i) {
      xt[i] = std::clamp(x[i] + delta[i], 0.0, 1.0);
    }

    if (cfg.record_step_images) res.step_images.push_back(xt);
    probs = detector_probs(detectors, xt);
    record_step(res, probs);
    if (!res.success && all_fooled(probs)) {
      res.success = true;
      res.success_step = t;
    }
  }

  Tensor delta = xt - x;
  res.linf_perturbation = delta.linf_norm();
  res.l2_perturbation = delta.l2_norm();
  res.final_image = std::move(xt);
  res.final_p_fake = std::move(probs);
  return res;
}

}  // namespace madv::attacks
