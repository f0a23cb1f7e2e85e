#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "madv/forensics.hpp"
#include "madv/synthesis.hpp"
#include "madv/tensor.hpp"

namespace madv::attacks {

/// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& v);

/// Coordinatewise clamp of a perturbation to [-eps, eps].
Tensor project_linf(Tensor delta, double eps);

/// Radial rescale delta * min(1, eps / ||delta||_2).
Tensor project_l2(Tensor delta, double eps);

/// z' = z + eps1 * sign(grad_z). Latent space is unconstrained; no clipping.
synthesis::LatentVector latent_step(const synthesis::LatentVector& z, const Tensor& grad_z,
                                    double eps1);

/// n' = n + eps2 * sign(grad_n) on masked levels; unmasked levels are
/// bit-identical copies. Levels are 1-based; empty mask = all levels.
synthesis::NoiseStack noise_step(const synthesis::NoiseStack& noise,
                                 const std::vector<Tensor>& grad_noise, double eps2,
                                 const std::optional<std::set<int>>& level_mask = {});

enum class ManifoldStrategy { kLatent, kNoise, kLatentNoise, kNoiseLevel };

struct ManifoldAttackConfig {
  ManifoldStrategy strategy = ManifoldStrategy::kLatentNoise;
  int noise_level = 1;  // only for kNoiseLevel, 1-based
  double eps_latent = 0.004;
  double eps_noise = 0.05;
  int max_iters = 10;
  bool stop_on_success = true;
  int target_label = 1;  // y: always fake
  std::uint64_t seed = 0;
  bool record_step_images = false;

  void validate(int generator_levels) const;
};

enum class EnsembleMode { kLossSum, kLogitFusion, kAlternating };

struct EnsembleConfig {
  EnsembleMode mode = EnsembleMode::kLossSum;
  std::vector<double> weights;  // empty = defaults (uniform)

  /// Effective per-model weights after defaulting.
  std::vector<double> effective_weights(std::size_t n_models) const;
  void validate(std::size_t n_models) const;
};

enum class NormMethod { kFgsm, kPgd };
enum class NormKind { kLinf, kL2 };

struct NormAttackConfig {
  NormMethod method = NormMethod::kPgd;
  NormKind norm = NormKind::kLinf;
  double eps_max = 0.3;
  double alpha = 0.01;
  int iters = 40;
  bool random_start = false;
  std::uint64_t seed = 0;
  bool record_step_images = false;

  static NormAttackConfig pgd_defaults(NormKind norm);
  static NormAttackConfig fgsm_defaults();
  void validate() const;
};

/// Per-image attack trajectory. p_fake_steps[m][t] is detector m's fake
/// probability after t update steps (t = 0 is the unattacked input).
struct AttackResult {
  bool success = false;
  std::optional<int> success_step;
  ImageTensor initial_image;
  ImageTensor final_image;
  synthesis::LatentVector initial_z, final_z;    // manifold attacks only
  synthesis::NoiseStack initial_noise, final_noise;
  std::vector<std::vector<double>> p_fake_steps;
  std::vector<double> final_p_fake;
  double linf_perturbation = 0.0;  // pixel attacks only
  double l2_perturbation = 0.0;
  std::vector<ImageTensor> step_images;
};

/// Gradient of the ensemble objective with respect to the image:
///   loss-sum:      sum_m J_m
///   logit-fusion:  bce(sigmoid(sum_m w_m * logit_m), y)
///   alternating:   J_{models[step_index mod M]}
Tensor ensemble_gradient_image(const std::vector<const forensics::Detector*>& models,
                               const ImageTensor& image, int y, const EnsembleConfig& ens,
                               int step_index, double* loss_out = nullptr);

/// Sign-gradient ascent on J(g(z,n), y=fake) over the configured subset of
/// (z, noise). Success: every targeted detector reports p_fake < 0.5.
AttackResult manifold_attack(const synthesis::Generator& generator,
                             const std::vector<const forensics::Detector*>& detectors,
                             const synthesis::LatentVector& z0, const synthesis::NoiseStack& n0,
                             const ManifoldAttackConfig& cfg,
                             const std::optional<EnsembleConfig>& ens = {});

/// Single sign step of size eps_max on pixels, clipped to [0,1].
ImageTensor fgsm_attack(const forensics::Detector& detector, const ImageTensor& x, int y,
                        double eps_max);

/// Iterative sign (l_inf) or normalized-gradient (l2) ascent with per-step
/// projection onto the eps_max ball and pixel clipping.
AttackResult pgd_attack(const std::vector<const forensics::Detector*>& detectors,
                        const ImageTensor& x, int y, const NormAttackConfig& cfg,
                        const std::optional<EnsembleConfig>& ens = {});

}  // namespace madv::attacks
