#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "madv/nn.hpp"
#include "madv/rng.hpp"
#include "madv/tensor.hpp"

namespace madv {

/// C x H x W image with pixels in [0,1].
using ImageTensor = Tensor;

namespace synthesis {

/// Generator input z, sampled from a standard Gaussian.
struct LatentVector {
  Tensor values;  // {d_z}
};

/// Intermediate style vector w produced by the mapping network.
struct StyleVector {
  Tensor values;  // {d_w}
};

/// Per-level noise tensors; level index increases with spatial resolution.
struct NoiseStack {
  std::vector<Tensor> levels;  // level l has shape {1, h_l, w_l}
};

struct GeneratorConfig {
  int d_z = 64;
  int d_w = 64;
  int mapping_depth = 3;  // 0 = pass-through (requires d_w == d_z)
  int levels = 3;
  int base_resolution = 8;  // level l runs at base_resolution << (l-1)
  int out_channels = 3;
  std::vector<int> features = {24, 16, 12};  // per-level channel widths
  double lrelu_slope = 0.2;

  void validate() const;
  int level_resolution(int level) const;  // 1-based
  int output_resolution() const { return level_resolution(levels); }
};

/// One synthesis level: conv, additive per-channel-gain noise injection, and
/// style modulation derived from w.
struct LevelParams {
  Tensor conv_w;      // {C_l, C_{l-1}, 3, 3}
  Tensor conv_b;      // {C_l}
  Tensor style_w;     // {2*C_l, d_w}: rows 0..C-1 scale, C..2C-1 shift
  Tensor style_b;     // {2*C_l}
  Tensor noise_gain;  // {C_l}
};

struct GeneratorParams {
  GeneratorConfig config;
  std::vector<Tensor> mapping_w;  // each {d_w, d_in}
  std::vector<Tensor> mapping_b;  // each {d_w}
  Tensor const_input;             // {C_1, base, base}
  std::vector<LevelParams> levels;
  Tensor rgb_w;  // {out_channels, C_L, 1, 1}
  Tensor rgb_b;  // {out_channels}

  template <typename Fn>
  void for_each_tensor(Fn&& fn);
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const;
};

/// Result of a loss head applied to an image. A head without a gradient is
/// treated as non-differentiable.
struct HeadResult {
  double loss = 0.0;
  std::optional<Tensor> image_grad;
};
using LossHead = std::function<HeadResult(const ImageTensor&)>;

struct InputGradients {
  Tensor z;                   // {d_z}
  std::vector<Tensor> noise;  // NoiseStack-shaped
  double loss = 0.0;
};

/// Style-based toy generator: mapping network -> per-level synthesis with
/// noise injection -> sigmoid-bounded RGB output. Parameters are read-only
/// after construction; generate/input_gradients are safe to call concurrently.
class Generator {
 public:
  Generator() = default;
  explicit Generator(GeneratorParams params);

  static Generator random_init(const GeneratorConfig& config, std::uint64_t seed);
  static Generator zero_init(const GeneratorConfig& config);

  const GeneratorConfig& config() const { return params_.config; }
  const GeneratorParams& params() const { return params_; }

  StyleVector map_latent(const LatentVector& z) const;
  ImageTensor synthesize(const StyleVector& w, const NoiseStack& noise) const;
  ImageTensor generate(const LatentVector& z, const NoiseStack& noise) const;

  /// Cached activations of one forward pass, consumed by backward().
  struct Forward;

  ImageTensor forward(const LatentVector& z, const NoiseStack& noise, Forward& cache) const;

  /// Backpropagates d(loss)/d(image) to the inputs; accumulates parameter
  /// gradients into `param_grads` when non-null (training path).
  InputGradients backward(const Forward& cache, const Tensor& g_image,
                          GeneratorParams* param_grads) const;

  /// Exact derivatives of head(generate(z, noise)) with respect to z and
  /// every noise tensor. Generator parameters are untouched.
  InputGradients input_gradients(const LatentVector& z, const NoiseStack& noise,
                                 const LossHead& head) const;

  std::uint64_t checksum() const;

  std::vector<Tensor*> parameter_list();
  std::vector<const Tensor*> parameter_list() const;

 private:
  GeneratorParams params_;
};

struct Generator::Forward {
  Tensor z;
  std::vector<Tensor> noise;
  std::vector<Tensor> map_in;   // input to each mapping layer
  std::vector<Tensor> map_pre;  // dense output, pre-activation
  Tensor w;
  std::vector<Tensor> x_in;   // conv input per level
  std::vector<Tensor> x_mid;  // conv output + noise, pre-modulation
  std::vector<Tensor> style;  // {2C} affine output per level
  std::vector<Tensor> x_pre;  // post-modulation, pre-activation
  std::vector<Tensor> x_out;  // post-activation
  Tensor image;
};

/// d_z i.i.d. standard normal draws; deterministic per seed.
LatentVector sample_latent(std::uint64_t seed, int d_z);

/// Standard-normal noise tensors matching the generator's level resolutions.
NoiseStack sample_noise(std::uint64_t seed, const GeneratorConfig& config);

template <typename Fn>
void GeneratorParams::for_each_tensor(Fn&& fn) {
  for (std::size_t i = 0; i < mapping_w.size(); ++i) {
    fn("mapping_w" + std::to_string(i), mapping_w[i]);
    fn("mapping_b" + std::to_string(i), mapping_b[i]);
  }
  fn("const_input", const_input);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::string p = "level" + std::to_string(l + 1) + ".";
    fn(p + "conv_w", levels[l].conv_w);
    fn(p + "conv_b", levels[l].conv_b);
    fn(p + "style_w", levels[l].style_w);
    fn(p + "style_b", levels[l].style_b);
    fn(p + "noise_gain", levels[l].noise_gain);
  }
  fn("rgb_w", rgb_w);
  fn("rgb_b", rgb_b);
}

template <typename Fn>
void GeneratorParams::for_each_tensor(Fn&& fn) const {
  const_cast<GeneratorParams*>(this)->for_each_tensor(
      [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

}  // namespace synthesis
}  // namespace madv
