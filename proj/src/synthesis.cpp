#include "madv/synthesis.hpp"

#include <cmath>
#include <string>

namespace madv::synthesis {

void GeneratorConfig::validate() const {
  if (d_z < 1) throw ConfigError("generator config: d_z must be >= 1, got " + std::to_string(d_z));
  if (d_w < 1) throw ConfigError("generator config: d_w must be >= 1");
  if (mapping_depth < 0) throw ConfigError("generator config: mapping_depth must be >= 0");
  if (mapping_depth == 0 && d_w != d_z) {
    throw ConfigError("generator config: pass-through mapping requires d_w == d_z");
  }
  if (levels < 1) throw ConfigError("generator config: levels must be >= 1");
  if (static_cast<int>(features.size()) != levels) {
    throw ConfigError("generator config: features must list one channel width per level");
  }
  for (int f : features) {
    if (f < 1) throw ConfigError("generator config: channel widths must be positive");
  }
  if (base_resolution < 1) throw ConfigError("generator config: base_resolution must be >= 1");
  if (out_channels < 1) throw ConfigError("generator config: out_channels must be >= 1");
}

int GeneratorConfig::level_resolution(int level) const {
  return base_resolution << (level - 1);
}

Generator::Generator(GeneratorParams params) : params_(std::move(params)) {
  params_.config.validate();
}

Generator Generator::zero_init(const GeneratorConfig& config) {
  config.validate();
  GeneratorParams p;
  p.config = config;
  std::size_t dw = static_cast<std::size_t>(config.d_w);
  std::size_t din = static_cast<std::size_t>(config.d_z);
  for (int i = 0; i < config.mapping_depth; ++i) {
    p.mapping_w.push_back(Tensor::zeros({dw, din}));
    p.mapping_b.push_back(Tensor::zeros({dw}));
    din = dw;
  }
  std::size_t base = static_cast<std::size_t>(config.base_resolution);
  std::size_t c_prev = static_cast<std::size_t>(config.features[0]);
  p.const_input = Tensor::zeros({c_prev, base, base});
  for (int l = 0; l < config.levels; ++l) {
    std::size_t c = static_cast<std::size_t>(config.features[l]);
    LevelParams lp;
    lp.conv_w = Tensor::zeros({c, c_prev, 3, 3});
    lp.conv_b = Tensor::zeros({c});
    lp.style_w = Tensor::zeros({2 * c, dw});
    lp.style_b = Tensor::zeros({2 * c});
    lp.noise_gain = Tensor::zeros({c});
    p.levels.push_back(std::move(lp));
    c_prev = c;
  }
  p.rgb_w = Tensor::zeros({static_cast<std::size_t>(config.out_channels), c_prev, 1, 1});
  p.rgb_b = Tensor::zeros({static_cast<std::size_t>(config.out_channels)});
  return Generator(std::move(p));
}

Generator Generator::random_init(const GeneratorConfig& config, std::uint64_t seed) {
  Generator g = zero_init(config);
  Rng rng(seed);
  const double gain = std::sqrt(2.0);
  GeneratorParams& p = g.params_;
  std::size_t din = static_cast<std::size_t>(config.d_z);
  for (std::size_t i = 0; i < p.mapping_w.size(); ++i) {
    p.mapping_w[i] = nn::normal_init(p.mapping_w[i].shape(), din, rng, gain);
    din = p.mapping_w[i].dim(0);
  }
  for (std::size_t i = 0; i < p.const_input.size(); ++i) p.const_input[i] = rng.normal();
  std::size_t c_prev = static_cast<std::size_t>(config.features[0]);
  for (auto& lp : p.levels) {
    lp.conv_w = nn::normal_init(lp.conv_w.shape(), c_prev * 9, rng, gain);
    // Style affine starts small so modulation begins near identity.
    lp.style_w =
        nn::normal_init(lp.style_w.shape(), static_cast<std::size_t>(config.d_w), rng, 0.25);
    // Positive gains keep the noise path alive from the first training step.
    for (std::size_t i = 0; i < lp.noise_gain.size(); ++i) {
      lp.noise_gain[i] = 0.1 + 0.05 * rng.normal();
    }
    c_prev = lp.conv_w.dim(0);
  }
  p.rgb_w = nn::normal_init(p.rgb_w.shape(), c_prev, rng, 1.0);
  return g;
}

StyleVector Generator::map_latent(const LatentVector& z) const {
  const auto& cfg = params_.config;
  if (z.values.rank() != 1 || z.values.dim(0) != static_cast<std::size_t>(cfg.d_z)) {
    throw ShapeError("map_latent: latent shape " + z.values.shape_str() + ", want (" +
                     std::to_string(cfg.d_z) + ")");
  }
  Tensor h = z.values;
  for (std::size_t i = 0; i < params_.mapping_w.size(); ++i) {
    h = nn::leaky_relu(nn::dense(h, params_.mapping_w[i], params_.mapping_b[i]), cfg.lrelu_slope);
  }
  return StyleVector{std::move(h)};
}

namespace {

void check_noise(const GeneratorConfig& cfg, const NoiseStack& noise) {
  if (static_cast<int>(noise.levels.size()) != cfg.levels) {
    throw ShapeError("synthesize: noise stack has " + std::to_string(noise.levels.size()) +
                     " levels, generator expects " + std::to_string(cfg.levels));
  }
  for (int l = 0; l < cfg.levels; ++l) {
    std::size_t r = static_cast<std::size_t>(cfg.level_resolution(l + 1));
    const Tensor& n = noise.levels[static_cast<std::size_t>(l)];
    if (n.rank() != 3 || n.dim(0) != 1 || n.dim(1) != r || n.dim(2) != r) {
      throw ShapeError("synthesize: noise level " + std::to_string(l + 1) + " has shape " +
                       n.shape_str() + ", want (1," + std::to_string(r) + "," + std::to_string(r) +
                       ")");
    }
  }
}

// x_mid = conv_out + gain[c] * noise, then x_pre = x_mid*(1+s[c]) + t[c].
Tensor apply_noise_and_style(const Tensor& conv_out, const Tensor& noise, const Tensor& gain,
                             const Tensor& style, Tensor* x_mid_out) {
  const std::size_t c = conv_out.dim(0), h = conv_out.dim(1), w = conv_out.dim(2);
  Tensor mid = conv_out;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double g = gain[ch];
    double* row = mid.data() + ch * h * w;
    const double* nrow = noise.data();
    for (std::size_t i = 0; i < h * w; ++i) row[i] += g * nrow[i];
  }
  Tensor pre = mid;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double scale = 1.0 + style[ch];
    double shift = style[c + ch];
    double* row = pre.data() + ch * h * w;
    for (std::size_t i = 0; i < h * w; ++i) row[i] = row[i] * scale + shift;
  }
  if (x_mid_out) *x_mid_out = std::move(mid);
  return pre;
}

}  // namespace

ImageTensor Generator::synthesize(const StyleVector& w, const NoiseStack& noise) const {
  const auto& cfg = params_.config;
  if (w.values.rank() != 1 || w.values.dim(0) != static_cast<std::size_t>(cfg.d_w)) {
    throw ShapeError("synthesize: style shape " + w.values.shape_str() + ", want (" +
                     std::to_string(cfg.d_w) + ")");
  }
  check_noise(cfg, noise);
  Tensor x = params_.const_input;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelParams& lp = params_.levels[static_cast<std::size_t>(l)];
    if (l > 0) x = nn::upsample2x(x);
    x = nn::conv2d(x, lp.conv_w, lp.conv_b, 1, 1);
    Tensor style = nn::dense(w.values, lp.style_w, lp.style_b);
    x = apply_noise_and_style(x, noise.levels[static_cast<std::size_t>(l)], lp.noise_gain, style,
                              nullptr);
    x = nn::leaky_relu(x, cfg.lrelu_slope);
  }
  Tensor logits = nn::conv2d(x, params_.rgb_w, params_.rgb_b, 1, 0);
  return nn::sigmoid(logits);
}

ImageTensor Generator::generate(const LatentVector& z, const NoiseStack& noise) const {
  return synthesize(map_latent(z), noise);
}

ImageTensor Generator::forward(const LatentVector& z, const NoiseStack& noise,
                               Forward& cache) const {
  const auto& cfg = params_.config;
  if (z.values.rank() != 1 || z.values.dim(0) != static_cast<std::size_t>(cfg.d_z)) {
    throw ShapeError("forward: latent shape " + z.values.shape_str());
  }
  check_noise(cfg, noise);
  cache = Forward{};
  cache.z = z.values;
  cache.noise = noise.levels;

  Tensor h = z.values;
  for (std::size_t i = 0; i < params_.mapping_w.size(); ++i) {
    cache.map_in.push_back(h);
    Tensor pre = nn::dense(h, params_.mapping_w[i], params_.mapping_b[i]);
    cache.map_pre.push_back(pre);
    h = nn::leaky_relu(pre, cfg.lrelu_slope);
  }
  cache.w = h;

  Tensor x = params_.const_input;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelParams& lp = params_.levels[static_cast<std::size_t>(l)];
    if (l > 0) x = nn::upsample2x(x);
    cache.x_in.push_back(x);
    Tensor conv_out = nn::conv2d(x, lp.conv_w, lp.conv_b, 1, 1);
    Tensor style = nn::dense(cache.w, lp.style_w, lp.style_b);
    cache.style.push_back(style);
    Tensor mid;
    Tensor pre = apply_noise_and_style(conv_out, noise.levels[static_cast<std::size_t>(l)],
                                       lp.noise_gain, style, &mid);
    cache.x_mid.push_back(std::move(mid));
    cache.x_pre.push_back(pre);
    x = nn::leaky_relu(pre, cfg.lrelu_slope);
    cache.x_out.push_back(x);
  }
  Tensor logits = nn::conv2d(x, params_.rgb_w, params_.rgb_b, 1, 0);
  cache.image = nn::sigmoid(logits);
  return cache.image;
}

InputGradients Generator::backward(const Forward& cache, const Tensor& g_image,
                                   GeneratorParams* param_grads) const {
  const auto& cfg = params_.config;
  require_same_shape(g_image, cache.image, "generator backward");

  // Sigmoid output head.
  Tensor g_logits = nn::sigmoid_grad_from_output(g_image, cache.image);

  const int last = cfg.levels - 1;
  Tensor g_out = nn::conv2d_input_grad(g_logits, params_.rgb_w,
                                       cache.x_out[static_cast<std::size_t>(last)].shape(), 1, 0);
  if (param_grads) {
    nn::conv2d_param_grad(g_logits, cache.x_out[static_cast<std::size_t>(last)], param_grads->rgb_w,
                          param_grads->rgb_b, 1, 0);
  }

  InputGradients grads;
  grads.noise.resize(static_cast<std::size_t>(cfg.levels));
  Tensor g_w_total = Tensor::zeros(cache.w.shape());

  for (int l = last; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    const LevelParams& lp = params_.levels[li];
    const std::size_t c = lp.conv_b.dim(0);
    const std::size_t hw = cache.x_pre[li].dim(1) * cache.x_pre[li].dim(2);

    Tensor g_pre = nn::leaky_relu_grad(g_out, cache.x_pre[li], cfg.lrelu_slope);

    // Style modulation: x_pre = x_mid*(1+s) + t.
    Tensor g_style({2 * c});
    Tensor g_mid = g_pre;
    const Tensor& style = cache.style[li];
    const Tensor& mid = cache.x_mid[li];
    for (std::size_t ch = 0; ch < c; ++ch) {
      double scale = 1.0 + style[ch];
      double gs = 0.0, gt = 0.0;
      const double* gp = g_pre.data() + ch * hw;
      const double* mp = mid.data() + ch * hw;
      double* gm = g_mid.data() + ch * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        gs += gp[i] * mp[i];
        gt += gp[i];
        gm[i] = gp[i] * scale;
      }
      g_style[ch] = gs;
      g_style[c + ch] = gt;
    }
    g_w_total += nn::dense_input_grad(g_style, lp.style_w);
    if (param_grads) {
      nn::dense_param_grad(g_style, cache.w, param_grads->levels[li].style_w,
                           param_grads->levels[li].style_b);
    }

    // Noise injection: x_mid = conv_out + gain[c]*noise.
    const Tensor& noise = cache.noise[li];
    Tensor g_noise({1, cache.x_pre[li].dim(1), cache.x_pre[li].dim(2)});
    for (std::size_t ch = 0; ch < c; ++ch) {
      double gain = lp.noise_gain[ch];
      const double* gm = g_mid.data() + ch * hw;
      double* gn = g_noise.data();
      for (std::size_t i = 0; i < hw; ++i) gn[i] += gain * gm[i];
    }
    if (param_grads) {
      Tensor& g_gain = param_grads->levels[li].noise_gain;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* gm = g_mid.data() + ch * hw;
        const double* np = noise.data();
        for (std::size_t i = 0; i < hw; ++i) s += gm[i] * np[i];
        g_gain[ch] += s;
      }
    }
    grads.noise[li] = std::move(g_noise);

    Tensor g_conv_in = nn::conv2d_input_grad(g_mid, lp.conv_w, cache.x_in[li].shape(), 1, 1);
    if (param_grads) {
      nn::conv2d_param_grad(g_mid, cache.x_in[li], param_grads->levels[li].conv_w,
                            param_grads->levels[li].conv_b, 1, 1);
    }

    if (l > 0) {
      g_out = nn::upsample2x_grad(g_conv_in);
    } else if (param_grads) {
      param_grads->const_input += g_conv_in;
    }
  }

  // Mapping network.
  Tensor g = g_w_total;
  for (int i = static_cast<int>(params_.mapping_w.size()) - 1; i >= 0; --i) {
    const std::size_t ii = static_cast<std::size_t>(i);
    g = nn::leaky_relu_grad(g, cache.map_pre[ii], cfg.lrelu_slope);
    if (param_grads) {
      nn::dense_param_grad(g, cache.map_in[ii], param_grads->mapping_w[ii],
                           param_grads->mapping_b[ii]);
    }
    g = nn::dense_input_grad(g, params_.mapping_w[ii]);
  }
  grads.z = std::move(g);
  return grads;
}

InputGradients Generator::input_gradients(const LatentVector& z, const NoiseStack& noise,
                                          const LossHead& head) const {
  Forward cache;
  ImageTensor image = forward(z, noise, cache);
  HeadResult res = head(image);
  if (!res.image_grad.has_value()) {
    throw UnsupportedHeadError("input_gradients: loss head does not provide an image gradient");
  }
  const Tensor& g = *res.image_grad;
  if (!g.same_shape(image)) {
    throw ShapeError("input_gradients: head gradient shape " + g.shape_str() + ", image " +
                     image.shape_str());
  }
  if (!g.all_finite()) {
    throw UnsupportedHeadError("input_gradients: loss head returned non-finite gradient");
  }
  InputGradients grads = backward(cache, g, nullptr);
  grads.loss = res.loss;
  return grads;
}

std::uint64_t Generator::checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  params_.for_each_tensor([&](const std::string&, const Tensor& t) { h = tensor_checksum(t, h); });
  return h;
}

std::vector<Tensor*> Generator::parameter_list() {
  std::vector<Tensor*> out;
  params_.for_each_tensor([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> Generator::parameter_list() const {
  std::vector<const Tensor*> out;
  params_.for_each_tensor([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

LatentVector sample_latent(std::uint64_t seed, int d_z) {
  if (d_z < 1) throw ConfigError("sample_latent: d_z must be >= 1, got " + std::to_string(d_z));
  Rng rng(seed);
  Tensor v({static_cast<std::size_t>(d_z)});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return LatentVector{std::move(v)};
}

NoiseStack sample_noise(std::uint64_t seed, const GeneratorConfig& config) {
  config.validate();
  Rng rng(seed);
  NoiseStack stack;
  for (int l = 1; l <= config.levels; ++l) {
    std::size_t r = static_cast<std::size_t>(config.level_resolution(l));
    Tensor n({1, r, r});
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = rng.normal();
    stack.levels.push_back(std::move(n));
  }
  return stack;
}

}  // namespace madv::synthesis
