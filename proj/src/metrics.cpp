#include "madv/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "madv/nn.hpp"
#include "madv/rng.hpp"

namespace madv::metrics {

double mse(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const ImageTensor& a, const ImageTensor& b, double max_value, double cap_db) {
  double m = mse(a, b);
  if (m == 0.0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(max_value * max_value / m));
}

double ssim(const ImageTensor& a, const ImageTensor& b, int window, double k1, double k2,
            double max_value) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw ShapeError("ssim: image must be {C,H,W}");
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const std::size_t win = static_cast<std::size_t>(window);
  if (h < win || w < win) {
    throw ShapeError("ssim: image " + a.shape_str() + " smaller than window " +
                     std::to_string(window));
  }
  const double c1 = (k1 * max_value) * (k1 * max_value);
  const double c2 = (k2 * max_value) * (k2 * max_value);
  const double n = static_cast<double>(win * win);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
      for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
        double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (std::size_t dy = 0; dy < win; ++dy) {
          for (std::size_t dx = 0; dx < win; ++dx) {
            double va = a.at(ch, y0 + dy, x0 + dx);
            double vb = b.at(ch, y0 + dy, x0 + dx);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        double mu_a = sa / n, mu_b = sb / n;
        double var_a = saa / n - mu_a * mu_a;
        double var_b = sbb / n - mu_b * mu_b;
        double cov = sab / n - mu_a * mu_b;
        double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

FeatureNet::FeatureNet(forensics::BinaryConvNet net) : net_(std::move(net)) {
  bool has_tap = false;
  for (const auto& op : net_.ops()) has_tap |= op.feature_tap;
  if (!has_tap) throw ConfigError("feature net: backing network exposes no feature taps");
}

std::vector<Tensor> FeatureNet::features(const ImageTensor& image) const {
  return net_.feature_maps(image);
}

double perceptual_distance(const ImageTensor& a, const ImageTensor& b, const FeatureNet& fn) {
  std::vector<Tensor> fa = fn.features(a);
  std::vector<Tensor> fb = fn.features(b);
  constexpr double kEps = 1e-10;
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const Tensor& ta = fa[l];
    const Tensor& tb = fb[l];
    require_same_shape(ta, tb, "perceptual_distance");
    const std::size_t c = ta.dim(0), hw = ta.dim(1) * ta.dim(2);
    double layer_sum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      double na = 0.0, nb = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double va = ta[ch * hw + i], vb = tb[ch * hw + i];
        na += va * va;
        nb += vb * vb;
      }
      na = std::max(std::sqrt(na), kEps);
      nb = std::max(std::sqrt(nb), kEps);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double d = ta[ch * hw + i] / na - tb[ch * hw + i] / nb;
        layer_sum += d * d;
      }
    }
    total += layer_sum / static_cast<double>(hw);
  }
  return total;
}

FeatureNet train_feature_net(const std::vector<forensics::LabeledImage>& corpus,
                             const FeatureNetTrainConfig& cfg) {
  if (corpus.empty()) throw DataError("train_feature_net: empty corpus");
  auto net = forensics::BinaryConvNet::random_init(forensics::Arch::kPlain, 32,
                                                   Rng::derive(cfg.seed, streams::kFeatureNet));
  nn::Adam opt(cfg.learning_rate, cfg.weight_decay);
  Rng pick(Rng::derive(cfg.seed, streams::kFeatureNet ^ 0xff));

  for (int step = 0; step < cfg.steps; ++step) {
    auto grads = net.zero_grads();
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& li = corpus[pick.below(corpus.size())];
      forensics::BinaryConvNet::Forward cache;
      double p = nn::sigmoid(net.logit(li.image, &cache));
      net.input_grad(cache, p - static_cast<double>(li.label), &grads);
    }
    double inv = 1.0 / static_cast<double>(cfg.batch_size);
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gptrs;
    for (std::size_t i = 0; i < net.ops_mutable().size(); ++i) {
      if (net.ops_mutable()[i].w.size() == 0) continue;
      grads.w[i] *= inv;
      grads.b[i] *= inv;
      params.push_back(&net.ops_mutable()[i].w);
      params.push_back(&net.ops_mutable()[i].b);
      gptrs.push_back(&grads.w[i]);
      gptrs.push_back(&grads.b[i]);
    }
    opt.step(params, gptrs);
  }
  return FeatureNet(std::move(net));
}

QualityReport quality_report(const ImageTensor& reference, const ImageTensor& candidate,
                             const FeatureNet& fn) {
  QualityReport r;
  r.mse = mse(reference, candidate);
  r.psnr = psnr(reference, candidate);
  r.ssim = ssim(reference, candidate);
  r.perceptual = perceptual_distance(reference, candidate, fn);
  return r;
}

}  // namespace madv::metrics
