#include "madv/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "madv/rng.hpp"

namespace madv::dataset {

namespace {

struct Color {
  double r, g, b;
};

double smoothstep(double edge0, double edge1, double x) {
  double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

void blend(ImageTensor& img, std::size_t y, std::size_t x, const Color& c, double alpha) {
  img.at(0, y, x) = img.at(0, y, x) * (1.0 - alpha) + c.r * alpha;
  img.at(1, y, x) = img.at(1, y, x) * (1.0 - alpha) + c.g * alpha;
  img.at(2, y, x) = img.at(2, y, x) * (1.0 - alpha) + c.b * alpha;
}

}  // namespace

ImageTensor render_face(std::uint64_t seed, int resolution) {
  Rng rng(seed);
  const std::size_t res = static_cast<std::size_t>(resolution);
  ImageTensor img({3, res, res});
  const double inv = 1.0 / static_cast<double>(resolution);

  // Background: tilted two-color gradient.
  Color bg0{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  Color bg1{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  double tilt = rng.uniform(-0.4, 0.4);
  for (std::size_t y = 0; y < res; ++y) {
    for (std::size_t x = 0; x < res; ++x) {
      double t = std::clamp(y * inv + tilt * (x * inv - 0.5), 0.0, 1.0);
      img.at(0, y, x) = bg0.r + (bg1.r - bg0.r) * t;
      img.at(1, y, x) = bg0.g + (bg1.g - bg0.g) * t;
      img.at(2, y, x) = bg0.b + (bg1.b - bg0.b) * t;
    }
  }

  // Skin ellipse.
  double cx = 0.5 + rng.uniform(-0.06, 0.06);
  double cy = 0.5 + rng.uniform(-0.06, 0.06);
  double rx = rng.uniform(0.26, 0.36);
  double ry = rng.uniform(0.32, 0.44);
  double skin_r = rng.uniform(0.55, 0.95);
  Color skin{skin_r, skin_r * rng.uniform(0.70, 0.88), skin_r * rng.uniform(0.45, 0.70)};
  const double edge = 1.5 * inv;
  for (std::size_t y = 0; y < res; ++y) {
    for (std::size_t x = 0; x < res; ++x) {
      double dx = (x * inv - cx) / rx;
      double dy = (y * inv - cy) / ry;
      double d = std::sqrt(dx * dx + dy * dy);
      double alpha = 1.0 - smoothstep(1.0 - edge, 1.0 + edge, d);
      if (alpha > 0.0) blend(img, y, x, skin, alpha);
    }
  }

  // Eyes: two dark blobs with soft falloff.
  double eye_dx = rng.uniform(0.10, 0.16);
  double eye_dy = rng.uniform(0.08, 0.14);
  double eye_r = rng.uniform(0.035, 0.060);
  double shade = rng.uniform(0.05, 0.25);
  Color eye{shade, shade, shade + rng.uniform(0.0, 0.15)};
  for (int side = -1; side <= 1; side += 2) {
    double ex = cx + side * eye_dx + rng.uniform(-0.01, 0.01);
    double ey = cy - eye_dy + rng.uniform(-0.01, 0.01);
    for (std::size_t y = 0; y < res; ++y) {
      for (std::size_t x = 0; x < res; ++x) {
        double dx = x * inv - ex;
        double dy = y * inv - ey;
        double d = std::sqrt(dx * dx + dy * dy) / eye_r;
        double alpha = std::exp(-d * d);
        if (alpha > 0.02) blend(img, y, x, eye, std::min(alpha, 1.0));
      }
    }
  }

  // Mouth: downward arc below center.
  double mouth_y = cy + rng.uniform(0.14, 0.22);
  double mouth_w = rng.uniform(0.10, 0.17);
  double curve = rng.uniform(0.02, 0.07);
  double thick = rng.uniform(0.012, 0.022);
  Color mouth{rng.uniform(0.35, 0.75), rng.uniform(0.05, 0.25), rng.uniform(0.10, 0.30)};
  for (std::size_t y = 0; y < res; ++y) {
    for (std::size_t x = 0; x < res; ++x) {
      double u = (x * inv - cx) / mouth_w;
      if (u < -1.0 || u > 1.0) continue;
      double target = mouth_y + curve * (1.0 - u * u);
      double d = std::fabs(y * inv - target);
      double alpha = 1.0 - smoothstep(thick * 0.5, thick, d);
      if (alpha > 0.0) blend(img, y, x, mouth, alpha);
    }
  }

  // Fine texture so the real class carries pixel-level detail.
  double noise_amp = rng.uniform(0.01, 0.03);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = std::clamp(img[i] + noise_amp * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
  }
  return img;
}

std::vector<forensics::LabeledImage> build_real_corpus(std::uint64_t seed, int n, int resolution) {
  if (n < 1) throw ConfigError("build_real_corpus: n must be >= 1");
  std::vector<forensics::LabeledImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back({render_face(Rng::derive(seed, static_cast<std::uint64_t>(i)), resolution), 0});
  }
  return out;
}

std::uint64_t latent_seed(std::uint64_t corpus_seed, int index) {
  return Rng::derive(Rng::derive(corpus_seed, 0xA11CE), static_cast<std::uint64_t>(index));
}

std::uint64_t noise_seed(std::uint64_t corpus_seed, int index) {
  return Rng::derive(Rng::derive(corpus_seed, 0xB0B), static_cast<std::uint64_t>(index));
}

std::vector<AttackSample> build_attack_set(const synthesis::Generator& generator,
                                           std::uint64_t seed, int n) {
  if (n < 1) throw ConfigError("build_attack_set: n must be >= 1");
  std::vector<AttackSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    AttackSample s;
    s.z = synthesis::sample_latent(latent_seed(seed, i), generator.config().d_z);
    s.noise = synthesis::sample_noise(noise_seed(seed, i), generator.config());
    s.image = generator.generate(s.z, s.noise);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<forensics::LabeledImage> build_fake_corpus(const synthesis::Generator& generator,
                                                       std::uint64_t seed, int n) {
  std::vector<AttackSample> samples = build_attack_set(generator, seed, n);
  std::vector<forensics::LabeledImage> out;
  out.reserve(samples.size());
  for (auto& s : samples) out.push_back({std::move(s.image), 1});
  return out;
}

}  // namespace madv::dataset
