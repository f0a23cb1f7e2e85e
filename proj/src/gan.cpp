#include "madv/gan.hpp"

#include <cmath>

#include "madv/nn.hpp"
#include "madv/rng.hpp"

namespace madv::gan {

namespace {

struct PixelStats {
  double mean = 0.0;
  double stddev = 0.0;
};

PixelStats pixel_stats(const std::vector<const Tensor*>& images) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const Tensor* t : images) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      sum += (*t)[i];
      sq += (*t)[i] * (*t)[i];
    }
    n += t->size();
  }
  double mean = sum / static_cast<double>(n);
  return {mean, std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean))};
}

void adam_step_net(forensics::BinaryConvNet& net, forensics::BinaryConvNet::Grads& grads,
                   double inv_batch, nn::Adam& opt) {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> gptrs;
  auto& ops = net.ops_mutable();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].w.size() == 0) continue;
    grads.w[i] *= inv_batch;
    grads.b[i] *= inv_batch;
    params.push_back(&ops[i].w);
    params.push_back(&ops[i].b);
    gptrs.push_back(&grads.w[i]);
    gptrs.push_back(&grads.b[i]);
  }
  opt.step(params, gptrs);
}

}  // namespace

synthesis::Generator train_generator(const synthesis::GeneratorConfig& config,
                                     const std::vector<forensics::LabeledImage>& real_corpus,
                                     const GanTrainConfig& cfg, GanTrainStats* stats) {
  config.validate();
  if (real_corpus.empty()) throw DataError("train_generator: empty real corpus");
  if (cfg.steps < 1 || cfg.batch_size < 1) {
    throw ConfigError("train_generator: steps and batch_size must be >= 1");
  }

  synthesis::Generator gen =
      synthesis::Generator::random_init(config, Rng::derive(cfg.seed, streams::kGanInit));
  forensics::BinaryConvNet disc = forensics::BinaryConvNet::random_init(
      forensics::Arch::kPlain, config.output_resolution(),
      Rng::derive(cfg.seed, streams::kGanInit ^ 0x5a));

  nn::Adam gen_opt(cfg.gen_lr, 0.0);
  nn::Adam disc_opt(cfg.disc_lr, 0.0);
  Rng rng(Rng::derive(cfg.seed, streams::kGanTrain));

  // Discriminator labels: 1 = real sample, 0 = generator sample.
  for (int step = 0; step < cfg.steps; ++step) {
    auto dgrads = disc.zero_grads();
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& real = real_corpus[rng.below(real_corpus.size())];
      forensics::BinaryConvNet::Forward cache;
      double p = nn::sigmoid(disc.logit(real.image, &cache));
      disc.input_grad(cache, p - 1.0, &dgrads);

      auto z = synthesis::sample_latent(rng.next_u64(), config.d_z);
      auto noise = synthesis::sample_noise(rng.next_u64(), config);
      ImageTensor fake = gen.generate(z, noise);
      forensics::BinaryConvNet::Forward fcache;
      double pf = nn::sigmoid(disc.logit(fake, &fcache));
      disc.input_grad(fcache, pf - 0.0, &dgrads);
    }
    adam_step_net(disc, dgrads, 1.0 / static_cast<double>(2 * cfg.batch_size), disc_opt);

    // Generator: non-saturating loss, push D(fake) toward 1.
    synthesis::GeneratorParams ggrads = synthesis::Generator::zero_init(config).params();
    for (int b = 0; b < cfg.batch_size; ++b) {
      auto z = synthesis::sample_latent(rng.next_u64(), config.d_z);
      auto noise = synthesis::sample_noise(rng.next_u64(), config);
      synthesis::Generator::Forward cache;
      ImageTensor fake = gen.forward(z, noise, cache);
      forensics::BinaryConvNet::Forward dcache;
      double p = nn::sigmoid(disc.logit(fake, &dcache));
      Tensor g_image = disc.input_grad(dcache, p - 1.0, nullptr);
      gen.backward(cache, g_image, &ggrads);
    }
    std::vector<Tensor*> params = gen.parameter_list();
    std::vector<Tensor*> gparams;
    ggrads.for_each_tensor([&](const std::string&, Tensor& t) {
      t *= 1.0 / static_cast<double>(cfg.batch_size);
      gparams.push_back(&t);
    });
    std::vector<const Tensor*> gconst(gparams.begin(), gparams.end());
    gen_opt.step(params, gconst);
  }

  if (stats) {
    std::vector<const Tensor*> reals, fakes;
    std::vector<ImageTensor> fake_store;
    std::size_t n_stat = std::min<std::size_t>(64, real_corpus.size());
    for (std::size_t i = 0; i < n_stat; ++i) reals.push_back(&real_corpus[i].image);
    for (std::size_t i = 0; i < n_stat; ++i) {
      auto z = synthesis::sample_latent(rng.next_u64(), config.d_z);
      auto noise = synthesis::sample_noise(rng.next_u64(), config);
      fake_store.push_back(gen.generate(z, noise));
    }
    for (const auto& img : fake_store) fakes.push_back(&img);
    PixelStats rs = pixel_stats(reals);
    PixelStats fs = pixel_stats(fakes);
    stats->real_pixel_mean = rs.mean;
    stats->real_pixel_std = rs.stddev;
    stats->fake_pixel_mean = fs.mean;
    stats->fake_pixel_std = fs.stddev;
  }
  return gen;
}

}  // namespace madv::gan
