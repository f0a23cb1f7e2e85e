#pragma once

#include <cstdint>
#include <vector>

#include "madv/forensics.hpp"
#include "madv/synthesis.hpp"

namespace madv::gan {

struct GanTrainConfig {
  int steps = 1200;
  int batch_size = 8;
  double gen_lr = 1e-3;
  double disc_lr = 1e-3;
  std::uint64_t seed = 0;
};

struct GanTrainStats {
  double real_pixel_mean = 0.0;
  double fake_pixel_mean = 0.0;
  double real_pixel_std = 0.0;
  double fake_pixel_std = 0.0;
};

/// Non-saturating GAN training of the toy generator against a throwaway
/// plain-conv discriminator. Runs until `steps`; returns the generator and
/// the final real/fake pixel statistics.
synthesis::Generator train_generator(const synthesis::GeneratorConfig& config,
                                     const std::vector<forensics::LabeledImage>& real_corpus,
                                     const GanTrainConfig& cfg, GanTrainStats* stats = nullptr);

}  // namespace madv::gan
