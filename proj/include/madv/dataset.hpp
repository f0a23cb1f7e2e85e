#pragma once

#include <cstdint>
#include <vector>

#include "madv/forensics.hpp"
#include "madv/synthesis.hpp"

namespace madv::dataset {

/// Procedurally composed face-like image: background gradient, skin ellipse,
/// two eye blobs, mouth arc, light texture noise. Deterministic per
/// (seed, index); stands in for a photographic real-image corpus.
ImageTensor render_face(std::uint64_t seed, int resolution);

/// n real-class images (label 0), deterministic per seed.
std::vector<forensics::LabeledImage> build_real_corpus(std::uint64_t seed, int n, int resolution);

/// n generator images (label 1) from seeded latent/noise draws.
std::vector<forensics::LabeledImage> build_fake_corpus(const synthesis::Generator& generator,
                                                       std::uint64_t seed, int n);

/// Fake sample with its generator inputs retained for manifold attacks.
struct AttackSample {
  synthesis::LatentVector z;
  synthesis::NoiseStack noise;
  ImageTensor image;
};

std::vector<AttackSample> build_attack_set(const synthesis::Generator& generator,
                                           std::uint64_t seed, int n);

/// Latent/noise seeds for fake sample i of a stream; exposed so tests can
/// verify train/attack seed disjointness.
std::uint64_t latent_seed(std::uint64_t corpus_seed, int index);
std::uint64_t noise_seed(std::uint64_t corpus_seed, int index);

}  // namespace madv::dataset
