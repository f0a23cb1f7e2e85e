#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "madv/synthesis.hpp"
#include "madv/tensor.hpp"

namespace madv::forensics {

/// A: depthwise-separable blocks. B: inverted-bottleneck blocks. P: plain
/// conv stack, used for the perceptual feature extractor and the throwaway
/// GAN discriminator, never as a forensic detector.
enum class Arch { kSepConv, kBottleneck, kPlain };

char arch_id(Arch arch);
Arch arch_from_id(char id);

struct LabeledImage {
  ImageTensor image;
  int label = 0;  // 0 = real, 1 = fake
};

/// Binary classifier over a flat list of typed ops. Forward caches feed the
/// hand-wired backward pass; parameters are read-only during predict.
class BinaryConvNet {
 public:
  enum class OpKind { kConv, kDepthwise, kDense, kLRelu, kGlobalAvgPool };

  struct Op {
    OpKind kind;
    int stride = 1;
    int pad = 1;
    Tensor w;
    Tensor b;
    bool feature_tap = false;  // block outputs exposed to the perceptual proxy
  };

  struct Forward {
    std::vector<Tensor> inputs;  // input of each op
    std::vector<std::size_t> image_shape;
    double logit = 0.0;
  };

  /// Per-op parameter gradients, zero-shaped where an op has no parameters.
  struct Grads {
    std::vector<Tensor> w;
    std::vector<Tensor> b;
  };

  BinaryConvNet() = default;

  static BinaryConvNet random_init(Arch arch, int input_resolution, std::uint64_t seed);
  static BinaryConvNet zero_init(Arch arch, int input_resolution);

  double logit(const ImageTensor& image, Forward* cache = nullptr) const;

  /// Backpropagates d(loss)/d(logit) to the original image (through the
  /// preprocessing resize); accumulates parameter gradients when `pg` given.
  Tensor input_grad(const Forward& cache, double g_logit, Grads* pg) const;

  Grads zero_grads() const;

  /// Post-activation maps at the tapped ops, for the perceptual proxy.
  std::vector<Tensor> feature_maps(const ImageTensor& image) const;

  Arch arch() const { return arch_; }
  int input_resolution() const { return input_resolution_; }
  std::size_t parameter_count() const;
  std::size_t weighted_layer_count() const;
  std::uint64_t checksum() const;

  std::vector<Tensor*> parameter_list();
  std::vector<const Tensor*> parameter_list() const;

  const std::vector<Op>& ops() const { return ops_; }
  std::vector<Op>& ops_mutable() { return ops_; }

 private:
  Arch arch_ = Arch::kPlain;
  int input_resolution_ = 32;
  std::vector<Op> ops_;
};

struct Prediction {
  double logit = 0.0;
  double p_fake = 0.5;
  int label = 0;  // 1 iff p_fake > 0.5
};

/// Binary cross-entropy with epsilon clipping away from {0,1}.
double bce_loss(double p_fake, int y);

struct TrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-3;
  int epochs = 3;
  int validations_per_epoch = 5;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A trained forensic detector (architecture A or B) plus training metadata.
class Detector {
 public:
  Detector() = default;
  Detector(BinaryConvNet net, std::uint64_t train_seed, double best_val_accuracy,
           double final_val_accuracy = -1.0);

  static Detector random_init(Arch arch, std::uint64_t seed, int input_resolution = 32);
  static Detector zero_init(Arch arch, int input_resolution = 32);

  Prediction predict(const ImageTensor& image) const;

  /// bce_loss(predict(image), y) and its exact gradient with respect to the
  /// image. Returns the loss.
  double loss_and_input_grad(const ImageTensor& image, int y, Tensor& g_image) const;

  const BinaryConvNet& net() const { return net_; }
  Arch arch() const { return net_.arch(); }
  std::uint64_t checksum() const { return net_.checksum(); }

  std::uint64_t train_seed() const { return train_seed_; }
  double best_val_accuracy() const { return best_val_accuracy_; }
  /// Validation accuracy of the last snapshot of the final epoch; the
  /// selected detector's best_val_accuracy is never below this.
  double final_val_accuracy() const { return final_val_accuracy_; }

 private:
  BinaryConvNet net_;
  std::uint64_t train_seed_ = 0;
  double best_val_accuracy_ = -1.0;
  double final_val_accuracy_ = -1.0;
};

/// Adam training with periodic validation; returns the parameter snapshot
/// with the highest validation accuracy. Deterministic given cfg.seed.
Detector train_detector(Arch arch, const std::vector<LabeledImage>& train,
                        const std::vector<LabeledImage>& val, const TrainConfig& cfg);

/// Fraction of images whose predicted label matches the true label.
double evaluate_accuracy(const Detector& detector, const std::vector<LabeledImage>& set);

}  // namespace madv::forensics
