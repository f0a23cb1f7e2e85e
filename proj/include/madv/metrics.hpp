#pragma once

#include <cstdint>
#include <vector>

#include "madv/forensics.hpp"
#include "madv/tensor.hpp"

namespace madv::metrics {

/// Mean squared pixel difference.
double mse(const ImageTensor& a, const ImageTensor& b);

/// 10*log10(max_value^2 / mse), capped at `cap_db` for identical images.
double psnr(const ImageTensor& a, const ImageTensor& b, double max_value = 1.0,
            double cap_db = 100.0);

/// Mean local structural similarity over sliding uniform windows.
double ssim(const ImageTensor& a, const ImageTensor& b, int window = 7, double k1 = 0.01,
            double k2 = 0.03, double max_value = 1.0);

/// Frozen feature extractor for the perceptual-distance proxy. Wraps a plain
/// conv net whose tapped block activations serve as the feature stack.
class FeatureNet {
 public:
  FeatureNet() = default;
  explicit FeatureNet(forensics::BinaryConvNet net);

  std::vector<Tensor> features(const ImageTensor& image) const;
  const forensics::BinaryConvNet& net() const { return net_; }
  std::uint64_t checksum() const { return net_.checksum(); }

 private:
  forensics::BinaryConvNet net_;
};

/// Sum over tapped layers of the mean squared distance between channel-wise
/// unit-normalized activations.
double perceptual_distance(const ImageTensor& a, const ImageTensor& b, const FeatureNet& fn);

struct FeatureNetTrainConfig {
  int steps = 300;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

/// Trains the proxy's backing classifier on a labeled corpus; the returned
/// net is frozen inside the FeatureNet wrapper.
FeatureNet train_feature_net(const std::vector<forensics::LabeledImage>& corpus,
                             const FeatureNetTrainConfig& cfg);

struct QualityReport {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double perceptual = 0.0;
};

QualityReport quality_report(const ImageTensor& reference, const ImageTensor& candidate,
                             const FeatureNet& fn);

}  // namespace madv::metrics
