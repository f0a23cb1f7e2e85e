#include "madv/forensics.hpp"

#include <algorithm>
#include <cmath>

#include "madv/nn.hpp"
#include "madv/rng.hpp"

namespace madv::forensics {

char arch_id(Arch arch) {
  switch (arch) {
    case Arch::kSepConv: return 'A';
    case Arch::kBottleneck: return 'B';
    case Arch::kPlain: return 'P';
  }
  return '?';
}

Arch arch_from_id(char id) {
  switch (id) {
    case 'A': return Arch::kSepConv;
    case 'B': return Arch::kBottleneck;
    case 'P': return Arch::kPlain;
    default: throw ConfigError(std::string("unknown architecture id '") + id + "'");
  }
}

namespace {

using OpKind = BinaryConvNet::OpKind;
using Op = BinaryConvNet::Op;

Op conv_op(std::size_t cout, std::size_t cin, int k, int stride, int pad) {
  Op op;
  op.kind = OpKind::kConv;
  op.stride = stride;
  op.pad = pad;
  op.w = Tensor::zeros({cout, cin, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  op.b = Tensor::zeros({cout});
  return op;
}

Op depthwise_op(std::size_t c, int stride) {
  Op op;
  op.kind = OpKind::kDepthwise;
  op.stride = stride;
  op.pad = 1;
  op.w = Tensor::zeros({c, 3, 3});
  op.b = Tensor::zeros({c});
  return op;
}

Op dense_op(std::size_t out, std::size_t in) {
  Op op;
  op.kind = OpKind::kDense;
  op.w = Tensor::zeros({out, in});
  op.b = Tensor::zeros({out});
  return op;
}

Op lrelu_op(bool tap = false) {
  Op op;
  op.kind = OpKind::kLRelu;
  op.feature_tap = tap;
  return op;
}

Op gap_op() {
  Op op;
  op.kind = OpKind::kGlobalAvgPool;
  return op;
}

constexpr double kLReluSlope = 0.2;

std::vector<Op> build_ops(Arch arch) {
  std::vector<Op> ops;
  switch (arch) {
    case Arch::kSepConv: {
      // Stem + four depthwise-separable downsampling blocks.
      ops.push_back(conv_op(12, 3, 3, 1, 1));
      ops.push_back(lrelu_op());
      std::size_t widths[] = {12, 20, 28, 40, 56};
      for (int i = 0; i < 4; ++i) {
        ops.push_back(depthwise_op(widths[i], 2));
        ops.push_back(conv_op(widths[i + 1], widths[i], 1, 1, 0));
        ops.push_back(lrelu_op());
      }
      ops.push_back(gap_op());
      ops.push_back(dense_op(1, 56));
      break;
    }
    case Arch::kBottleneck: {
      // Stem + four expand/depthwise/project blocks.
      ops.push_back(conv_op(16, 3, 3, 2, 1));
      ops.push_back(lrelu_op());
      struct Block {
        std::size_t in, out;
        int stride;
      };
      Block blocks[] = {{16, 20, 2}, {20, 24, 1}, {24, 32, 2}, {32, 40, 2}};
      for (const Block& blk : blocks) {
        std::size_t mid = blk.in * 3;
        ops.push_back(conv_op(mid, blk.in, 1, 1, 0));
        ops.push_back(lrelu_op());
        ops.push_back(depthwise_op(mid, blk.stride));
        ops.push_back(lrelu_op());
        ops.push_back(conv_op(blk.out, mid, 1, 1, 0));
      }
      ops.push_back(gap_op());
      ops.push_back(dense_op(1, 40));
      break;
    }
    case Arch::kPlain: {
      ops.push_back(conv_op(12, 3, 3, 2, 1));
      ops.push_back(lrelu_op(true));
      ops.push_back(conv_op(24, 12, 3, 2, 1));
      ops.push_back(lrelu_op(true));
      ops.push_back(conv_op(48, 24, 3, 2, 1));
      ops.push_back(lrelu_op(true));
      ops.push_back(gap_op());
      ops.push_back(dense_op(1, 48));
      break;
    }
  }
  return ops;
}

std::size_t op_fan_in(const Op& op) {
  switch (op.kind) {
    case OpKind::kConv: return op.w.dim(1) * op.w.dim(2) * op.w.dim(3);
    case OpKind::kDepthwise: return op.w.dim(1) * op.w.dim(2);
    case OpKind::kDense: return op.w.dim(1);
    default: return 1;
  }
}

}  // namespace

BinaryConvNet BinaryConvNet::zero_init(Arch arch, int input_resolution) {
  BinaryConvNet net;
  net.arch_ = arch;
  net.input_resolution_ = input_resolution;
  net.ops_ = build_ops(arch);
  return net;
}

BinaryConvNet BinaryConvNet::random_init(Arch arch, int input_resolution, std::uint64_t seed) {
  BinaryConvNet net = zero_init(arch, input_resolution);
  Rng rng(seed);
  const double gain = std::sqrt(2.0);
  for (Op& op : net.ops_) {
    if (op.w.size() == 0) continue;
    op.w = nn::normal_init(op.w.shape(), op_fan_in(op), rng, gain);
  }
  return net;
}

double BinaryConvNet::logit(const ImageTensor& image, Forward* cache) const {
  if (image.rank() != 3) {
    throw ShapeError("detector: image must be {C,H,W}, got " + image.shape_str());
  }
  std::size_t r = static_cast<std::size_t>(input_resolution_);
  Tensor x = nn::resize_nearest(image, r, r);
  if (cache) {
    *cache = Forward{};
    cache->image_shape = image.shape();
  }
  for (const Op& op : ops_) {
    if (cache) cache->inputs.push_back(x);
    switch (op.kind) {
      case OpKind::kConv: x = nn::conv2d(x, op.w, op.b, op.stride, op.pad); break;
      case OpKind::kDepthwise: x = nn::depthwise_conv2d(x, op.w, op.b, op.stride, op.pad); break;
      case OpKind::kDense: x = nn::dense(x, op.w, op.b); break;
      case OpKind::kLRelu: x = nn::leaky_relu(x, kLReluSlope); break;
      case OpKind::kGlobalAvgPool: x = nn::global_avg_pool(x); break;
    }
  }
  double out = x[0];
  if (cache) cache->logit = out;
  return out;
}

Tensor BinaryConvNet::input_grad(const Forward& cache, double g_logit, Grads* pg) const {
  Tensor g({1});
  g[0] = g_logit;
  for (std::size_t i = ops_.size(); i-- > 0;) {
    const Op& op = ops_[i];
    const Tensor& x = cache.inputs[i];
    switch (op.kind) {
      case OpKind::kConv:
        if (pg) nn::conv2d_param_grad(g, x, pg->w[i], pg->b[i], op.stride, op.pad);
        g = nn::conv2d_input_grad(g, op.w, x.shape(), op.stride, op.pad);
        break;
      case OpKind::kDepthwise:
        if (pg) nn::depthwise_conv2d_param_grad(g, x, pg->w[i], pg->b[i], op.stride, op.pad);
        g = nn::depthwise_conv2d_input_grad(g, op.w, x.shape(), op.stride, op.pad);
        break;
      case OpKind::kDense:
        if (pg) nn::dense_param_grad(g, x, pg->w[i], pg->b[i]);
        g = nn::dense_input_grad(g, op.w);
        break;
      case OpKind::kLRelu: g = nn::leaky_relu_grad(g, x, kLReluSlope); break;
      case OpKind::kGlobalAvgPool: g = nn::global_avg_pool_grad(g, x.shape()); break;
    }
  }
  return nn::resize_nearest_grad(g, cache.image_shape);
}

BinaryConvNet::Grads BinaryConvNet::zero_grads() const {
  Grads g;
  for (const Op& op : ops_) {
    g.w.push_back(Tensor::zeros(op.w.shape()));
    g.b.push_back(Tensor::zeros(op.b.shape()));
  }
  return g;
}

std::vector<Tensor> BinaryConvNet::feature_maps(const ImageTensor& image) const {
  std::size_t r = static_cast<std::size_t>(input_resolution_);
  Tensor x = nn::resize_nearest(image, r, r);
  std::vector<Tensor> taps;
  for (const Op& op : ops_) {
    switch (op.kind) {
      case OpKind::kConv: x = nn::conv2d(x, op.w, op.b, op.stride, op.pad); break;
      case OpKind::kDepthwise: x = nn::depthwise_conv2d(x, op.w, op.b, op.stride, op.pad); break;
      case OpKind::kDense: x = nn::dense(x, op.w, op.b); break;
      case OpKind::kLRelu: x = nn::leaky_relu(x, kLReluSlope); break;
      case OpKind::kGlobalAvgPool: x = nn::global_avg_pool(x); break;
    }
    if (op.feature_tap) taps.push_back(x);
  }
  return taps;
}

std::size_t BinaryConvNet::parameter_count() const {
  std::size_t n = 0;
  for (const Op& op : ops_) n += op.w.size() + op.b.size();
  return n;
}

std::size_t BinaryConvNet::weighted_layer_count() const {
  std::size_t n = 0;
  for (const Op& op : ops_) {
    if (op.w.size() > 0) ++n;
  }
  return n;
}

std::uint64_t BinaryConvNet::checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const Op& op : ops_) {
    h = tensor_checksum(op.w, h);
    h = tensor_checksum(op.b, h);
  }
  return h;
}

std::vector<Tensor*> BinaryConvNet::parameter_list() {
  std::vector<Tensor*> out;
  for (Op& op : ops_) {
    if (op.w.size() > 0) {
      out.push_back(&op.w);
      out.push_back(&op.b);
    }
  }
  return out;
}

std::vector<const Tensor*> BinaryConvNet::parameter_list() const {
  std::vector<const Tensor*> out;
  for (const Op& op : ops_) {
    if (op.w.size() > 0) {
      out.push_back(&op.w);
      out.push_back(&op.b);
    }
  }
  return out;
}

double bce_loss(double p_fake, int y) {
  constexpr double kEps = 1e-7;
  double p = std::clamp(p_fake, kEps, 1.0 - kEps);
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (validations_per_epoch < 1) throw ConfigError("train config: validations_per_epoch >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
}

Detector::Detector(BinaryConvNet net, std::uint64_t train_seed, double best_val_accuracy,
                   double final_val_accuracy)
    : net_(std::move(net)),
      train_seed_(train_seed),
      best_val_accuracy_(best_val_accuracy),
      final_val_accuracy_(final_val_accuracy) {
  if (net_.arch() == Arch::kPlain) {
    throw ConfigError("detector: architecture must be A or B");
  }
}

Detector Detector::random_init(Arch arch, std::uint64_t seed, int input_resolution) {
  return Detector(BinaryConvNet::random_init(arch, input_resolution, seed), seed, -1.0);
}

Detector Detector::zero_init(Arch arch, int input_resolution) {
  return Detector(BinaryConvNet::zero_init(arch, input_resolution), 0, -1.0);
}

Prediction Detector::predict(const ImageTensor& image) const {
  if (!image.all_finite()) {
    throw DataError("predict: image contains non-finite pixels");
  }
  Prediction pred;
  pred.logit = net_.logit(image);
  pred.p_fake = nn::sigmoid(pred.logit);
  pred.label = pred.p_fake > 0.5 ? 1 : 0;
  return pred;
}

double Detector::loss_and_input_grad(const ImageTensor& image, int y, Tensor& g_image) const {
  if (!image.all_finite()) {
    throw DataError("loss_and_input_grad: image contains non-finite pixels");
  }
  BinaryConvNet::Forward cache;
  double logit = net_.logit(image, &cache);
  double p = nn::sigmoid(logit);
  // d(bce)/d(logit) = p - y.
  g_image = net_.input_grad(cache, p - static_cast<double>(y), nullptr);
  return bce_loss(p, y);
}

namespace {

double accuracy_of_net(const BinaryConvNet& net, const std::vector<LabeledImage>& set) {
  std::size_t correct = 0;
  for (const LabeledImage& li : set) {
    double p = nn::sigmoid(net.logit(li.image));
    int label = p > 0.5 ? 1 : 0;
    if (label == li.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

void check_both_classes(const std::vector<LabeledImage>& set, const char* name) {
  bool has0 = false, has1 = false;
  for (const LabeledImage& li : set) {
    if (li.label == 0) has0 = true;
    if (li.label == 1) has1 = true;
    if (has0 && has1) return;
  }
  throw DataError(std::string("train_detector: ") + name + " set lacks one class");
}

}  // namespace

Detector train_detector(Arch arch, const std::vector<LabeledImage>& train,
                        const std::vector<LabeledImage>& val, const TrainConfig& cfg) {
  cfg.validate();
  if (arch == Arch::kPlain) throw ConfigError("train_detector: architecture must be A or B");
  if (train.empty() || val.empty()) throw DataError("train_detector: empty dataset");
  check_both_classes(train, "train");
  check_both_classes(val, "val");

  BinaryConvNet net =
      BinaryConvNet::random_init(arch, 32, Rng::derive(cfg.seed, streams::kDetectorInit));
  nn::Adam opt(cfg.learning_rate, cfg.weight_decay);

  const std::size_t n = train.size();
  const std::size_t batches =
      (n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);

  BinaryConvNet best = net;
  double best_acc = -1.0;
  double last_acc = -1.0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(Rng::derive(cfg.seed, streams::kDetectorTrain),
                                static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    // Validation points: after batch ceil(k*batches/V), k = 1..V.
    std::vector<std::size_t> val_points;
    for (int k = 1; k <= cfg.validations_per_epoch; ++k) {
      val_points.push_back(
          (static_cast<std::size_t>(k) * batches + static_cast<std::size_t>(cfg.validations_per_epoch) - 1) /
          static_cast<std::size_t>(cfg.validations_per_epoch));
    }

    for (std::size_t b = 0; b < batches; ++b) {
      std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
      std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch_size));
      BinaryConvNet::Grads grads = net.zero_grads();
      for (std::size_t i = lo; i < hi; ++i) {
        const LabeledImage& li = train[order[i]];
        BinaryConvNet::Forward cache;
        double logit = net.logit(li.image, &cache);
        double p = nn::sigmoid(logit);
        net.input_grad(cache, p - static_cast<double>(li.label), &grads);
      }
      double inv = 1.0 / static_cast<double>(hi - lo);
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

      if (std::find(val_points.begin(), val_points.end(), b + 1) != val_points.end()) {
        double acc = accuracy_of_net(net, val);
        last_acc = acc;
        if (acc > best_acc) {
          best_acc = acc;
          best = net;
        }
      }
    }
  }
  return Detector(std::move(best), cfg.seed, best_acc, last_acc);
}

double evaluate_accuracy(const Detector& detector, const std::vector<LabeledImage>& set) {
  if (set.empty()) throw DataError("evaluate_accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (const LabeledImage& li : set) {
    if (detector.predict(li.image).label == li.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace madv::forensics
