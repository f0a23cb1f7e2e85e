#pragma once

#include <cstddef>
#include <vector>

#include "madv/rng.hpp"
#include "madv/tensor.hpp"

namespace madv::nn {

// All single-sample ops: images are {C,H,W}, vectors {N}. Each forward op has
// explicit input-gradient and parameter-gradient companions so composite
// models can hand-wire their backward passes.

// conv2d: w {Cout,Cin,k,k}, b {Cout}, zero padding `pad`, square stride.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                         int stride, int pad);
void conv2d_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

// depthwise conv: w {C,k,k}, b {C}; one filter per channel.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor depthwise_conv2d_input_grad(const Tensor& gy, const Tensor& w,
                                   const std::vector<std::size_t>& x_shape, int stride, int pad);
void depthwise_conv2d_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb,
                                 int stride, int pad);

// dense: x {N}, w {M,N}, b {M} -> {M}
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor dense_input_grad(const Tensor& gy, const Tensor& w);
void dense_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_grad(const Tensor& gy, const Tensor& x, double slope);

Tensor sigmoid(const Tensor& x);
double sigmoid(double x);
/// Backward through sigmoid given the forward *output* y.
Tensor sigmoid_grad_from_output(const Tensor& gy, const Tensor& y);

Tensor upsample2x(const Tensor& x);
Tensor upsample2x_grad(const Tensor& gy);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_grad(const Tensor& gc, const std::vector<std::size_t>& x_shape);

Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor resize_nearest_grad(const Tensor& gy, const std::vector<std::size_t>& x_shape);

/// Kaiming-style normal init: stddev = gain / sqrt(fan_in).
Tensor normal_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng, double gain);

/// Adam with decoupled weight decay. Moment state is keyed by parameter
/// position, so the same parameter list must be passed on every step.
class Adam {
 public:
  Adam(double lr, double weight_decay) : lr_(lr), weight_decay_(weight_decay) {}

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

 private:
  double lr_;
  double weight_decay_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace madv::nn
