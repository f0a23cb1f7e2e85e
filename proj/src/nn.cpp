#include "madv/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace madv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

std::size_t out_extent(std::size_t in, int k, int stride, int pad) {
  return (in + 2 * static_cast<std::size_t>(pad) - static_cast<std::size_t>(k)) /
             static_cast<std::size_t>(stride) +
         1;
}

// Gathers x {Cin,H,W} into col {Cin*k*k, Ho*Wo}.
void im2col(const Tensor& x, int k, int stride, int pad, std::size_t ho, std::size_t wo,
            std::vector<double>& col) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  col.assign(cin * k * k * ho * wo, 0.0);
  const double* xd = x.data();
  double* cd = col.data();
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        double* out = cd + row * (ho * wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          long iy = static_cast<long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          const double* src = xd + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            long ix = static_cast<long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            out[oy * wo + ox] = src[ix];
          }
        }
      }
    }
  }
}

// Scatter-adds col {Cin*k*k, Ho*Wo} back into gx {Cin,H,W}.
void col2im(const std::vector<double>& col, int k, int stride, int pad, std::size_t ho,
            std::size_t wo, Tensor& gx) {
  const std::size_t cin = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
  const double* cd = col.data();
  double* xd = gx.data();
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const double* src = cd + row * (ho * wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          long iy = static_cast<long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          double* dst = xd + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            long ix = static_cast<long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be {C,H,W}, got " + x.shape_str());
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be {Cout,Cin,k,k}, got " + w.shape_str());
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + w.shape_str());
  if (x.dim(0) != w.dim(1)) {
    throw ShapeError("conv2d: input channels " + x.shape_str() + " vs weight " + w.shape_str());
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d: bias shape " + b.shape_str());
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_conv_args(x, w, b);
  const int k = static_cast<int>(w.dim(2));
  const std::size_t cout = w.dim(0), cin = x.dim(0);
  const std::size_t ho = out_extent(x.dim(1), k, stride, pad);
  const std::size_t wo = out_extent(x.dim(2), k, stride, pad);
  const std::size_t kdim = cin * k * k, n = ho * wo;

  thread_local std::vector<double> col;
  im2col(x, k, stride, pad, ho, wo, col);

  Tensor y({cout, ho, wo});
  MapConst wm(w.data(), static_cast<long>(cout), static_cast<long>(kdim));
  MapConst cm(col.data(), static_cast<long>(kdim), static_cast<long>(n));
  MapMat ym(y.data(), static_cast<long>(cout), static_cast<long>(n));
  ym.noalias() = wm * cm;
  for (std::size_t c = 0; c < cout; ++c) {
    double bias = b[c];
    double* row = y.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) row[i] += bias;
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                         int stride, int pad) {
  const int k = static_cast<int>(w.dim(2));
  const std::size_t cout = w.dim(0), cin = w.dim(1);
  const std::size_t ho = gy.dim(1), wo = gy.dim(2);
  const std::size_t kdim = cin * k * k, n = ho * wo;

  thread_local std::vector<double> gcol;
  gcol.assign(kdim * n, 0.0);
  MapConst wm(w.data(), static_cast<long>(cout), static_cast<long>(kdim));
  MapConst gym(gy.data(), static_cast<long>(cout), static_cast<long>(n));
  MapMat gcm(gcol.data(), static_cast<long>(kdim), static_cast<long>(n));
  gcm.noalias() = wm.transpose() * gym;

  Tensor gx(x_shape);
  col2im(gcol, k, stride, pad, ho, wo, gx);
  return gx;
}

void conv2d_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride,
                       int pad) {
  const int k = static_cast<int>(gw.dim(2));
  const std::size_t cout = gw.dim(0), cin = x.dim(0);
  const std::size_t ho = gy.dim(1), wo = gy.dim(2);
  const std::size_t kdim = cin * k * k, n = ho * wo;

  thread_local std::vector<double> col;
  im2col(x, k, stride, pad, ho, wo, col);
  MapConst cm(col.data(), static_cast<long>(kdim), static_cast<long>(n));
  MapConst gym(gy.data(), static_cast<long>(cout), static_cast<long>(n));
  MapMat gwm(gw.data(), static_cast<long>(cout), static_cast<long>(kdim));
  gwm.noalias() += gym * cm.transpose();
  for (std::size_t c = 0; c < cout; ++c) {
    const double* row = gy.data() + c * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    gb[c] += s;
  }
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 3 || x.dim(0) != w.dim(0)) {
    throw ShapeError("depthwise_conv2d: bad shapes " + x.shape_str() + " / " + w.shape_str());
  }
  const int k = static_cast<int>(w.dim(1));
  const std::size_t c = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const std::size_t ho = out_extent(h, k, stride, pad);
  const std::size_t wo = out_extent(ww, k, stride, pad);
  Tensor y({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* xc = x.data() + ch * h * ww;
    const double* wc = w.data() + ch * k * k;
    double* yc = y.data() + ch * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = b[ch];
        for (int ky = 0; ky < k; ++ky) {
          long iy = static_cast<long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kx = 0; kx < k; ++kx) {
            long ix = static_cast<long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long>(ww)) continue;
            acc += wc[ky * k + kx] * xc[iy * ww + ix];
          }
        }
        yc[oy * wo + ox] = acc;
      }
    }
  }
  return y;
}

Tensor depthwise_conv2d_input_grad(const Tensor& gy, const Tensor& w,
                                   const std::vector<std::size_t>& x_shape, int stride, int pad) {
  const int k = static_cast<int>(w.dim(1));
  const std::size_t c = x_shape[0], h = x_shape[1], ww = x_shape[2];
  const std::size_t ho = gy.dim(1), wo = gy.dim(2);
  Tensor gx(x_shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* gc = gy.data() + ch * ho * wo;
    const double* wc = w.data() + ch * k * k;
    double* xc = gx.data() + ch * h * ww;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double g = gc[oy * wo + ox];
        for (int ky = 0; ky < k; ++ky) {
          long iy = static_cast<long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kx = 0; kx < k; ++kx) {
            long ix = static_cast<long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long>(ww)) continue;
            xc[iy * ww + ix] += g * wc[ky * k + kx];
          }
        }
      }
    }
  }
  return gx;
}

void depthwise_conv2d_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb,
                                 int stride, int pad) {
  const int k = static_cast<int>(gw.dim(1));
  const std::size_t c = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const std::size_t ho = gy.dim(1), wo = gy.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* gc = gy.data() + ch * ho * wo;
    const double* xc = x.data() + ch * h * ww;
    double* wc = gw.data() + ch * k * k;
    double bs = 0.0;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double g = gc[oy * wo + ox];
        bs += g;
        for (int ky = 0; ky < k; ++ky) {
          long iy = static_cast<long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kx = 0; kx < k; ++kx) {
            long ix = static_cast<long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long>(ww)) continue;
            wc[ky * k + kx] += g * xc[iy * ww + ix];
          }
        }
      }
    }
    gb[ch] += bs;
  }
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError("dense: shapes " + x.shape_str() + " / " + w.shape_str());
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor y({m});
  MapConst wm(w.data(), static_cast<long>(m), static_cast<long>(n));
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<long>(n));
  Eigen::Map<Eigen::VectorXd> yv(y.data(), static_cast<long>(m));
  yv.noalias() = wm * xv;
  for (std::size_t i = 0; i < m; ++i) y[i] += b[i];
  return y;
}

Tensor dense_input_grad(const Tensor& gy, const Tensor& w) {
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor gx({n});
  MapConst wm(w.data(), static_cast<long>(m), static_cast<long>(n));
  Eigen::Map<const Eigen::VectorXd> gv(gy.data(), static_cast<long>(m));
  Eigen::Map<Eigen::VectorXd> xv(gx.data(), static_cast<long>(n));
  xv.noalias() = wm.transpose() * gv;
  return gx;
}

void dense_param_grad(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb) {
  const std::size_t m = gw.dim(0), n = gw.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    double g = gy[i];
    double* row = gw.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += g * x[j];
    gb[i] += g;
  }
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) y[i] *= slope;
  }
  return y;
}

Tensor leaky_relu_grad(const Tensor& gy, const Tensor& x, double slope) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    if (x[i] < 0.0) gx[i] *= slope;
  }
  return gx;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid(y[i]);
  return y;
}

Tensor sigmoid_grad_from_output(const Tensor& gy, const Tensor& y) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
  return gx;
}

Tensor upsample2x(const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double v = x.at(ch, i, j);
        y.at(ch, 2 * i, 2 * j) = v;
        y.at(ch, 2 * i, 2 * j + 1) = v;
        y.at(ch, 2 * i + 1, 2 * j) = v;
        y.at(ch, 2 * i + 1, 2 * j + 1) = v;
      }
    }
  }
  return y;
}

Tensor upsample2x_grad(const Tensor& gy) {
  const std::size_t c = gy.dim(0), h = gy.dim(1) / 2, w = gy.dim(2) / 2;
  Tensor gx({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        gx.at(ch, i, j) = gy.at(ch, 2 * i, 2 * j) + gy.at(ch, 2 * i, 2 * j + 1) +
                          gy.at(ch, 2 * i + 1, 2 * j) + gy.at(ch, 2 * i + 1, 2 * j + 1);
      }
    }
  }
  return gx;
}

Tensor global_avg_pool(const Tensor& x) {
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  Tensor y({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* row = x.data() + ch * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    y[ch] = s / static_cast<double>(n);
  }
  return y;
}

Tensor global_avg_pool_grad(const Tensor& gc, const std::vector<std::size_t>& x_shape) {
  Tensor gx(x_shape);
  const std::size_t c = x_shape[0], n = x_shape[1] * x_shape[2];
  for (std::size_t ch = 0; ch < c; ++ch) {
    double g = gc[ch] / static_cast<double>(n);
    double* row = gx.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) row[i] = g;
  }
  return gx;
}

Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == out_h && w == out_w) return x;
  Tensor y({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < out_h; ++i) {
      std::size_t si = i * h / out_h;
      for (std::size_t j = 0; j < out_w; ++j) {
        std::size_t sj = j * w / out_w;
        y.at(ch, i, j) = x.at(ch, si, sj);
      }
    }
  }
  return y;
}

Tensor resize_nearest_grad(const Tensor& gy, const std::vector<std::size_t>& x_shape) {
  const std::size_t c = x_shape[0], h = x_shape[1], w = x_shape[2];
  const std::size_t out_h = gy.dim(1), out_w = gy.dim(2);
  if (h == out_h && w == out_w) return gy;
  Tensor gx(x_shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < out_h; ++i) {
      std::size_t si = i * h / out_h;
      for (std::size_t j = 0; j < out_w; ++j) {
        std::size_t sj = j * w / out_w;
        gx.at(ch, si, sj) += gy.at(ch, i, j);
      }
    }
  }
  return gx;
}

Tensor normal_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  double std_dev = gain / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std_dev * rng.normal();
  return t;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(Tensor::zeros(p->shape()));
      v_.emplace_back(Tensor::zeros(p->shape()));
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[j]);
    }
  }
}

}  // namespace madv::nn
