#include <doctest.h>

#include "madv/nn.hpp"
#include "test_util.hpp"

using namespace madv;
using namespace madv::testutil;

namespace {

double weighted_sum(const Tensor& y, const Tensor& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d matches finite differences") {
  Rng rng(1);
  for (int stride : {1, 2}) {
    Tensor x = random_tensor({3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.5);
    Tensor b = random_tensor({4}, rng, 0.2);
    Tensor y = nn::conv2d(x, w, b, stride, 1);
    Tensor c = random_tensor(y.shape(), rng);

    Tensor gx = nn::conv2d_input_grad(c, w, x.shape(), stride, 1);
    Tensor gw = Tensor::zeros(w.shape());
    Tensor gb = Tensor::zeros(b.shape());
    nn::conv2d_param_grad(c, x, gw, gb, stride, 1);

    auto f = [&]() { return weighted_sum(nn::conv2d(x, w, b, stride, 1), c); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
    CHECK(compare_grads(gw, finite_diff(f, w)).passed());
    CHECK(compare_grads(gb, finite_diff(f, b)).passed());
  }
}

TEST_CASE("conv2d 1x1 matches finite differences") {
  Rng rng(2);
  Tensor x = random_tensor({5, 4, 4}, rng);
  Tensor w = random_tensor({2, 5, 1, 1}, rng);
  Tensor b = random_tensor({2}, rng);
  Tensor y = nn::conv2d(x, w, b, 1, 0);
  Tensor c = random_tensor(y.shape(), rng);
  Tensor gx = nn::conv2d_input_grad(c, w, x.shape(), 1, 0);
  auto f = [&]() { return weighted_sum(nn::conv2d(x, w, b, 1, 0), c); };
  CHECK(compare_grads(gx, finite_diff(f, x)).passed());
}

TEST_CASE("conv2d shape errors") {
  Tensor x({3, 6, 6});
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({4, 2, 3, 3}), Tensor({4}), 1, 1), ShapeError);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({4, 3, 3, 3}), Tensor({5}), 1, 1), ShapeError);
}

TEST_CASE("depthwise conv matches finite differences") {
  Rng rng(3);
  for (int stride : {1, 2}) {
    Tensor x = random_tensor({4, 5, 5}, rng);
    Tensor w = random_tensor({4, 3, 3}, rng, 0.5);
    Tensor b = random_tensor({4}, rng, 0.2);
    Tensor y = nn::depthwise_conv2d(x, w, b, stride, 1);
    Tensor c = random_tensor(y.shape(), rng);

    Tensor gx = nn::depthwise_conv2d_input_grad(c, w, x.shape(), stride, 1);
    Tensor gw = Tensor::zeros(w.shape());
    Tensor gb = Tensor::zeros(b.shape());
    nn::depthwise_conv2d_param_grad(c, x, gw, gb, stride, 1);

    auto f = [&]() { return weighted_sum(nn::depthwise_conv2d(x, w, b, stride, 1), c); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
    CHECK(compare_grads(gw, finite_diff(f, w)).passed());
    CHECK(compare_grads(gb, finite_diff(f, b)).passed());
  }
}

TEST_CASE("dense matches finite differences") {
  Rng rng(4);
  Tensor x = random_tensor({7}, rng);
  Tensor w = random_tensor({3, 7}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor c = random_tensor({3}, rng);
  Tensor gx = nn::dense_input_grad(c, w);
  Tensor gw = Tensor::zeros(w.shape());
  Tensor gb = Tensor::zeros(b.shape());
  nn::dense_param_grad(c, x, gw, gb);
  auto f = [&]() { return weighted_sum(nn::dense(x, w, b), c); };
  CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  CHECK(compare_grads(gw, finite_diff(f, w)).passed());
  CHECK(compare_grads(gb, finite_diff(f, b)).passed());
}

TEST_CASE("activations and pooling match finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor c = random_tensor(x.shape(), rng);

  SUBCASE("leaky relu") {
    Tensor gx = nn::leaky_relu_grad(c, x, 0.2);
    auto f = [&]() { return weighted_sum(nn::leaky_relu(x, 0.2), c); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  }
  SUBCASE("sigmoid") {
    Tensor y = nn::sigmoid(x);
    Tensor gx = nn::sigmoid_grad_from_output(c, y);
    auto f = [&]() { return weighted_sum(nn::sigmoid(x), c); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  }
  SUBCASE("upsample2x") {
    Tensor y = nn::upsample2x(x);
    Tensor cy = random_tensor(y.shape(), rng);
    Tensor gx = nn::upsample2x_grad(cy);
    auto f = [&]() { return weighted_sum(nn::upsample2x(x), cy); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  }
  SUBCASE("global average pool") {
    Tensor cp = random_tensor({2}, rng);
    Tensor gx = nn::global_avg_pool_grad(cp, x.shape());
    auto f = [&]() { return weighted_sum(nn::global_avg_pool(x), cp); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  }
  SUBCASE("nearest resize") {
    Tensor y = nn::resize_nearest(x, 3, 3);
    Tensor cy = random_tensor(y.shape(), rng);
    Tensor gx = nn::resize_nearest_grad(cy, x.shape());
    auto f = [&]() { return weighted_sum(nn::resize_nearest(x, 3, 3), cy); };
    CHECK(compare_grads(gx, finite_diff(f, x)).passed());
  }
}

TEST_CASE("upsample2x duplicates entries") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor y = nn::upsample2x(x);
  CHECK(y.dim(1) == 4);
  CHECK(y.at(0, 0, 0) == 1);
  CHECK(y.at(0, 0, 1) == 1);
  CHECK(y.at(0, 1, 1) == 1);
  CHECK(y.at(0, 3, 3) == 4);
}

TEST_CASE("adam descends a quadratic deterministically") {
  auto run = [&]() {
    Tensor p({2}, {1.0, -2.0});
    nn::Adam opt(0.05, 0.0);
    for (int i = 0; i < 200; ++i) {
      Tensor g = p;  // gradient of 0.5*||p||^2
      g *= 1.0;
      std::vector<Tensor*> params{&p};
      std::vector<const Tensor*> grads{&g};
      opt.step(params, grads);
    }
    return p;
  };
  Tensor p1 = run();
  Tensor p2 = run();
  CHECK(p1.l2_norm() < 0.05);
  CHECK(p1.max_abs_diff(p2) == 0.0);
}

TEST_CASE("adam weight decay shrinks an unforced parameter") {
  Tensor p({1}, {1.0});
  Tensor g({1}, {0.0});
  nn::Adam opt(0.1, 0.5);
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  for (int i = 0; i < 10; ++i) opt.step(params, grads);
  CHECK(p[0] < 1.0);
  CHECK(p[0] > 0.0);
}
