#include <doctest.h>

#include <cmath>

#include "madv/rng.hpp"

using namespace madv;

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    double va = a.normal(), vb = b.normal(), vc = c.normal();
    all_equal &= (va == vb);
    any_diff |= (va != vc);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("normal draws have standard moments") {
  Rng rng(7);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(stddev - 1.0) < 0.05);
}

TEST_CASE("uniform stays in range") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double v = rng.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    double v = rng.uniform(-0.3, 0.3);
    CHECK(v >= -0.3);
    CHECK(v < 0.3);
  }
}

TEST_CASE("derived streams differ from each other and the base") {
  std::uint64_t s1 = Rng::derive(99, 1);
  std::uint64_t s2 = Rng::derive(99, 2);
  std::uint64_t s3 = Rng::derive(100, 1);
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(Rng::derive(99, 1) == s1);
}
