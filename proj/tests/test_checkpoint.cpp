#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "madv/checkpoint.hpp"
#include "test_util.hpp"

using namespace madv;
using namespace madv::testutil;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "madv_ckpt_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("generator checkpoint round-trips bit-exactly") {
  synthesis::GeneratorConfig cfg;
  cfg.d_z = 8;
  cfg.d_w = 8;
  cfg.mapping_depth = 2;
  cfg.levels = 2;
  cfg.base_resolution = 4;
  cfg.features = {6, 4};
  synthesis::Generator gen = synthesis::Generator::random_init(cfg, 123);

  std::string path = tmp_path("gen.bin");
  io::save_generator(gen, path);
  synthesis::Generator loaded = io::load_generator(path);

  CHECK(loaded.checksum() == gen.checksum());
  auto z = synthesis::sample_latent(1, cfg.d_z);
  auto n = synthesis::sample_noise(2, cfg);
  CHECK(loaded.generate(z, n).max_abs_diff(gen.generate(z, n)) == 0.0);
  CHECK(loaded.config().features == cfg.features);
}

TEST_CASE("detector checkpoint preserves parameters and metadata") {
  auto net = forensics::BinaryConvNet::random_init(forensics::Arch::kBottleneck, 16, 9);
  forensics::Detector det(std::move(net), 77, 0.93, 0.91);
  std::string path = tmp_path("det.bin");
  io::save_detector(det, path);
  forensics::Detector loaded = io::load_detector(path);
  CHECK(loaded.checksum() == det.checksum());
  CHECK(loaded.train_seed() == 77);
  CHECK(loaded.best_val_accuracy() == 0.93);
  CHECK(loaded.final_val_accuracy() == 0.91);
  CHECK(loaded.arch() == forensics::Arch::kBottleneck);

  Rng rng(1);
  ImageTensor img = random_image({3, 16, 16}, rng);
  CHECK(loaded.predict(img).logit == det.predict(img).logit);
}

TEST_CASE("feature net checkpoint round-trips") {
  metrics::FeatureNet fn(forensics::BinaryConvNet::random_init(forensics::Arch::kPlain, 16, 5));
  std::string path = tmp_path("fn.bin");
  io::save_feature_net(fn, path);
  metrics::FeatureNet loaded = io::load_feature_net(path);
  CHECK(loaded.checksum() == fn.checksum());
}

TEST_CASE("checkpoint error paths") {
  SUBCASE("missing file names the path") {
    try {
      io::load_generator("/nonexistent/gen.bin");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/gen.bin") != std::string::npos);
    }
  }
  SUBCASE("wrong format tag") {
    auto net = forensics::BinaryConvNet::random_init(forensics::Arch::kSepConv, 16, 3);
    forensics::Detector det(std::move(net), 1, 0.5, 0.5);
    std::string path = tmp_path("mixed.bin");
    io::save_detector(det, path);
    CHECK_THROWS_AS(io::load_generator(path), IoError);
  }
  SUBCASE("feature net file is not a detector") {
    metrics::FeatureNet fn(forensics::BinaryConvNet::random_init(forensics::Arch::kPlain, 16, 4));
    std::string path = tmp_path("fn2.bin");
    io::save_feature_net(fn, path);
    CHECK_THROWS_AS(io::load_detector(path), IoError);
  }
  SUBCASE("truncated file") {
    std::string path = tmp_path("trunc.bin");
    {
      std::ofstream out(path, std::ios::trunc);
      out << "synthgen-v1\n";
    }
    CHECK_THROWS_AS(io::load_generator(path), IoError);
  }
}

TEST_CASE("file_checksum is content-sensitive") {
  std::string p1 = tmp_path("c1.bin");
  std::string p2 = tmp_path("c2.bin");
  {
    std::ofstream a(p1, std::ios::trunc), b(p2, std::ios::trunc);
    a << "hello";
    b << "hellp";
  }
  CHECK(io::file_checksum(p1) != io::file_checksum(p2));
  CHECK(io::file_checksum(p1) == io::file_checksum(p1));
}
