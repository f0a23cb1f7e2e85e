#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>

#include "madv/dataset.hpp"
#include "madv/harness.hpp"
#include "madv/image_io.hpp"
#include "test_util.hpp"

using namespace madv;
using namespace madv::harness;

namespace {

std::string tmp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "madv_harness_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("real corpus: labels, determinism, range") {
  auto corpus = dataset::build_real_corpus(42, 16, 32);
  REQUIRE(corpus.size() == 16);
  for (const auto& li : corpus) {
    CHECK(li.label == 0);
    CHECK(li.image.min() >= 0.0);
    CHECK(li.image.max() <= 1.0);
    CHECK(li.image.shape() == std::vector<std::size_t>{3, 32, 32});
  }
  auto again = dataset::build_real_corpus(42, 16, 32);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(corpus[i].image.max_abs_diff(again[i].image) == 0.0);
  }
  auto other = dataset::build_real_corpus(43, 16, 32);
  CHECK(corpus[0].image.max_abs_diff(other[0].image) > 0.0);
  CHECK_THROWS_AS(dataset::build_real_corpus(1, 0, 32), ConfigError);
}

TEST_CASE("fake corpus: labels, range, determinism, distinct latents") {
  synthesis::GeneratorConfig cfg;
  cfg.d_z = 8;
  cfg.d_w = 8;
  cfg.mapping_depth = 1;
  cfg.levels = 2;
  cfg.base_resolution = 4;
  cfg.features = {6, 4};
  synthesis::Generator gen = synthesis::Generator::random_init(cfg, 7);

  auto fakes = dataset::build_fake_corpus(gen, 99, 12);
  REQUIRE(fakes.size() == 12);
  for (const auto& li : fakes) {
    CHECK(li.label == 1);
    CHECK(li.image.min() >= 0.0);
    CHECK(li.image.max() <= 1.0);
  }
  auto again = dataset::build_fake_corpus(gen, 99, 12);
  CHECK(fakes[3].image.max_abs_diff(again[3].image) == 0.0);

  auto set = dataset::build_attack_set(gen, 99, 12);
  std::set<std::uint64_t> latent_sums;
  for (const auto& s : set) latent_sums.insert(tensor_checksum(s.z.values));
  CHECK(latent_sums.size() == 12);
}

TEST_CASE("train and attack latent seed streams are disjoint") {
  std::uint64_t master = 7;
  std::uint64_t train_seed = Rng::derive(master, streams::kFakeTrain);
  std::uint64_t attack_seed = Rng::derive(master, streams::kAttackSet);
  CHECK(train_seed != attack_seed);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 500; ++i) {
    seen.insert(dataset::latent_seed(train_seed, i));
    seen.insert(dataset::latent_seed(attack_seed, i));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("real and untrained-fake corpora have a measurable statistics gap") {
  synthesis::GeneratorConfig cfg;  // desk defaults
  synthesis::Generator gen = synthesis::Generator::random_init(cfg, 3);
  auto reals = dataset::build_real_corpus(1, 64, 32);
  auto fakes = dataset::build_fake_corpus(gen, 2, 64);

  // Per-image mean spread: procedural faces vary widely across the corpus,
  // the untrained generator's outputs cluster tightly.
  auto spread = [](const std::vector<forensics::LabeledImage>& set) {
    double sum = 0, sq = 0;
    for (const auto& li : set) {
      double m = li.image.mean();
      sum += m;
      sq += m * m;
    }
    double mean = sum / static_cast<double>(set.size());
    return std::sqrt(std::max(0.0, sq / static_cast<double>(set.size()) - mean * mean));
  };
  CHECK(spread(reals) > 2.0 * spread(fakes));
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) CHECK(h.load() == 1);
  parallel_for(0, 4, [&](std::size_t) { FAIL("should not run"); });
}

TEST_CASE("write_csv produces identical bytes on rerun") {
  std::string dir = tmp_dir("csv");
  std::string p1 = dir + "/a.csv";
  std::string p2 = dir + "/b.csv";
  std::vector<std::string> header = {"x", "y"};
  std::vector<std::vector<std::string>> rows = {{"1", format_fixed(0.123456789)},
                                                {"2", format_fixed(1.0)}};
  write_csv(p1, header, rows);
  write_csv(p2, header, rows);
  std::ifstream a(p1), b(p2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa == "x,y\n1,0.123457\n2,1.000000\n");
}

TEST_CASE("experiment config: defaults, hash stability, validation") {
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
  CHECK(cfg.master_seed == 7);
  CHECK(cfg.attack.eps_latent == 0.004);
  CHECK(cfg.attack.eps_noise == 0.05);
  CHECK(cfg.attack.max_iters == 10);
  CHECK(cfg.attack.pgd_alpha == 0.01);
  CHECK(cfg.attack.pgd_iters == 40);
  CHECK(cfg.attack.pgd_eps_max == 0.3);
  CHECK(cfg.detector.learning_rate == 2e-4);
  CHECK(cfg.detector.weight_decay == 1e-3);
  CHECK(cfg.detector.epochs == 3);
  CHECK(cfg.detector.validations_per_epoch == 5);

  std::string h1 = cfg.config_hash();
  cfg.out_dir = "elsewhere";
  cfg.workers = 3;
  CHECK(cfg.config_hash() == h1);
  cfg.master_seed = 8;
  CHECK(cfg.config_hash() != h1);

  nlohmann::json bad = {{"corpus", {{"train_per_class", 0}}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  nlohmann::json mismatch = {{"corpus", {{"resolution", 16}}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(mismatch), ConfigError);
}

TEST_CASE("config file loading distinguishes missing from malformed") {
  std::string dir = tmp_dir("cfg");
  CHECK_THROWS_AS(ExperimentConfig::from_file(dir + "/none.json"), IoError);
  std::string bad = dir + "/bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_AS(ExperimentConfig::from_file(bad), ConfigError);
  std::string good = dir + "/good.json";
  {
    std::ofstream out(good);
    out << R"({"master_seed": 21})";
  }
  CHECK(ExperimentConfig::from_file(good).master_seed == 21);
}

TEST_CASE("manifest records and verifies checksums") {
  std::string dir = tmp_dir("manifest");
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
  cfg.out_dir = dir;
  std::string artifact = dir + "/artifact.txt";
  {
    std::ofstream out(artifact);
    out << "payload";
  }
  Manifest manifest(cfg);
  manifest.record("stage-x", {"artifact.txt"}, 0.5, {{"note", "test"}});
  CHECK(Manifest::verify(dir).empty());

  {
    std::ofstream out(artifact, std::ios::trunc);
    out << "tampered";
  }
  auto bad = Manifest::verify(dir);
  REQUIRE(bad.size() == 1);
  CHECK(bad[0] == "artifact.txt");
}

TEST_CASE("png writer emits files and grids keep shapes") {
  std::string dir = tmp_dir("png");
  Rng rng(1);
  Tensor img = testutil::random_image({3, 8, 8}, rng);
  io::write_png(dir + "/img.png", img, 2);
  CHECK(std::filesystem::file_size(dir + "/img.png") > 0);

  Tensor strip = io::hstack_images({img, img, img}, 2);
  CHECK(strip.shape() == std::vector<std::size_t>{3, 8, 8 * 3 + 4});
  Tensor grid = io::vstack_images({strip, strip}, 2);
  CHECK(grid.shape() == std::vector<std::size_t>{3, 18, 28});
  CHECK_THROWS_AS(io::write_png(dir + "/bad.png", Tensor({2, 4, 4})), ShapeError);
}
