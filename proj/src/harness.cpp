#include "madv/harness.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "madv/checkpoint.hpp"

namespace madv::harness {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  maybe(j, "master_seed", cfg.master_seed);
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "workers", cfg.workers);
  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    maybe(c, "train_per_class", cfg.corpus.train_per_class);
    maybe(c, "val_per_class", cfg.corpus.val_per_class);
    maybe(c, "test_per_class", cfg.corpus.test_per_class);
    maybe(c, "attack_set", cfg.corpus.attack_set);
    maybe(c, "resolution", cfg.corpus.resolution);
  }
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    maybe(g, "d_z", cfg.generator.d_z);
    maybe(g, "d_w", cfg.generator.d_w);
    maybe(g, "mapping_depth", cfg.generator.mapping_depth);
    maybe(g, "levels", cfg.generator.levels);
    maybe(g, "base_resolution", cfg.generator.base_resolution);
    maybe(g, "out_channels", cfg.generator.out_channels);
    maybe(g, "features", cfg.generator.features);
    maybe(g, "lrelu_slope", cfg.generator.lrelu_slope);
  }
  if (j.contains("detector")) {
    const json& d = j.at("detector");
    maybe(d, "learning_rate", cfg.detector.learning_rate);
    maybe(d, "weight_decay", cfg.detector.weight_decay);
    maybe(d, "epochs", cfg.detector.epochs);
    maybe(d, "validations_per_epoch", cfg.detector.validations_per_epoch);
    maybe(d, "batch_size", cfg.detector.batch_size);
  }
  if (j.contains("gan")) {
    const json& g = j.at("gan");
    maybe(g, "steps", cfg.gan_train.steps);
    maybe(g, "batch_size", cfg.gan_train.batch_size);
    maybe(g, "gen_lr", cfg.gan_train.gen_lr);
    maybe(g, "disc_lr", cfg.gan_train.disc_lr);
  }
  if (j.contains("feature_net")) {
    const json& f = j.at("feature_net");
    maybe(f, "steps", cfg.feature_net.steps);
    maybe(f, "batch_size", cfg.feature_net.batch_size);
    maybe(f, "learning_rate", cfg.feature_net.learning_rate);
    maybe(f, "weight_decay", cfg.feature_net.weight_decay);
  }
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    maybe(a, "eps_latent", cfg.attack.eps_latent);
    maybe(a, "eps_noise", cfg.attack.eps_noise);
    maybe(a, "max_iters", cfg.attack.max_iters);
    maybe(a, "transfer_iters", cfg.attack.transfer_iters);
    maybe(a, "ablation_iters", cfg.attack.ablation_iters);
    maybe(a, "pgd_alpha", cfg.attack.pgd_alpha);
    maybe(a, "pgd_iters", cfg.attack.pgd_iters);
    maybe(a, "pgd_eps_max", cfg.attack.pgd_eps_max);
    maybe(a, "fgsm_eps_max", cfg.attack.fgsm_eps_max);
  }
  if (j.contains("quality")) {
    const json& q = j.at("quality");
    maybe(q, "min_matched", cfg.quality.min_matched);
    maybe(q, "grid_samples", cfg.quality.grid_samples);
  }
  maybe(j, "generator_ckpt", cfg.generator_ckpt);
  maybe(j, "detector_a_ckpt", cfg.detector_a_ckpt);
  maybe(j, "detector_b_ckpt", cfg.detector_b_ckpt);
  maybe(j, "feature_ckpt", cfg.feature_ckpt);

  // Training seeds derive from the master seed.
  cfg.detector.seed = cfg.master_seed;
  cfg.gan_train.seed = cfg.master_seed;
  cfg.feature_net.seed = cfg.master_seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config not found: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path + ": malformed JSON");
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["out_dir"] = out_dir;
  j["workers"] = workers;
  j["corpus"] = {{"train_per_class", corpus.train_per_class},
                 {"val_per_class", corpus.val_per_class},
                 {"test_per_class", corpus.test_per_class},
                 {"attack_set", corpus.attack_set},
                 {"resolution", corpus.resolution}};
  j["generator"] = {{"d_z", generator.d_z},
                    {"d_w", generator.d_w},
                    {"mapping_depth", generator.mapping_depth},
                    {"levels", generator.levels},
                    {"base_resolution", generator.base_resolution},
                    {"out_channels", generator.out_channels},
                    {"features", generator.features},
                    {"lrelu_slope", generator.lrelu_slope}};
  j["detector"] = {{"learning_rate", detector.learning_rate},
                   {"weight_decay", detector.weight_decay},
                   {"epochs", detector.epochs},
                   {"validations_per_epoch", detector.validations_per_epoch},
                   {"batch_size", detector.batch_size}};
  j["gan"] = {{"steps", gan_train.steps},
              {"batch_size", gan_train.batch_size},
              {"gen_lr", gan_train.gen_lr},
              {"disc_lr", gan_train.disc_lr}};
  j["feature_net"] = {{"steps", feature_net.steps},
                      {"batch_size", feature_net.batch_size},
                      {"learning_rate", feature_net.learning_rate},
                      {"weight_decay", feature_net.weight_decay}};
  j["attack"] = {{"eps_latent", attack.eps_latent},
                 {"eps_noise", attack.eps_noise},
                 {"max_iters", attack.max_iters},
                 {"transfer_iters", attack.transfer_iters},
                 {"ablation_iters", attack.ablation_iters},
                 {"pgd_alpha", attack.pgd_alpha},
                 {"pgd_iters", attack.pgd_iters},
                 {"pgd_eps_max", attack.pgd_eps_max},
                 {"fgsm_eps_max", attack.fgsm_eps_max}};
  j["quality"] = {{"min_matched", quality.min_matched}, {"grid_samples", quality.grid_samples}};
  j["generator_ckpt"] = generator_ckpt;
  j["detector_a_ckpt"] = detector_a_ckpt;
  j["detector_b_ckpt"] = detector_b_ckpt;
  j["feature_ckpt"] = feature_ckpt;
  return j;
}

std::string ExperimentConfig::config_hash() const {
  // out_dir and workers do not affect results, so they stay out of the hash.
  json j = to_json();
  j.erase("out_dir");
  j.erase("workers");
  std::string dump = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump.data(), dump.size())));
  return std::string(buf);
}

std::string ExperimentConfig::path(const std::string& rel) const {
  return (std::filesystem::path(out_dir) / rel).string();
}

void ExperimentConfig::validate() const {
  generator.validate();
  detector.validate();
  if (corpus.train_per_class < 1 || corpus.val_per_class < 1 || corpus.test_per_class < 1 ||
      corpus.attack_set < 1) {
    throw ConfigError("config: corpus sizes must be >= 1");
  }
  if (corpus.resolution != generator.output_resolution()) {
    throw ConfigError("config: corpus resolution " + std::to_string(corpus.resolution) +
                      " != generator output " + std::to_string(generator.output_resolution()));
  }
  if (attack.eps_latent <= 0 || attack.eps_noise <= 0 || attack.max_iters < 1 ||
      attack.transfer_iters < 1 || attack.ablation_iters < 1) {
    throw ConfigError("config: attack section has non-positive values");
  }
  if (attack.pgd_alpha <= 0 || attack.pgd_alpha > attack.pgd_eps_max || attack.pgd_iters < 1) {
    throw ConfigError("config: pgd section invalid");
  }
}

Manifest::Manifest(const ExperimentConfig& cfg)
    : path_(cfg.path(file_name())), out_dir_(cfg.out_dir), config_hash_(cfg.config_hash()) {}

void Manifest::record(const std::string& stage, const std::vector<std::string>& rel_outputs,
                      double wall_seconds, json extra) {
  json root;
  {
    std::ifstream in(path_);
    if (in) {
      root = json::parse(in, nullptr, false);
      if (root.is_discarded()) root = json::object();
    }
  }
  root["config_hash"] = config_hash_;
  root["tool_version"] = "0.1.0";
  json outputs = json::array();
  for (const std::string& rel : rel_outputs) {
    std::string full = (std::filesystem::path(out_dir_) / rel).string();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(io::file_checksum(full)));
    outputs.push_back({{"path", rel}, {"fnv1a64", std::string(buf)}});
  }
  json entry;
  entry["outputs"] = outputs;
  entry["wall_seconds"] = wall_seconds;
  if (!extra.empty()) entry["info"] = std::move(extra);
  root["stages"][stage] = std::move(entry);

  std::filesystem::create_directories(out_dir_);
  std::ofstream out(path_, std::ios::trunc);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("manifest write failed: " + path_);
}

std::vector<std::string> Manifest::verify(const std::string& out_dir) {
  std::string path = (std::filesystem::path(out_dir) / file_name()).string();
  std::ifstream in(path);
  if (!in) throw IoError("manifest not found: " + path);
  json root = json::parse(in, nullptr, false);
  if (root.is_discarded()) throw IoError("manifest malformed: " + path);
  std::vector<std::string> bad;
  const json stages = root.value("stages", json::object());
  for (const auto& [stage, entry] : stages.items()) {
    for (const auto& output : entry.value("outputs", json::array())) {
      std::string rel = output.at("path").get<std::string>();
      std::string want = output.at("fnv1a64").get<std::string>();
      std::string full = (std::filesystem::path(out_dir) / rel).string();
      char buf[17];
      try {
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(io::file_checksum(full)));
      } catch (const IoError&) {
        bad.push_back(rel + " (missing)");
        continue;
      }
      if (want != buf) bad.push_back(rel);
    }
  }
  return bad;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write csv: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ",";
    out << header[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      out << row[i];
    }
    out << "\n";
  }
  if (!out) throw IoError("csv write failed: " + path);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
  }
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace madv::harness
