#include "madv/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace madv::io {

using nlohmann::json;

namespace {

struct TensorEntry {
  std::string name;
  const Tensor* tensor;
};

void write_file(const std::string& path, const std::string& tag, const json& header,
                const std::vector<TensorEntry>& tensors) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);

  json full = header;
  full["format"] = tag;
  json manifest = json::array();
  for (const auto& e : tensors) {
    manifest.push_back({{"name", e.name}, {"shape", e.tensor->shape()}});
  }
  full["tensors"] = manifest;
  std::string hdr = full.dump();

  out << tag << "\n";
  std::uint64_t len = hdr.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& e : tensors) {
    out.write(reinterpret_cast<const char*>(e.tensor->data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

json read_header(std::ifstream& in, const std::string& path, const std::string& expected_tag) {
  std::string tag;
  if (!std::getline(in, tag)) throw IoError("checkpoint truncated: " + path);
  if (tag != expected_tag) {
    throw IoError("checkpoint " + path + ": format tag '" + tag + "', expected '" + expected_tag +
                  "'");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hdr(len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint truncated: " + path);
  json parsed = json::parse(hdr, nullptr, false);
  if (parsed.is_discarded()) throw IoError("checkpoint " + path + ": malformed header");
  return parsed;
}

std::ifstream open_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path);
  return in;
}

void read_tensor(std::ifstream& in, const std::string& path, const json& entry, Tensor& dst,
                 const std::string& want_name) {
  std::string name = entry.at("name").get<std::string>();
  std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
  if (name != want_name || shape != dst.shape()) {
    throw IoError("checkpoint " + path + ": tensor '" + name + "' does not match expected '" +
                  want_name + "'");
  }
  in.read(reinterpret_cast<char*>(dst.data()),
          static_cast<std::streamsize>(dst.size() * sizeof(double)));
  if (!in) throw IoError("checkpoint truncated: " + path);
}

}  // namespace

void save_generator(const synthesis::Generator& generator, const std::string& path) {
  const auto& cfg = generator.config();
  json header;
  header["config"] = {{"d_z", cfg.d_z},
                      {"d_w", cfg.d_w},
                      {"mapping_depth", cfg.mapping_depth},
                      {"levels", cfg.levels},
                      {"base_resolution", cfg.base_resolution},
                      {"out_channels", cfg.out_channels},
                      {"features", cfg.features},
                      {"lrelu_slope", cfg.lrelu_slope}};
  std::vector<TensorEntry> tensors;
  generator.params().for_each_tensor(
      [&](const std::string& name, const Tensor& t) { tensors.push_back({name, &t}); });
  write_file(path, kGeneratorTag, header, tensors);
}

synthesis::Generator load_generator(const std::string& path) {
  std::ifstream in = open_checkpoint(path);
  json header = read_header(in, path, kGeneratorTag);
  const json& c = header.at("config");
  synthesis::GeneratorConfig cfg;
  cfg.d_z = c.at("d_z").get<int>();
  cfg.d_w = c.at("d_w").get<int>();
  cfg.mapping_depth = c.at("mapping_depth").get<int>();
  cfg.levels = c.at("levels").get<int>();
  cfg.base_resolution = c.at("base_resolution").get<int>();
  cfg.out_channels = c.at("out_channels").get<int>();
  cfg.features = c.at("features").get<std::vector<int>>();
  cfg.lrelu_slope = c.at("lrelu_slope").get<double>();

  synthesis::Generator g = synthesis::Generator::zero_init(cfg);
  const json& manifest = header.at("tensors");
  std::size_t idx = 0;
  // Tensors stream in for_each order; collect mutable refs first.
  std::vector<std::pair<std::string, Tensor*>> slots;
  const_cast<synthesis::GeneratorParams&>(g.params())
      .for_each_tensor([&](const std::string& name, Tensor& t) { slots.emplace_back(name, &t); });
  if (manifest.size() != slots.size()) {
    throw IoError("checkpoint " + path + ": tensor count mismatch");
  }
  for (auto& [name, t] : slots) {
    read_tensor(in, path, manifest.at(idx), *t, name);
    ++idx;
  }
  return g;
}

namespace {

void save_net(const forensics::BinaryConvNet& net, const std::string& path, json meta) {
  json header;
  header["architecture_id"] = std::string(1, forensics::arch_id(net.arch()));
  header["input_resolution"] = net.input_resolution();
  header["meta"] = std::move(meta);
  std::vector<TensorEntry> tensors;
  const auto& ops = net.ops();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].w.size() == 0) continue;
    tensors.push_back({"op" + std::to_string(i) + ".w", &ops[i].w});
    tensors.push_back({"op" + std::to_string(i) + ".b", &ops[i].b});
  }
  write_file(path, kDetectorTag, header, tensors);
}

forensics::BinaryConvNet load_net(const std::string& path, json* meta_out) {
  std::ifstream in = open_checkpoint(path);
  json header = read_header(in, path, kDetectorTag);
  std::string arch_str = header.at("architecture_id").get<std::string>();
  if (arch_str.size() != 1) throw IoError("checkpoint " + path + ": bad architecture id");
  forensics::Arch arch = forensics::arch_from_id(arch_str[0]);
  int resolution = header.at("input_resolution").get<int>();

  forensics::BinaryConvNet net = forensics::BinaryConvNet::zero_init(arch, resolution);
  const json& manifest = header.at("tensors");
  std::size_t idx = 0;
  auto& ops = net.ops_mutable();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].w.size() == 0) continue;
    if (idx + 2 > manifest.size()) {
      throw IoError("checkpoint " + path + ": tensor count mismatch");
    }
    read_tensor(in, path, manifest.at(idx++), ops[i].w, "op" + std::to_string(i) + ".w");
    read_tensor(in, path, manifest.at(idx++), ops[i].b, "op" + std::to_string(i) + ".b");
  }
  if (idx != manifest.size()) throw IoError("checkpoint " + path + ": tensor count mismatch");
  if (meta_out) *meta_out = header.value("meta", json::object());
  return net;
}

}  // namespace

void save_detector(const forensics::Detector& detector, const std::string& path) {
  json meta = {{"train_seed", detector.train_seed()},
               {"best_val_accuracy", detector.best_val_accuracy()},
               {"final_val_accuracy", detector.final_val_accuracy()}};
  save_net(detector.net(), path, std::move(meta));
}

forensics::Detector load_detector(const std::string& path) {
  json meta;
  forensics::BinaryConvNet net = load_net(path, &meta);
  if (net.arch() == forensics::Arch::kPlain) {
    throw IoError("checkpoint " + path + ": holds a feature net, not a detector");
  }
  return forensics::Detector(std::move(net), meta.value("train_seed", 0ull),
                             meta.value("best_val_accuracy", -1.0),
                             meta.value("final_val_accuracy", -1.0));
}

void save_feature_net(const metrics::FeatureNet& fn, const std::string& path) {
  save_net(fn.net(), path, json::object());
}

metrics::FeatureNet load_feature_net(const std::string& path) {
  forensics::BinaryConvNet net = load_net(path, nullptr);
  if (net.arch() != forensics::Arch::kPlain) {
    throw IoError("checkpoint " + path + ": not a feature net");
  }
  return metrics::FeatureNet(std::move(net));
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

}  // namespace madv::io
