#pragma once

#include <cstdint>
#include <string>

#include "madv/forensics.hpp"
#include "madv/metrics.hpp"
#include "madv/synthesis.hpp"

namespace madv::io {

// Checkpoint files are a format-tag line, a little-endian uint64 header
// length, a JSON header (config + tensor manifest), then the raw tensor data
// as little-endian doubles in manifest order.

inline constexpr const char* kGeneratorTag = "synthgen-v1";
inline constexpr const char* kDetectorTag = "det-v1";

void save_generator(const synthesis::Generator& generator, const std::string& path);
synthesis::Generator load_generator(const std::string& path);

void save_detector(const forensics::Detector& detector, const std::string& path);
forensics::Detector load_detector(const std::string& path);

void save_feature_net(const metrics::FeatureNet& fn, const std::string& path);
metrics::FeatureNet load_feature_net(const std::string& path);

/// FNV-1a of the whole file, as recorded in run manifests.
std::uint64_t file_checksum(const std::string& path);

}  // namespace madv::io
