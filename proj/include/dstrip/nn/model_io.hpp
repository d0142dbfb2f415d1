#pragma once

#include <filesystem>

#include "dstrip/nn/unet.hpp"

namespace dstrip::nn {

struct ModelFile {
  UNetConfig config;
  ModelParams<float> params;
};

/// Container layout (little-endian): 8-byte magic "DSTRIPNN", u32 version,
/// the UNetConfig fields, u32 tensor count, then per tensor its name, shape
/// and float32 values.
void save_model(const std::filesystem::path& path, const UNetConfig& cfg, const ModelParams<float>& params);

/// Throws FormatError on bad magic, unknown version or truncation.
ModelFile load_model(const std::filesystem::path& path);

/// As above, and throws ParameterError naming the first config field that
/// differs from `expected`.
ModelFile load_model(const std::filesystem::path& path, const UNetConfig& expected);

} // namespace dstrip::nn
