#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dstrip/nn/train.hpp"
#include "dstrip/nn/unet.hpp"
#include "dstrip/synthgen.hpp"

namespace dstrip::cli {

/// Phantom cohort sizes for the pipeline.
struct DataConfig {
  int n_train = 50;
  int n_val = 7;
  int n_test = 10;

  bool operator==(const DataConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  synth::SynthConfig synth;
  nn::UNetConfig net;
  nn::LossConfig loss;
  nn::TrainConfig train;
  DataConfig data;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Defaults used by `config --dump-defaults`.
PipelineConfig default_config();

/// Parses the key = value format: `[section]` headers, dotted keys, numbers,
/// booleans, quoted strings and flat arrays, `#` comments. Every key must be
/// present and unknown keys are rejected; errors name the offending key.
/// Throws ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// A file holding only the synth section (or a full pipeline config).
synth::SynthConfig load_synth_config(const std::filesystem::path& path);

/// Full config text; parse_config(dump_config(c)) == c.
std::string dump_config(const PipelineConfig& c);

} // namespace dstrip::cli
