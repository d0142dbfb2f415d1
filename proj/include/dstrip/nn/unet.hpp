#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dstrip/maskops.hpp"
#include "dstrip/nn/layers.hpp"
#include "dstrip/nn/tensor.hpp"
#include "dstrip/volgrid.hpp"

namespace dstrip::nn {

/// softmax2: brain/background probabilities (channel 0 is brain).
/// sdt1: one linear channel regressing the signed distance in mm.
enum class HeadMode { softmax2, sdt1 };

const char* to_string(HeadMode h);
HeadMode head_from_string(const std::string& s);

struct UNetConfig {
  int levels = 3;
  std::vector<int> features{8, 16, 32};
  int convs_per_level = 2;
  int kernel = 3;
  double leaky_slope = 0.2;
  HeadMode head = HeadMode::softmax2;
  int input_size = 32;

  /// Features doubling from `base` at each level.
  static UNetConfig with_doubling(int levels, int base, int input_size, HeadMode head);

  int output_channels() const { return head == HeadMode::softmax2 ? 2 : 1; }

  /// Throws ParameterError on inconsistent settings.
  void validate() const;

  bool operator==(const UNetConfig&) const = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;
};

/// Ordered parameter list; names and shapes follow the topology of a UNetConfig.
template <typename T>
struct ModelParams {
  std::vector<NamedTensor<T>> tensors;

  std::size_t size() const;
  const NamedTensor<T>& get(const std::string& name) const;
  NamedTensor<T>& get(const std::string& name);

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& t : tensors) {
      out.tensors.push_back({t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end())});
    }
    return out;
  }

  /// Same names and shapes with all values zero.
  ModelParams zeros_like() const;
  bool congruent(const ModelParams& other) const;
};

/// Expected (name, shape) list for a configuration.
std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const UNetConfig& cfg);

/// Prior brain fraction encoded in the initial softmax2 head bias.
constexpr double kHeadBrainPrior = 0.1;

/// He-normal trunk kernels scaled for the leaky slope, zero trunk biases.
/// The head starts with zero weights; a softmax2 head gets bias
/// (logit(brain_prior), 0) so every voxel starts at probability brain_prior.
template <typename T>
ModelParams<T> init_params(const UNetConfig& cfg, std::uint64_t seed, double brain_prior = kHeadBrainPrior);

/// All-zero parameters; the softmax2 head then outputs 0.5 everywhere.
template <typename T>
ModelParams<T> zero_params(const UNetConfig& cfg);

/// Intermediate activations kept for the backward pass.
template <typename T>
struct UNetCache {
  struct ConvRecord {
    FeatureGrid<T> input;
    FeatureGrid<T> activated;
  };
  std::vector<std::vector<ConvRecord>> encoder;
  std::vector<std::vector<ConvRecord>> decoder; // indexed by level, levels-1 entries
  std::vector<PoolResult<T>> pools;
  FeatureGrid<T> head_input;
  FeatureGrid<T> output;
};

template <typename T>
struct ForwardResult {
  FeatureGrid<T> output; // probabilities (softmax2) or distances (sdt1)
  UNetCache<T> cache;
};

/// Encoder/decoder with skip concatenation at every level. The input must be a
/// single channel with every spatial dim equal to cfg.input_size.
template <typename T>
ForwardResult<T> unet_forward(const ModelParams<T>& params, const UNetConfig& cfg, const FeatureGrid<T>& x);

/// Parameter gradients given dL/d(output). For softmax2 the output gradient is
/// taken with respect to the probabilities.
template <typename T>
ModelParams<T> unet_backward(const ModelParams<T>& params, const UNetConfig& cfg, const UNetCache<T>& cache,
                             const FeatureGrid<T>& grad_output);

/// Volume to single-channel feature grid; the flat voxel order is unchanged,
/// so the last feature axis is the first volume axis.
template <typename T>
FeatureGrid<T> to_feature_grid(const Volume& v);

/// Thresholded prediction: brain probability > 0.5 (softmax2) or predicted
/// distance < 0 (sdt1).
BinaryMask predict_mask(const ModelParams<float>& params, const UNetConfig& cfg, const Volume& x);

/// x multiplied by the mask.
Volume apply_mask(const Volume& x, const BinaryMask& m);

} // namespace dstrip::nn
