#pragma once

#include <cstdint>

#include "dstrip/nn/unet.hpp"

namespace dstrip::nn {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  ModelParams<T> m;
  ModelParams<T> v;
  AdamHyper hyper;

  /// Zero moments congruent to `params`.
  static AdamState init(const ModelParams<T>& params, AdamHyper hyper);
};

/// Bias-corrected Adam update, in place on `params` and `state`.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state);

} // namespace dstrip::nn
