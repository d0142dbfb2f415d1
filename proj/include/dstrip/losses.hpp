#pragma once

#include "dstrip/maskops.hpp"
#include "dstrip/nn/tensor.hpp"

namespace dstrip::loss {

template <typename T>
struct LossResult {
  double value = 0.0;
  nn::FeatureGrid<T> grad; // dL/d(prediction), congruent to the prediction
};

/// Two-channel soft Dice:
///   L = -(2 sum(y_j p_j + y_k p_k) + eps) / (sum(y_j^2 + p_j^2 + y_k^2 + p_k^2) + eps)
/// with the gradient taken with respect to the probabilities p.
/// Throws DegenerateInputError when the denominator is zero.
template <typename T>
LossResult<T> dice_loss(const nn::FeatureGrid<T>& target, const nn::FeatureGrid<T>& pred, double eps = 0.0);

/// Mean squared error with weight 1 where |target| <= h and `b` elsewhere,
/// averaged over all voxels.
template <typename T>
LossResult<T> wsdt_loss(const nn::FeatureGrid<T>& target, const nn::FeatureGrid<T>& pred, double b, double h);

/// Channel 0 = brain indicator, channel 1 = its complement.
template <typename T>
nn::FeatureGrid<T> one_hot_target(const BinaryMask& y);

/// Signed distance target clamped to [-cap, cap]. Empty masks map to +cap and
/// full masks to -cap everywhere.
template <typename T>
nn::FeatureGrid<T> sdt_target(const BinaryMask& y, double cap);

} // namespace dstrip::loss
