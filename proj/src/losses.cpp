#include "dstrip/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dstrip/errors.hpp"

namespace dstrip::loss {

template <typename T>
LossResult<T> dice_loss(const nn::FeatureGrid<T>& target, const nn::FeatureGrid<T>& pred, double eps) {
  if (!target.same_shape(pred) || pred.channels != 2) {
    throw ParameterError("dice_loss: expects two-channel target and prediction of equal shape");
  }
  double overlap = 0.0;
  double denom = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double y = target.data[i];
    const double p = pred.data[i];
    overlap += y * p;
    denom += y * y + p * p;
  }
  const double num = 2.0 * overlap + eps;
  const double den = denom + eps;
  if (!(den > 0.0)) {
    throw DegenerateInputError("dice_loss: zero denominator");
  }
  LossResult<T> r;
  r.value = -num / den;
  r.grad = nn::FeatureGrid<T>(pred.channels, pred.spatial);
  // d/dp of -num/den = -(2 y den - num 2 p) / den^2
  const double inv = 1.0 / (den * den);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double y = target.data[i];
    const double p = pred.data[i];
    r.grad.data[i] = static_cast<T>(-(2.0 * y * den - 2.0 * num * p) * inv);
  }
  return r;
}

template <typename T>
LossResult<T> wsdt_loss(const nn::FeatureGrid<T>& target, const nn::FeatureGrid<T>& pred, double b, double h) {
  if (!target.same_shape(pred)) {
    throw ParameterError("wsdt_loss: target and prediction shapes differ");
  }
  if (!(b >= 0.0 && b <= 1.0) || !(h >= 0.0)) {
    throw ParameterError("wsdt_loss: requires b in [0, 1] and h >= 0");
  }
  const double n = static_cast<double>(pred.data.size());
  LossResult<T> r;
  r.grad = nn::FeatureGrid<T>(pred.channels, pred.spatial);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = target.data[i];
    const double e = static_cast<double>(pred.data[i]) - d;
    const double w = std::abs(d) <= h ? 1.0 : b;
    sum += w * e * e;
    r.grad.data[i] = static_cast<T>(2.0 * w * e / n);
  }
  r.value = sum / n;
  return r;
}

template <typename T>
nn::FeatureGrid<T> one_hot_target(const BinaryMask& y) {
  const auto& d = y.grid.dims();
  nn::FeatureGrid<T> g(2, {d[2], d[1], d[0]});
  const std::size_t n = g.plane();
  for (std::size_t i = 0; i < n; ++i) {
    g.data[i] = y.data[i] ? T(1) : T(0);
    g.data[n + i] = y.data[i] ? T(0) : T(1);
  }
  return g;
}

template <typename T>
nn::FeatureGrid<T> sdt_target(const BinaryMask& y, double cap) {
  const auto& d = y.grid.dims();
  nn::FeatureGrid<T> g(1, {d[2], d[1], d[0]});
  const std::size_t count = y.count();
  if (count == 0 || count == y.data.size()) {
    std::fill(g.data.begin(), g.data.end(), static_cast<T>(count == 0 ? cap : -cap));
    return g;
  }
  const Volume s = mask::sdt(y);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    g.data[i] = static_cast<T>(std::clamp(static_cast<double>(s.data[i]), -cap, cap));
  }
  return g;
}

template LossResult<float> dice_loss(const nn::FeatureGrid<float>&, const nn::FeatureGrid<float>&, double);
template LossResult<double> dice_loss(const nn::FeatureGrid<double>&, const nn::FeatureGrid<double>&, double);
template LossResult<float> wsdt_loss(const nn::FeatureGrid<float>&, const nn::FeatureGrid<float>&, double, double);
template LossResult<double> wsdt_loss(const nn::FeatureGrid<double>&, const nn::FeatureGrid<double>&, double, double);
template nn::FeatureGrid<float> one_hot_target(const BinaryMask&);
template nn::FeatureGrid<double> one_hot_target(const BinaryMask&);
template nn::FeatureGrid<float> sdt_target(const BinaryMask&, double);
template nn::FeatureGrid<double> sdt_target(const BinaryMask&, double);

} // namespace dstrip::loss
