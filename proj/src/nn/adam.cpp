#include "dstrip/nn/adam.hpp"

#include <cmath>

#include "dstrip/errors.hpp"

namespace dstrip::nn {

template <typename T>
AdamState<T> AdamState<T>::init(const ModelParams<T>& params, AdamHyper hyper) {
  return AdamState{0, params.zeros_like(), params.zeros_like(), hyper};
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state) {
  if (!params.congruent(grads) || !params.congruent(state.m) || !params.congruent(state.v)) {
    throw ParameterError("adam_step: parameters, gradients and moments are not congruent");
  }
  const AdamHyper& h = state.hyper;
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& p = params.tensors[t].data;
    const auto& g = grads.tensors[t].data;
    auto& m = state.m.tensors[t].data;
    auto& v = state.v.tensors[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&);
template void adam_step(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&);

} // namespace dstrip::nn
