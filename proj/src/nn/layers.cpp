#include "dstrip/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "dstrip/errors.hpp"

namespace dstrip::nn {

template <typename T>
FeatureGrid<T> leaky_relu(const FeatureGrid<T>& x, T slope) {
  FeatureGrid<T> y = x;
  for (T& v : y.data) {
    v = v > T(0) ? v : slope * v;
  }
  return y;
}

template <typename T>
FeatureGrid<T> leaky_relu_backward(const FeatureGrid<T>& activated, const FeatureGrid<T>& grad, T slope) {
  if (!activated.same_shape(grad)) {
    throw ParameterError("leaky_relu_backward: shape mismatch");
  }
  FeatureGrid<T> g = grad;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(activated.data[i] > T(0))) {
      g.data[i] *= slope;
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2(const FeatureGrid<T>& x) {
  const auto& s = x.spatial;
  if (s[0] % 2 || s[1] % 2 || s[2] % 2) {
    throw ParameterError("maxpool2: spatial dims must be even");
  }
  const std::array<int, 3> o{s[0] / 2, s[1] / 2, s[2] / 2};
  PoolResult<T> r{FeatureGrid<T>(x.channels, o), {}};
  r.argmax.resize(r.output.data.size());
  std::size_t out_idx = 0;
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    for (int i = 0; i < o[0]; ++i) {
      for (int j = 0; j < o[1]; ++j) {
        for (int k = 0; k < o[2]; ++k, ++out_idx) {
          // Candidates are visited in increasing linear index; strict > keeps the first maximum.
          std::uint32_t best = 0;
          T best_v = T(0);
          bool first = true;
          for (int di = 0; di < 2; ++di) {
            for (int dj = 0; dj < 2; ++dj) {
              for (int dk = 0; dk < 2; ++dk) {
                const auto off = static_cast<std::uint32_t>(((2 * i + di) * s[1] + (2 * j + dj)) * s[2] + (2 * k + dk));
                if (first || src[off] > best_v) {
                  best = off;
                  best_v = src[off];
                  first = false;
                }
              }
            }
          }
          r.output.data[out_idx] = best_v;
          r.argmax[out_idx] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
FeatureGrid<T> maxpool2_backward(const PoolResult<T>& pooled, const FeatureGrid<T>& grad, std::array<int, 3> input_spatial) {
  if (!pooled.output.same_shape(grad)) {
    throw ParameterError("maxpool2_backward: shape mismatch");
  }
  FeatureGrid<T> g(grad.channels, input_spatial);
  const std::size_t per_channel = grad.plane();
  for (int c = 0; c < grad.channels; ++c) {
    T* dst = g.channel(c);
    for (std::size_t i = 0; i < per_channel; ++i) {
      const std::size_t idx = per_channel * c + i;
      dst[pooled.argmax[idx]] += grad.data[idx];
    }
  }
  return g;
}

template <typename T>
FeatureGrid<T> upsample2(const FeatureGrid<T>& x) {
  const auto& s = x.spatial;
  FeatureGrid<T> y(x.channels, {2 * s[0], 2 * s[1], 2 * s[2]});
  const auto& o = y.spatial;
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    T* dst = y.channel(c);
    for (int i = 0; i < o[0]; ++i) {
      for (int j = 0; j < o[1]; ++j) {
        const T* srow = src + (static_cast<std::size_t>(i / 2) * s[1] + j / 2) * s[2];
        T* drow = dst + (static_cast<std::size_t>(i) * o[1] + j) * o[2];
        for (int k = 0; k < o[2]; ++k) {
          drow[k] = srow[k / 2];
        }
      }
    }
  }
  return y;
}

template <typename T>
FeatureGrid<T> upsample2_backward(const FeatureGrid<T>& grad) {
  const auto& s = grad.spatial;
  if (s[0] % 2 || s[1] % 2 || s[2] % 2) {
    throw ParameterError("upsample2_backward: spatial dims must be even");
  }
  FeatureGrid<T> g(grad.channels, {s[0] / 2, s[1] / 2, s[2] / 2});
  const auto& o = g.spatial;
  for (int c = 0; c < grad.channels; ++c) {
    const T* src = grad.channel(c);
    T* dst = g.channel(c);
    for (int i = 0; i < s[0]; ++i) {
      for (int j = 0; j < s[1]; ++j) {
        const T* srow = src + (static_cast<std::size_t>(i) * s[1] + j) * s[2];
        T* drow = dst + (static_cast<std::size_t>(i / 2) * o[1] + j / 2) * o[2];
        for (int k = 0; k < s[2]; ++k) {
          drow[k / 2] += srow[k];
        }
      }
    }
  }
  return g;
}

template <typename T>
FeatureGrid<T> concat(const FeatureGrid<T>& a, const FeatureGrid<T>& b) {
  if (a.spatial != b.spatial) {
    throw ParameterError("concat: spatial shape mismatch");
  }
  FeatureGrid<T> y(a.channels + b.channels, a.spatial);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return y;
}

template <typename T>
FeatureGrid<T> softmax(const FeatureGrid<T>& logits) {
  FeatureGrid<T> p(logits.channels, logits.spatial);
  const std::size_t n = logits.plane();
  for (std::size_t v = 0; v < n; ++v) {
    T mx = logits.data[v];
    for (int c = 1; c < logits.channels; ++c) {
      mx = std::max(mx, logits.data[n * c + v]);
    }
    T sum = T(0);
    for (int c = 0; c < logits.channels; ++c) {
      const T e = std::exp(logits.data[n * c + v] - mx);
      p.data[n * c + v] = e;
      sum += e;
    }
    for (int c = 0; c < logits.channels; ++c) {
      p.data[n * c + v] /= sum;
    }
  }
  return p;
}

template <typename T>
FeatureGrid<T> softmax_backward(const FeatureGrid<T>& probs, const FeatureGrid<T>& grad) {
  if (!probs.same_shape(grad)) {
    throw ParameterError("softmax_backward: shape mismatch");
  }
  FeatureGrid<T> g(probs.channels, probs.spatial);
  const std::size_t n = probs.plane();
  for (std::size_t v = 0; v < n; ++v) {
    T dot = T(0);
    for (int c = 0; c < probs.channels; ++c) {
      dot += probs.data[n * c + v] * grad.data[n * c + v];
    }
    for (int c = 0; c < probs.channels; ++c) {
      g.data[n * c + v] = probs.data[n * c + v] * (grad.data[n * c + v] - dot);
    }
  }
  return g;
}

#define DSTRIP_INSTANTIATE_LAYERS(T)                                                                        \
  template FeatureGrid<T> leaky_relu(const FeatureGrid<T>&, T);                                             \
  template FeatureGrid<T> leaky_relu_backward(const FeatureGrid<T>&, const FeatureGrid<T>&, T);             \
  template PoolResult<T> maxpool2(const FeatureGrid<T>&);                                                   \
  template FeatureGrid<T> maxpool2_backward(const PoolResult<T>&, const FeatureGrid<T>&, std::array<int, 3>); \
  template FeatureGrid<T> upsample2(const FeatureGrid<T>&);                                                 \
  template FeatureGrid<T> upsample2_backward(const FeatureGrid<T>&);                                        \
  template FeatureGrid<T> concat(const FeatureGrid<T>&, const FeatureGrid<T>&);                             \
  template FeatureGrid<T> softmax(const FeatureGrid<T>&);                                                   \
  template FeatureGrid<T> softmax_backward(const FeatureGrid<T>&, const FeatureGrid<T>&);

DSTRIP_INSTANTIATE_LAYERS(float)
DSTRIP_INSTANTIATE_LAYERS(double)

} // namespace dstrip::nn
