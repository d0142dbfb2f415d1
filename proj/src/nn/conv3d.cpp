#include "dstrip/nn/conv3d.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "dstrip/errors.hpp"

namespace dstrip::nn {

namespace {

// Rows are processed in fixed-width chunks so the accumulators stay in
// registers. Buffers are padded so chunk reads never leave their own row.
struct Layout {
  int d, h, w;
  int chunk;      // elements per chunk
  int row_width;  // w rounded up to a multiple of chunk
  int row_stride; // padded input row stride: row_width + 2
  std::size_t padded_plane() const { return static_cast<std::size_t>(d + 2) * (h + 2) * row_stride; }
};

// One chunk never exceeds a 64-byte register.
template <typename T>
Layout make_layout(const std::array<int, 3>& s) {
  constexpr int max_chunk = static_cast<int>(64 / sizeof(T));
  Layout l{s[0], s[1], s[2], 4, 0, 0};
  while (l.chunk < s[2] && l.chunk < max_chunk) {
    l.chunk *= 2;
  }
  l.row_width = (s[2] + l.chunk - 1) / l.chunk * l.chunk;
  l.row_stride = l.row_width + 2;
  return l;
}

template <typename T>
std::vector<T> pad_input(const FeatureGrid<T>& in, const Layout& l) {
  const std::size_t plane = l.padded_plane();
  std::vector<T> p(plane * in.channels, T(0));
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.channel(c);
    T* dst = p.data() + plane * c;
    for (int x = 0; x < l.d; ++x) {
      for (int y = 0; y < l.h; ++y) {
        std::copy_n(src + (static_cast<std::size_t>(x) * l.h + y) * l.w, l.w,
                    dst + (static_cast<std::size_t>(x + 1) * (l.h + 2) + (y + 1)) * l.row_stride + 1);
      }
    }
  }
  return p;
}

// Copy with rows widened to row_width and zero tails.
template <typename T>
std::vector<T> widen_rows(const FeatureGrid<T>& g, const Layout& l) {
  const std::size_t plane = static_cast<std::size_t>(l.d) * l.h * l.row_width;
  std::vector<T> out(plane * g.channels, T(0));
  for (int c = 0; c < g.channels; ++c) {
    const T* src = g.channel(c);
    T* dst = out.data() + plane * c;
    for (std::size_t r = 0; r < static_cast<std::size_t>(l.d) * l.h; ++r) {
      std::copy_n(src + r * l.w, l.w, dst + r * l.row_width);
    }
  }
  return out;
}

template <typename T, int CH>
struct Simd {
  typedef T type __attribute__((vector_size(CH * sizeof(T))));
  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof(type));
    return v;
  }
};

template <typename T, int CH, int COB>
void forward_block(const T* padded, int c_in, const Layout& l, const T* kernel, const T* bias, int co0, T* out) {
  const std::size_t pplane = l.padded_plane();
  const std::size_t oplane = static_cast<std::size_t>(l.d) * l.h * l.w;
  for (int x = 0; x < l.d; ++x) {
    for (int y = 0; y < l.h; ++y) {
      for (int z0 = 0; z0 < l.w; z0 += CH) {
        using V = typename Simd<T, CH>::type;
        V acc[COB];
        for (int b = 0; b < COB; ++b) {
          acc[b] = V{} + bias[co0 + b];
        }
        for (int ci = 0; ci < c_in; ++ci) {
          const T* base = padded + pplane * ci + (static_cast<std::size_t>(x) * (l.h + 2) + y) * l.row_stride + z0;
          const T* kbase = kernel + (static_cast<std::size_t>(co0) * c_in + ci) * kTaps;
          for (int kd = 0; kd < 3; ++kd) {
            for (int kh = 0; kh < 3; ++kh) {
              const T* row = base + (static_cast<std::size_t>(kd) * (l.h + 2) + kh) * l.row_stride;
              for (int kw = 0; kw < 3; ++kw) {
                const int tap = kd * 9 + kh * 3 + kw;
                const V in = Simd<T, CH>::load(row + kw);
                for (int b = 0; b < COB; ++b) {
                  acc[b] += kbase[static_cast<std::size_t>(b) * c_in * kTaps + tap] * in;
                }
              }
            }
          }
        }
        const int n = std::min(CH, l.w - z0);
        for (int b = 0; b < COB; ++b) {
          T* dst = out + oplane * (co0 + b) + (static_cast<std::size_t>(x) * l.h + y) * l.w + z0;
          for (int i = 0; i < n; ++i) {
            dst[i] = acc[b][i];
          }
        }
      }
    }
  }
}

template <typename T, int CH>
void forward_chunked(const T* padded, int c_in, int c_out, const Layout& l, const T* kernel, const T* bias, T* out) {
  constexpr int cob = 4;
  const int full_blocks = c_out / cob;
  const int tasks = full_blocks + (c_out - full_blocks * cob);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tasks; ++t) {
    if (t < full_blocks) {
      forward_block<T, CH, cob>(padded, c_in, l, kernel, bias, t * cob, out);
    } else {
      forward_block<T, CH, 1>(padded, c_in, l, kernel, bias, full_blocks * cob + (t - full_blocks), out);
    }
  }
}

template <typename T>
void forward_dispatch(const T* padded, int c_in, int c_out, const Layout& l, const T* kernel, const T* bias, T* out) {
  switch (l.chunk) {
  case 4: forward_chunked<T, 4>(padded, c_in, c_out, l, kernel, bias, out); break;
  case 8: forward_chunked<T, 8>(padded, c_in, c_out, l, kernel, bias, out); break;
  default:
    if constexpr (sizeof(T) == 4) {
      forward_chunked<T, 16>(padded, c_in, c_out, l, kernel, bias, out);
    }
    break;
  }
}

template <typename T, int CH, int COB>
void kernel_grad_block(const T* padded, const T* grad_rows, int c_in, const Layout& l, int co0, int ci, T* grad_kernel) {
  const std::size_t pplane = l.padded_plane();
  const std::size_t gplane = static_cast<std::size_t>(l.d) * l.h * l.row_width;
  for (int kd = 0; kd < 3; ++kd) {
    for (int kh = 0; kh < 3; ++kh) {
      using V = typename Simd<T, CH>::type;
      V acc[COB][3] = {};
      for (int x = 0; x < l.d; ++x) {
        for (int y = 0; y < l.h; ++y) {
          const T* prow = padded + pplane * ci + (static_cast<std::size_t>(x + kd) * (l.h + 2) + y + kh) * l.row_stride;
          const std::size_t grow = (static_cast<std::size_t>(x) * l.h + y) * l.row_width;
          for (int z0 = 0; z0 < l.row_width; z0 += CH) {
            const V p0 = Simd<T, CH>::load(prow + z0);
            const V p1 = Simd<T, CH>::load(prow + z0 + 1);
            const V p2 = Simd<T, CH>::load(prow + z0 + 2);
            for (int b = 0; b < COB; ++b) {
              const V g = Simd<T, CH>::load(grad_rows + gplane * (co0 + b) + grow + z0);
              acc[b][0] += g * p0;
              acc[b][1] += g * p1;
              acc[b][2] += g * p2;
            }
          }
        }
      }
      for (int b = 0; b < COB; ++b) {
        for (int kw = 0; kw < 3; ++kw) {
          T s = T(0);
          for (int i = 0; i < CH; ++i) {
            s += acc[b][kw][i];
          }
          grad_kernel[(static_cast<std::size_t>(co0 + b) * c_in + ci) * kTaps + kd * 9 + kh * 3 + kw] = s;
        }
      }
    }
  }
}

template <typename T, int CH>
void kernel_grad_chunked(const T* padded, const T* grad_rows, int c_in, int c_out, const Layout& l, T* grad_kernel) {
  constexpr int cob = 2;
  const int full_blocks = c_out / cob;
  const int blocks = full_blocks + (c_out % cob);
  const int tasks = blocks * c_in;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tasks; ++t) {
    const int blk = t / c_in;
    const int ci = t % c_in;
    if (blk < full_blocks) {
      kernel_grad_block<T, CH, cob>(padded, grad_rows, c_in, l, blk * cob, ci, grad_kernel);
    } else {
      kernel_grad_block<T, CH, 1>(padded, grad_rows, c_in, l, full_blocks * cob + (blk - full_blocks), ci, grad_kernel);
    }
  }
}

template <typename T>
void check_conv_shapes(const FeatureGrid<T>& input, std::size_t kernel_size, int c_out) {
  if (c_out <= 0 || kernel_size != static_cast<std::size_t>(c_out) * input.channels * kTaps) {
    throw ParameterError("conv3d: kernel size " + std::to_string(kernel_size) + " does not match " +
                         std::to_string(input.channels) + " input channels");
  }
  if (input.data.size() != input.plane() * input.channels) {
    throw ParameterError("conv3d: feature grid data length does not match its shape");
  }
}

} // namespace

template <typename T>
FeatureGrid<T> conv3d_forward(const FeatureGrid<T>& input, std::span<const T> kernel, std::span<const T> bias) {
  const int c_out = static_cast<int>(bias.size());
  check_conv_shapes(input, kernel.size(), c_out);
  const Layout l = make_layout<T>(input.spatial);
  const std::vector<T> padded = pad_input(input, l);
  FeatureGrid<T> out(c_out, input.spatial);
  forward_dispatch(padded.data(), input.channels, c_out, l, kernel.data(), bias.data(), out.data.data());
  return out;
}

template <typename T>
ConvGrads<T> conv3d_backward(const FeatureGrid<T>& input, std::span<const T> kernel, const FeatureGrid<T>& grad_out,
                             bool need_input_grad) {
  const int c_out = grad_out.channels;
  check_conv_shapes(input, kernel.size(), c_out);
  if (grad_out.spatial != input.spatial) {
    throw ParameterError("conv3d_backward: gradient shape does not match input");
  }
  const int c_in = input.channels;
  const Layout l = make_layout<T>(input.spatial);
  ConvGrads<T> g;

  g.grad_bias.assign(c_out, T(0));
  for (int co = 0; co < c_out; ++co) {
    const T* src = grad_out.channel(co);
    T s = T(0);
    for (std::size_t i = 0; i < grad_out.plane(); ++i) {
      s += src[i];
    }
    g.grad_bias[co] = s;
  }

  const std::vector<T> padded = pad_input(input, l);
  const std::vector<T> grad_rows = widen_rows(grad_out, l);
  g.grad_kernel.assign(kernel.size(), T(0));
  switch (l.chunk) {
  case 4: kernel_grad_chunked<T, 4>(padded.data(), grad_rows.data(), c_in, c_out, l, g.grad_kernel.data()); break;
  case 8: kernel_grad_chunked<T, 8>(padded.data(), grad_rows.data(), c_in, c_out, l, g.grad_kernel.data()); break;
  default:
    if constexpr (sizeof(T) == 4) {
      kernel_grad_chunked<T, 16>(padded.data(), grad_rows.data(), c_in, c_out, l, g.grad_kernel.data());
    }
    break;
  }

  if (need_input_grad) {
    // The input gradient is a correlation of the output gradient with the
    // spatially flipped, channel-transposed kernel.
    std::vector<T> flipped(kernel.size());
    for (int co = 0; co < c_out; ++co) {
      for (int ci = 0; ci < c_in; ++ci) {
        for (int k = 0; k < kTaps; ++k) {
          flipped[(static_cast<std::size_t>(ci) * c_out + co) * kTaps + (kTaps - 1 - k)] =
              kernel[(static_cast<std::size_t>(co) * c_in + ci) * kTaps + k];
        }
      }
    }
    const std::vector<T> zero_bias(c_in, T(0));
    const std::vector<T> padded_grad = pad_input(grad_out, l);
    g.grad_input = FeatureGrid<T>(c_in, input.spatial);
    forward_dispatch(padded_grad.data(), c_out, c_in, l, flipped.data(), zero_bias.data(), g.grad_input.data.data());
  }
  return g;
}

template FeatureGrid<float> conv3d_forward(const FeatureGrid<float>&, std::span<const float>, std::span<const float>);
template FeatureGrid<double> conv3d_forward(const FeatureGrid<double>&, std::span<const double>, std::span<const double>);
template ConvGrads<float> conv3d_backward(const FeatureGrid<float>&, std::span<const float>, const FeatureGrid<float>&,
                                          bool);
template ConvGrads<double> conv3d_backward(const FeatureGrid<double>&, std::span<const double>,
                                           const FeatureGrid<double>&, bool);

} // namespace dstrip::nn
