#include "dstrip/maskops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "dstrip/errors.hpp"
#include "dstrip/nifti.hpp"

namespace dstrip::mask {

namespace {

// One dilation round; `border` is the value assumed outside the grid.
void dilate_once(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, const Index3& d, bool border) {
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(d[0]);
  const std::size_t sz = sy * d[1];
  const std::uint8_t b = border ? 1 : 0;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      std::size_t idx = sz * k + sy * j;
      for (int i = 0; i < d[0]; ++i, ++idx) {
        std::uint8_t v = in[idx];
        v |= i > 0 ? in[idx - sx] : b;
        v |= i + 1 < d[0] ? in[idx + sx] : b;
        v |= j > 0 ? in[idx - sy] : b;
        v |= j + 1 < d[1] ? in[idx + sy] : b;
        v |= k > 0 ? in[idx - sz] : b;
        v |= k + 1 < d[2] ? in[idx + sz] : b;
        out[idx] = v;
      }
    }
  }
}

std::vector<std::uint8_t> dilate_data(std::vector<std::uint8_t> data, const Index3& d, int iters, bool border) {
  if (iters < 0) {
    throw ParameterError("morphology iteration count must be nonnegative");
  }
  std::vector<std::uint8_t> next(data.size());
  for (int it = 0; it < iters; ++it) {
    dilate_once(data, next, d, border);
    data.swap(next);
  }
  return data;
}

std::vector<std::uint8_t> invert(const std::vector<std::uint8_t>& v) {
  std::vector<std::uint8_t> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](std::uint8_t x) -> std::uint8_t { return x ? 0 : 1; });
  return out;
}

// Exact 1D squared distance transform: out[p] = min_q w (p - q)^2 + f[q].
// Sites with f = +inf are skipped; a line without sites stays +inf.
void lower_envelope(const double* f, double* out, int n, double w, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.resize(n);
  z.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) {
      continue;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p));
      if (s > z[k]) {
        break;
      }
      --k; // z[0] = -inf stops this at the first site
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(out, out + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) {
      ++j;
    }
    const double dq = q - v[j];
    out[q] = w * dq * dq + f[v[j]];
  }
}

} // namespace

BinaryMask complement(const BinaryMask& m) {
  BinaryMask out;
  out.grid = m.grid;
  out.data = invert(m.data);
  return out;
}

BinaryMask merge_brain_labels(const LabelMap& s) {
  BinaryMask out(s.grid);
  std::vector<std::int32_t> brain_ids;
  for (const auto& [id, info] : s.schema) {
    if (info.category == LabelCategory::brain) {
      brain_ids.push_back(id);
    }
  }
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    out.data[i] = std::find(brain_ids.begin(), brain_ids.end(), s.data[i]) != brain_ids.end() ? 1 : 0;
  }
  return out;
}

BinaryMask dilate(const BinaryMask& m, int iters) {
  BinaryMask out;
  out.grid = m.grid;
  out.data = dilate_data(m.data, m.grid.dims(), iters, false);
  return out;
}

BinaryMask erode(const BinaryMask& m, int iters) {
  BinaryMask out;
  out.grid = m.grid;
  // The complement of a mask whose exterior is background has a foreground exterior.
  out.data = invert(dilate_data(invert(m.data), m.grid.dims(), iters, true));
  return out;
}

BinaryMask pad(const BinaryMask& m, int p, bool fill) {
  if (p < 0) {
    throw ParameterError("padding must be nonnegative");
  }
  const auto& d = m.grid.dims();
  const Index3 pd{d[0] + 2 * p, d[1] + 2 * p, d[2] + 2 * p};
  Eigen::Matrix4d shift = Eigen::Matrix4d::Identity();
  shift.block<3, 1>(0, 3) = Eigen::Vector3d::Constant(-p);
  BinaryMask out(Grid::from_affine(pd, m.grid.affine() * shift), fill);
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        out.set(i + p, j + p, k + p, m.at(i, j, k));
      }
    }
  }
  return out;
}

BinaryMask crop(const BinaryMask& m, int p, const Grid& original) {
  BinaryMask out(original);
  const auto& d = original.dims();
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        out.set(i, j, k, m.at(i + p, j + p, k + p));
      }
    }
  }
  return out;
}

BinaryMask close(const BinaryMask& m, int iters) {
  if (iters < 0) {
    throw ParameterError("morphology iteration count must be nonnegative");
  }
  if (iters == 0) {
    return m;
  }
  return crop(erode(dilate(pad(m, iters), iters), iters), iters, m.grid);
}

BinaryMask fill_holes(const BinaryMask& m) {
  const auto& d = m.grid.dims();
  std::vector<std::uint8_t> reached(m.data.size(), 0);
  std::deque<std::size_t> queue;
  auto seed = [&](int i, int j, int k) {
    const std::size_t idx = m.grid.index(i, j, k);
    if (!m.data[idx] && !reached[idx]) {
      reached[idx] = 1;
      queue.push_back(idx);
    }
  };
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        if (i == 0 || j == 0 || k == 0 || i == d[0] - 1 || j == d[1] - 1 || k == d[2] - 1) {
          seed(i, j, k);
        }
      }
    }
  }
  static constexpr int offsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!queue.empty()) {
    const Index3 c = m.grid.coords(queue.front());
    queue.pop_front();
    for (const auto& o : offsets) {
      const int i = c[0] + o[0];
      const int j = c[1] + o[1];
      const int k = c[2] + o[2];
      if (m.grid.contains(i, j, k)) {
        seed(i, j, k);
      }
    }
  }
  BinaryMask out(m.grid);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = (m.data[i] || !reached[i]) ? 1 : 0;
  }
  return out;
}

BinaryMask derive_target_mask(const LabelMap& s, int closing_iters) {
  return fill_holes(close(merge_brain_labels(s), closing_iters));
}

std::vector<double> squared_edt(const BinaryMask& m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto& d = m.grid.dims();
  const auto& vs = m.grid.voxel_size();
  std::vector<double> dist(m.data.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    dist[i] = m.data[i] ? 0.0 : inf;
  }
  if (std::none_of(m.data.begin(), m.data.end(), [](std::uint8_t x) { return x != 0; })) {
    double diag2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      diag2 += (d[a] * vs[a]) * (d[a] * vs[a]);
    }
    std::fill(dist.begin(), dist.end(), diag2);
    return dist;
  }

  const std::size_t strides[3] = {1, static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[0]) * d[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = d[axis];
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    const double w = vs[axis] * vs[axis];
#pragma omp parallel
    {
      std::vector<double> f(n);
      std::vector<double> g(n);
      std::vector<int> v;
      std::vector<double> z;
#pragma omp for schedule(static)
      for (int c2 = 0; c2 < d[a2]; ++c2) {
        for (int c1 = 0; c1 < d[a1]; ++c1) {
          const std::size_t base = strides[a1] * c1 + strides[a2] * c2;
          for (int q = 0; q < n; ++q) {
            f[q] = dist[base + strides[axis] * q];
          }
          lower_envelope(f.data(), g.data(), n, w, v, z);
          for (int q = 0; q < n; ++q) {
            dist[base + strides[axis] * q] = g[q];
          }
        }
      }
    }
  }
  return dist;
}

Volume edt(const BinaryMask& m) {
  const std::vector<double> d2 = squared_edt(m);
  Volume out(m.grid);
  for (std::size_t i = 0; i < d2.size(); ++i) {
    out.data[i] = static_cast<float>(std::sqrt(d2[i]));
  }
  return out;
}

SignedDistanceVolume sdt(const BinaryMask& m) {
  const std::size_t n = m.count();
  if (n == 0 || n == m.data.size()) {
    throw DegenerateInputError("signed distance transform needs a mask that is neither empty nor full");
  }
  const std::vector<double> outside = squared_edt(m);
  const std::vector<double> inside = squared_edt(complement(m));
  Volume out(m.grid);
  for (std::size_t i = 0; i < outside.size(); ++i) {
    out.data[i] = static_cast<float>(std::sqrt(outside[i]) - std::sqrt(inside[i]));
  }
  return out;
}

BinaryMask boundary_mask(const BinaryMask& m) {
  // A foreground voxel is interior iff it survives one erosion round.
  const BinaryMask interior = erode(m, 1);
  BinaryMask out(m.grid);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = (m.data[i] && !interior.data[i]) ? 1 : 0;
  }
  return out;
}

std::vector<Index3> boundary_voxels(const BinaryMask& m) {
  const BinaryMask b = boundary_mask(m);
  std::vector<Index3> out;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    if (b.data[i]) {
      out.push_back(m.grid.coords(i));
    }
  }
  return out;
}

int count_components(const BinaryMask& m) {
  std::vector<std::uint8_t> seen(m.data.size(), 0);
  static constexpr int offsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  int components = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.data.size(); ++start) {
    if (!m.data[start] || seen[start]) {
      continue;
    }
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const Index3 c = m.grid.coords(stack.back());
      stack.pop_back();
      for (const auto& o : offsets) {
        const int i = c[0] + o[0];
        const int j = c[1] + o[1];
        const int k = c[2] + o[2];
        if (!m.grid.contains(i, j, k)) {
          continue;
        }
        const std::size_t idx = m.grid.index(i, j, k);
        if (m.data[idx] && !seen[idx]) {
          seen[idx] = 1;
          stack.push_back(idx);
        }
      }
    }
  }
  return components;
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const Volume v = read_volume(path);
  BinaryMask out(v.grid);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    out.data[i] = v.data[i] != 0.0f ? 1 : 0;
  }
  return out;
}

void write_mask(const BinaryMask& m, const std::filesystem::path& path) {
  LabelMap s(m.grid, LabelSchema{{0, {"background", LabelCategory::background}}, {1, {"mask", LabelCategory::brain}}});
  std::copy(m.data.begin(), m.data.end(), s.data.begin());
  write_nifti(s, path);
}

} // namespace dstrip::mask

namespace dstrip {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t x) { return x != 0; }));
}

} // namespace dstrip
