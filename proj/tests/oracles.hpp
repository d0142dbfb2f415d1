#pragma once

// Brute-force reference implementations used as test oracles. They favor
// obviousness over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dstrip/maskops.hpp"
#include "dstrip/nn/tensor.hpp"
#include "dstrip/rng.hpp"

namespace oracle {

using dstrip::BinaryMask;
using dstrip::Grid;
using dstrip::Index3;

inline Grid iso_grid(Index3 d, double mm = 1.0) { return Grid::make(d, {mm, mm, mm}, "RAS"); }

/// Random mask: each voxel set with probability `p`.
inline BinaryMask random_mask(dstrip::Rng& rng, Index3 d, double p, double mm = 1.0) {
  BinaryMask m(iso_grid(d, mm));
  for (auto& v : m.data) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

/// Random mask made of a few overlapping boxes, so it has larger blobs.
inline BinaryMask random_blobs(dstrip::Rng& rng, Index3 d, int boxes) {
  BinaryMask m(iso_grid(d));
  for (int b = 0; b < boxes; ++b) {
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = static_cast<int>(rng.below(d[a]));
      hi[a] = std::min(d[a] - 1, lo[a] + static_cast<int>(rng.below(d[a] / 2 + 1)));
    }
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) m.set(i, j, k);
  }
  return m;
}

inline Index3 random_dims(dstrip::Rng& rng, int lo, int hi) {
  return {lo + static_cast<int>(rng.below(hi - lo + 1)), lo + static_cast<int>(rng.below(hi - lo + 1)),
          lo + static_cast<int>(rng.below(hi - lo + 1))};
}

/// Squared distance (mm^2) from every voxel to the nearest foreground voxel by
/// scanning all foreground voxels. Empty masks give +inf.
inline std::vector<double> brute_squared_edt(const BinaryMask& m) {
  const auto& d = m.grid.dims();
  const auto& vs = m.grid.voxel_size();
  std::vector<Index3> fg;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        if (m.at(i, j, k)) fg.push_back({i, j, k});
  std::vector<double> out(m.data.size(), std::numeric_limits<double>::infinity());
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& f : fg) {
          double dx = (i - f[0]) * vs[0], dy = (j - f[1]) * vs[1], dz = (k - f[2]) * vs[2];
          best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        out[m.grid.index(i, j, k)] = best;
      }
  return out;
}

/// Foreground voxels with a background (or out-of-grid) face neighbor.
inline std::vector<Index3> brute_boundary(const BinaryMask& m) {
  const auto& d = m.grid.dims();
  std::vector<Index3> out;
  const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        if (!m.at(i, j, k)) continue;
        bool edge = false;
        for (const auto& o : off) {
          int a = i + o[0], b = j + o[1], c = k + o[2];
          if (!m.grid.contains(a, b, c) || !m.at(a, b, c)) edge = true;
        }
        if (edge) out.push_back({i, j, k});
      }
  return out;
}

/// Every directed boundary-to-boundary distance of both directions, in mm.
inline std::vector<double> brute_boundary_distances(const BinaryMask& a, const BinaryMask& b) {
  auto ba = brute_boundary(a), bb = brute_boundary(b);
  const auto& vs = a.grid.voxel_size();
  auto directed = [&](const std::vector<Index3>& from, const std::vector<Index3>& to, std::vector<double>& out) {
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        double dx = (p[0] - q[0]) * vs[0], dy = (p[1] - q[1]) * vs[1], dz = (p[2] - q[2]) * vs[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      out.push_back(std::sqrt(best));
    }
  };
  std::vector<double> all;
  directed(ba, bb, all);
  directed(bb, ba, all);
  std::sort(all.begin(), all.end());
  return all;
}

inline double brute_hausdorff(const BinaryMask& a, const BinaryMask& b) { return brute_boundary_distances(a, b).back(); }

/// Nearest-rank 95th percentile of the pooled directed distances.
inline double brute_hausdorff95(const BinaryMask& a, const BinaryMask& b) {
  auto all = brute_boundary_distances(a, b);
  std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * all.size()));
  return all[std::max<std::size_t>(rank, 1) - 1];
}

/// Dilation by direct L1-ball membership: a voxel is set if some foreground
/// voxel lies within Manhattan distance `r`.
inline BinaryMask brute_dilate(const BinaryMask& m, int r) {
  const auto& d = m.grid.dims();
  BinaryMask out(m.grid);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        if (!m.at(i, j, k)) continue;
        for (int c = -r; c <= r; ++c)
          for (int b = -r; b <= r; ++b)
            for (int a = -r; a <= r; ++a) {
              if (std::abs(a) + std::abs(b) + std::abs(c) > r) continue;
              if (out.grid.contains(i + a, j + b, k + c)) out.set(i + a, j + b, k + c);
            }
      }
  return out;
}

/// Erosion by the L1 ball with out-of-grid voxels as background.
inline BinaryMask brute_erode(const BinaryMask& m, int r) {
  const auto& d = m.grid.dims();
  BinaryMask out(m.grid);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        bool keep = true;
        for (int c = -r; c <= r && keep; ++c)
          for (int b = -r; b <= r && keep; ++b)
            for (int a = -r; a <= r && keep; ++a) {
              if (std::abs(a) + std::abs(b) + std::abs(c) > r) continue;
              if (!m.grid.contains(i + a, j + b, k + c) || !m.at(i + a, j + b, k + c)) keep = false;
            }
        out.set(i, j, k, keep);
      }
  return out;
}

/// Closing on the unbounded lattice, restricted back to the grid.
inline BinaryMask brute_close(const BinaryMask& m, int r) {
  const auto& d = m.grid.dims();
  BinaryMask big(iso_grid({d[0] + 2 * r, d[1] + 2 * r, d[2] + 2 * r}));
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        if (m.at(i, j, k)) big.set(i + r, j + r, k + r);
  BinaryMask closed = brute_erode(brute_dilate(big, r), r);
  BinaryMask out(m.grid);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) out.set(i, j, k, closed.at(i + r, j + r, k + r));
  return out;
}

/// Direct six-loop 3x3x3 cross-correlation with zero padding.
/// kernel layout: [co][ci][dz][dy][dx] over (s0, s1, s2) = (z, y, x).
template <typename T>
dstrip::nn::FeatureGrid<T> naive_conv(const dstrip::nn::FeatureGrid<T>& in, const std::vector<T>& kernel,
                                      const std::vector<T>& bias) {
  const int ci_n = in.channels, co_n = static_cast<int>(bias.size());
  const auto s = in.spatial;
  dstrip::nn::FeatureGrid<T> out(co_n, s);
  for (int co = 0; co < co_n; ++co)
    for (int z = 0; z < s[0]; ++z)
      for (int y = 0; y < s[1]; ++y)
        for (int x = 0; x < s[2]; ++x) {
          double acc = bias[co];
          for (int ci = 0; ci < ci_n; ++ci)
            for (int dz = -1; dz <= 1; ++dz)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  int zz = z + dz, yy = y + dy, xx = x + dx;
                  if (zz < 0 || yy < 0 || xx < 0 || zz >= s[0] || yy >= s[1] || xx >= s[2]) continue;
                  std::size_t kidx = (((static_cast<std::size_t>(co) * ci_n + ci) * 3 + (dz + 1)) * 3 + (dy + 1)) * 3 + (dx + 1);
                  acc += static_cast<double>(kernel[kidx]) * in.at(ci, zz, yy, xx);
                }
          out.at(co, z, y, x) = static_cast<T>(acc);
        }
  return out;
}

/// Central difference of `loss()` in one coordinate. `kink` is set when the
/// forward and backward one-sided quotients disagree, i.e. a leaky-relu kink
/// lies inside the stencil and the derivative does not exist there.
struct CentralDiff {
  double value = 0.0;
  bool kink = false;
};

template <typename F>
CentralDiff central_difference(F&& loss, double& coord, double h = 1e-5, double kink_tol = 1e-4) {
  const double keep = coord;
  const double mid = loss();
  coord = keep + h;
  const double up = loss();
  coord = keep - h;
  const double dn = loss();
  coord = keep;
  const double fwd = (up - mid) / h, bwd = (mid - dn) / h;
  CentralDiff r;
  r.value = (up - dn) / (2 * h);
  r.kink = std::abs(fwd - bwd) > kink_tol * std::max({1e-8, std::abs(fwd), std::abs(bwd)});
  return r;
}

} // namespace oracle
