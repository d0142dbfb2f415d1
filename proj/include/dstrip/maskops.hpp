#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dstrip/volgrid.hpp"

namespace dstrip {

/// Binary voxel mask; one byte per voxel, 0 or 1.
struct BinaryMask {
  Grid grid;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  explicit BinaryMask(Grid g, bool fill = false) : grid(std::move(g)), data(grid.voxel_count(), fill ? 1 : 0) {}

  bool at(int i, int j, int k) const { return data[grid.index(i, j, k)] != 0; }
  void set(int i, int j, int k, bool v = true) { data[grid.index(i, j, k)] = v ? 1 : 0; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool full() const { return count() == data.size(); }

  bool operator==(const BinaryMask&) const = default;
};

/// Signed distances in mm: negative inside the mask, positive outside.
using SignedDistanceVolume = Volume;

namespace mask {

BinaryMask complement(const BinaryMask& m);

/// True where the label belongs to the brain category. Ventricles are brain;
/// non-ventricular CSF is not.
BinaryMask merge_brain_labels(const LabelMap& s);

/// `iters` rounds of 6-connected dilation. Voxels outside the grid are background.
BinaryMask dilate(const BinaryMask& m, int iters);

/// `iters` rounds of 6-connected erosion, the dual of dilate with the region
/// outside the grid treated as background, so the grid border erodes.
BinaryMask erode(const BinaryMask& m, int iters);

/// Morphological closing computed on a domain padded by `iters` voxels, i.e.
/// the unbounded-lattice closing restricted to the grid. Unlike
/// erode(dilate(m)) this never removes voxels near the grid border.
BinaryMask close(const BinaryMask& m, int iters);

/// Marks every background voxel not 6-connected to the grid border as foreground.
BinaryMask fill_holes(const BinaryMask& m);

/// Training target: merge brain labels, close with `closing_iters`, fill holes.
BinaryMask derive_target_mask(const LabelMap& s, int closing_iters = 10);

/// Squared Euclidean distance (mm^2) from each voxel center to the nearest
/// foreground voxel center. Exact; separable lower-envelope passes along each
/// axis weighted by the squared voxel size. An empty mask yields the squared
/// grid diagonal everywhere.
std::vector<double> squared_edt(const BinaryMask& m);

/// Euclidean distance transform in mm.
Volume edt(const BinaryMask& m);

/// edt(m) - edt(complement(m)). Throws DegenerateInputError for empty or full masks.
SignedDistanceVolume sdt(const BinaryMask& m);

/// Foreground voxels with at least one background face neighbor (the grid
/// edge counts as background), ordered by linear index.
std::vector<Index3> boundary_voxels(const BinaryMask& m);
BinaryMask boundary_mask(const BinaryMask& m);

/// Zero-padding by `pad` voxels per side, and its inverse. The padded grid
/// keeps the world position of the original voxels.
BinaryMask pad(const BinaryMask& m, int pad, bool fill = false);
BinaryMask crop(const BinaryMask& m, int pad, const Grid& original);

/// 6-connected components of the foreground; returns the component count.
int count_components(const BinaryMask& m);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const BinaryMask& m, const std::filesystem::path& path);

} // namespace mask
} // namespace dstrip
