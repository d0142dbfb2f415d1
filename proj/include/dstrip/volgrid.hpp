#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dstrip {

using Index3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

/// Voxel lattice geometry: dimensions, spacing and the voxel-to-world affine (mm).
///
/// Data arrays attached to a grid are stored with the first axis varying
/// fastest, matching the on-disk NIfTI order. The orientation code is derived
/// from the affine (RAS+ world) and follows the usual convention: the letter
/// names the direction each voxel axis points toward.
class Grid {
public:
  Grid();

  /// Geometry from an explicit affine; voxel size and orientation are read off
  /// its columns.
  static Grid from_affine(Index3 dims, const Eigen::Matrix4d& affine);

  /// Axis-aligned grid with the given orientation code (e.g. "LIA"), centered
  /// on the world origin.
  static Grid make(Index3 dims, Vec3 voxel_size, const std::string& orientation = "RAS");

  /// Isotropic cube of `size` voxels; used for conforming.
  static Grid cube(int size, double voxel_mm, const std::string& orientation = "LIA");

  const Index3& dims() const { return dims_; }
  const Vec3& voxel_size() const { return voxel_size_; }
  const std::string& orientation() const { return orientation_; }
  const Eigen::Matrix4d& affine() const { return affine_; }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims_[0]) * (j + static_cast<std::size_t>(dims_[1]) * k);
  }
  Index3 coords(std::size_t idx) const;
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }

  /// Physical volume of one voxel in mm^3.
  double voxel_volume() const { return voxel_size_[0] * voxel_size_[1] * voxel_size_[2]; }

  /// Same dims and affine (bitwise), which is what same-grid operations require.
  bool operator==(const Grid& other) const;

private:
  Grid(Index3 dims, const Eigen::Matrix4d& affine);

  Index3 dims_;
  Vec3 voxel_size_;
  std::string orientation_;
  Eigen::Matrix4d affine_;
};

/// Orientation code ("RAS", "LIA", ...) of the rotational part of an affine.
std::string orientation_code(const Eigen::Matrix4d& affine);

/// Throws ParameterError unless both grids are identical.
void require_same_grid(const Grid& a, const Grid& b, const char* what);

/// 3D scalar image.
struct Volume {
  Grid grid;
  std::vector<float> data;

  Volume() = default;
  explicit Volume(Grid g, float fill = 0.0f) : grid(std::move(g)), data(grid.voxel_count(), fill) {}
  Volume(Grid g, std::vector<float> values);

  float& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
  float at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
};

enum class LabelCategory { background, brain, csf_nonventricular, nonbrain_synthetic };

const char* to_string(LabelCategory c);
LabelCategory category_from_string(const std::string& s);

struct LabelInfo {
  std::string name;
  LabelCategory category = LabelCategory::background;

  bool operator==(const LabelInfo&) const = default;
};

using LabelSchema = std::map<std::int32_t, LabelInfo>;

/// Integer label image with a schema mapping each id to a tissue category.
struct LabelMap {
  Grid grid;
  std::vector<std::int32_t> data;
  LabelSchema schema;

  LabelMap() = default;
  LabelMap(Grid g, LabelSchema s) : grid(std::move(g)), data(grid.voxel_count(), 0), schema(std::move(s)) {}

  std::int32_t& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
  std::int32_t at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }

  /// Throws SchemaError if a voxel value is missing from the schema or label 0
  /// is not background.
  void validate() const;
  std::int32_t max_label() const;
};

enum class Interp { trilinear, nearest };

/// Value at a continuous voxel coordinate; neighbors outside the grid read as 0.
float sample(const Volume& v, const Vec3& p, Interp interp);

/// Nearest-neighbor lookup for labels; outside the grid gives label 0.
std::int32_t sample_label(const LabelMap& s, const Vec3& p);

/// Resample onto `target` through the world-space mapping. Out-of-field
/// voxels become 0.
Volume conform(const Volume& v, const Grid& target, Interp interp = Interp::trilinear);
LabelMap conform(const LabelMap& s, const Grid& target, Interp interp = Interp::nearest);

/// Voxel-to-voxel map taking target indices to source indices.
Eigen::Matrix4d target_to_source(const Grid& source, const Grid& target);

} // namespace dstrip
