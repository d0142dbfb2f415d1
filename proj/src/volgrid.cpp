#include "dstrip/volgrid.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dstrip/errors.hpp"

namespace dstrip {

namespace {

struct AxisCode {
  int world_axis;
  double sign;
};

AxisCode decode_letter(char c) {
  switch (c) {
  case 'R': return {0, 1.0};
  case 'L': return {0, -1.0};
  case 'A': return {1, 1.0};
  case 'P': return {1, -1.0};
  case 'S': return {2, 1.0};
  case 'I': return {2, -1.0};
  default: throw ParameterError(std::string("invalid orientation letter '") + c + "'");
  }
}

void check_dims(const Index3& dims) {
  for (int d : dims) {
    if (d < 1) {
      throw ParameterError("grid dimensions must be positive");
    }
  }
}

// Snap coordinates that are within rounding noise of a voxel center, so that
// identity resampling is exact.
double snap(double x) {
  const double r = std::nearbyint(x);
  return std::abs(x - r) < 1e-6 ? r : x;
}

} // namespace

Grid::Grid() : Grid({1, 1, 1}, Eigen::Matrix4d::Identity()) {}

Grid::Grid(Index3 dims, const Eigen::Matrix4d& affine) : dims_(dims), affine_(affine) {
  check_dims(dims);
  for (int a = 0; a < 3; ++a) {
    voxel_size_[a] = affine.block<3, 1>(0, a).norm();
    if (!(voxel_size_[a] > 0.0) || !std::isfinite(voxel_size_[a])) {
      throw GeometryError("affine has a degenerate voxel axis");
    }
  }
  orientation_ = orientation_code(affine);
}

Grid Grid::from_affine(Index3 dims, const Eigen::Matrix4d& affine) { return Grid(dims, affine); }

Grid Grid::make(Index3 dims, Vec3 voxel_size, const std::string& orientation) {
  check_dims(dims);
  if (orientation.size() != 3) {
    throw ParameterError("orientation code must have three letters");
  }
  Eigen::Matrix4d aff = Eigen::Matrix4d::Zero();
  std::set<int> used;
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) {
      throw ParameterError("voxel size must be positive");
    }
    const AxisCode code = decode_letter(orientation[a]);
    if (!used.insert(code.world_axis).second) {
      throw ParameterError("orientation code '" + orientation + "' repeats an axis");
    }
    aff(code.world_axis, a) = code.sign * voxel_size[a];
  }
  aff(3, 3) = 1.0;
  const Eigen::Vector3d center((dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0);
  aff.block<3, 1>(0, 3) = -aff.block<3, 3>(0, 0) * center;
  return Grid(dims, aff);
}

Grid Grid::cube(int size, double voxel_mm, const std::string& orientation) {
  return make({size, size, size}, {voxel_mm, voxel_mm, voxel_mm}, orientation);
}

Index3 Grid::coords(std::size_t idx) const {
  const auto nx = static_cast<std::size_t>(dims_[0]);
  const auto ny = static_cast<std::size_t>(dims_[1]);
  return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
}

bool Grid::operator==(const Grid& other) const {
  return dims_ == other.dims_ && affine_ == other.affine_;
}

std::string orientation_code(const Eigen::Matrix4d& affine) {
  static constexpr char pos[3] = {'R', 'A', 'S'};
  static constexpr char neg[3] = {'L', 'P', 'I'};
  std::string code(3, '?');
  bool used[3] = {false, false, false};
  // Greedy assignment of the largest remaining direction cosines.
  for (int step = 0; step < 3; ++step) {
    double best = -1.0;
    int best_row = 0;
    int best_col = 0;
    for (int col = 0; col < 3; ++col) {
      if (code[col] != '?') {
        continue;
      }
      const double n = affine.block<3, 1>(0, col).norm();
      for (int row = 0; row < 3; ++row) {
        if (used[row]) {
          continue;
        }
        const double c = std::abs(affine(row, col)) / n;
        if (c > best) {
          best = c;
          best_row = row;
          best_col = col;
        }
      }
    }
    used[best_row] = true;
    code[best_col] = affine(best_row, best_col) >= 0.0 ? pos[best_row] : neg[best_row];
  }
  return code;
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw ParameterError(std::string(what) + ": inputs are not on the same grid");
  }
}

Volume::Volume(Grid g, std::vector<float> values) : grid(std::move(g)), data(std::move(values)) {
  if (data.size() != grid.voxel_count()) {
    throw ParameterError("volume data length does not match grid");
  }
}

const char* to_string(LabelCategory c) {
  switch (c) {
  case LabelCategory::background: return "background";
  case LabelCategory::brain: return "brain";
  case LabelCategory::csf_nonventricular: return "csf_nonventricular";
  case LabelCategory::nonbrain_synthetic: return "nonbrain_synthetic";
  }
  return "background";
}

LabelCategory category_from_string(const std::string& s) {
  if (s == "background") return LabelCategory::background;
  if (s == "brain") return LabelCategory::brain;
  if (s == "csf_nonventricular") return LabelCategory::csf_nonventricular;
  if (s == "nonbrain_synthetic") return LabelCategory::nonbrain_synthetic;
  throw SchemaError("unknown label category '" + s + "'");
}

void LabelMap::validate() const {
  if (data.size() != grid.voxel_count()) {
    throw SchemaError("label data length does not match grid");
  }
  auto zero = schema.find(0);
  if (zero == schema.end() || zero->second.category != LabelCategory::background) {
    throw SchemaError("label 0 must be present in the schema as background");
  }
  std::set<std::int32_t> seen(data.begin(), data.end());
  for (std::int32_t id : seen) {
    if (id < 0) {
      throw SchemaError("negative label " + std::to_string(id));
    }
    if (!schema.contains(id)) {
      throw SchemaError("label " + std::to_string(id) + " is missing from the schema");
    }
  }
}

std::int32_t LabelMap::max_label() const {
  return data.empty() ? 0 : *std::max_element(data.begin(), data.end());
}

float sample(const Volume& v, const Vec3& p, Interp interp) {
  const auto& d = v.grid.dims();
  if (interp == Interp::nearest) {
    const int i = static_cast<int>(std::floor(p[0] + 0.5));
    const int j = static_cast<int>(std::floor(p[1] + 0.5));
    const int k = static_cast<int>(std::floor(p[2] + 0.5));
    return v.grid.contains(i, j, k) ? v.at(i, j, k) : 0.0f;
  }
  const double fx = std::floor(p[0]);
  const double fy = std::floor(p[1]);
  const double fz = std::floor(p[2]);
  if (fx < -1.0 || fy < -1.0 || fz < -1.0 || fx > d[0] - 1 || fy > d[1] - 1 || fz > d[2] - 1) {
    return 0.0f;
  }
  const int i0 = static_cast<int>(fx);
  const int j0 = static_cast<int>(fy);
  const int k0 = static_cast<int>(fz);
  const double tx = p[0] - fx;
  const double ty = p[1] - fy;
  const double tz = p[2] - fz;
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1;
    const int dy = (c >> 1) & 1;
    const int dz = (c >> 2) & 1;
    const int i = i0 + dx;
    const int j = j0 + dy;
    const int k = k0 + dz;
    if (!v.grid.contains(i, j, k)) {
      continue;
    }
    const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
    acc += w * v.at(i, j, k);
  }
  return static_cast<float>(acc);
}

std::int32_t sample_label(const LabelMap& s, const Vec3& p) {
  const int i = static_cast<int>(std::floor(p[0] + 0.5));
  const int j = static_cast<int>(std::floor(p[1] + 0.5));
  const int k = static_cast<int>(std::floor(p[2] + 0.5));
  return s.grid.contains(i, j, k) ? s.at(i, j, k) : 0;
}

Eigen::Matrix4d target_to_source(const Grid& source, const Grid& target) {
  const Eigen::Matrix4d& src = source.affine();
  if (std::abs(src.block<3, 3>(0, 0).determinant()) < 1e-12 ||
      std::abs(target.affine().block<3, 3>(0, 0).determinant()) < 1e-12) {
    throw GeometryError("voxel-to-world affine is not invertible");
  }
  return src.inverse() * target.affine();
}

namespace {

template <typename Fn>
void for_each_target_voxel(const Grid& source, const Grid& target, Fn&& fn) {
  const Eigen::Matrix4d m = target_to_source(source, target);
  const auto& d = target.dims();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const Eigen::Vector4d q = m * Eigen::Vector4d(i, j, k, 1.0);
        fn(target.index(i, j, k), Vec3{snap(q[0]), snap(q[1]), snap(q[2])});
      }
    }
  }
}

} // namespace

Volume conform(const Volume& v, const Grid& target, Interp interp) {
  Volume out(target);
  for_each_target_voxel(v.grid, target, [&](std::size_t idx, const Vec3& p) { out.data[idx] = sample(v, p, interp); });
  return out;
}

LabelMap conform(const LabelMap& s, const Grid& target, Interp interp) {
  if (interp != Interp::nearest) {
    throw ParameterError("label maps can only be conformed with nearest-neighbor interpolation");
  }
  LabelMap out(target, s.schema);
  for_each_target_voxel(s.grid, target, [&](std::size_t idx, const Vec3& p) { out.data[idx] = sample_label(s, p); });
  return out;
}

} // namespace dstrip
