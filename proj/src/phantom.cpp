#include <algorithm>
#include <cmath>
#include <numbers>

#include "dstrip/errors.hpp"
#include "dstrip/synthgen.hpp"

namespace dstrip::synth {

namespace {

constexpr std::int32_t kWhiteMatter = 1;
constexpr std::int32_t kCortex = 2;
constexpr std::int32_t kDeepGray = 3;
constexpr std::int32_t kVentricle = 4;
constexpr std::int32_t kCsf = 5;
constexpr std::int32_t kSkull = 6;
constexpr std::int32_t kScalp = 7;
constexpr std::int32_t kNeck = 8;

// Sum of a few sinusoids of the direction, used to ripple surfaces.
struct Ripple {
  struct Wave {
    Eigen::Vector3d dir;
    double freq;
    double phase;
  };
  std::vector<Wave> waves;
  double amp = 0.0;

  static Ripple random(Rng& rng, int count, double amp) {
    Ripple r;
    r.amp = amp;
    for (int w = 0; w < count; ++w) {
      Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
      if (d.norm() < 1e-9) d = Eigen::Vector3d::UnitX();
      r.waves.push_back({d.normalized(), rng.uniform(2.0, 4.0), rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
    return r;
  }

  double operator()(const Eigen::Vector3d& u) const {
    if (waves.empty()) return 1.0;
    double s = 0.0;
    for (const auto& w : waves) s += std::sin(w.freq * std::numbers::pi * u.dot(w.dir) + w.phase);
    return 1.0 + amp * s / static_cast<double>(waves.size());
  }
};

struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d radii;

  double radius(const Eigen::Vector3d& p) const { return (p - center).cwiseQuotient(radii).norm(); }
};

} // namespace

LabelSchema phantom_schema() {
  return {
      {0, {"background", LabelCategory::background}},
      {kWhiteMatter, {"white_matter", LabelCategory::brain}},
      {kCortex, {"cortex", LabelCategory::brain}},
      {kDeepGray, {"deep_gray", LabelCategory::brain}},
      {kVentricle, {"ventricles", LabelCategory::brain}},
      {kCsf, {"csf", LabelCategory::csf_nonventricular}},
      {kSkull, {"skull", LabelCategory::nonbrain_synthetic}},
      {kScalp, {"scalp", LabelCategory::nonbrain_synthetic}},
      {kNeck, {"neck", LabelCategory::nonbrain_synthetic}},
  };
}

LabelMap make_phantom_labelmap(std::uint64_t seed, Index3 dims) {
  for (int d : dims) {
    if (d < 32) throw ParameterError("phantom: every dimension must be at least 32 voxels");
  }
  Rng rng(seed);
  LabelMap s(Grid::make(dims, {1.0, 1.0, 1.0}, "LIA"), phantom_schema());

  // Voxel axes: 0 = left, 1 = inferior, 2 = anterior. The head sits in the
  // superior part of the field and the neck runs out the inferior edge.
  Eigen::Vector3d size(dims[0], dims[1], dims[2]);
  Ellipsoid head;
  head.center = Eigen::Vector3d(0.5 * size[0] + rng.uniform(-1.0, 1.0), 0.44 * size[1] + rng.uniform(-1.0, 1.0),
                                0.5 * size[2] + rng.uniform(-1.0, 1.0));
  head.radii = Eigen::Vector3d(0.40 * size[0] * rng.uniform(0.92, 1.04), 0.38 * size[1] * rng.uniform(0.92, 1.04),
                               0.43 * size[2] * rng.uniform(0.92, 1.04));
  const Ripple outer = Ripple::random(rng, 3, rng.uniform(0.02, 0.04));
  const Ripple cortex = Ripple::random(rng, 4, rng.uniform(0.05, 0.08));

  const double r_scalp = 1.0;
  const double r_skull = rng.uniform(0.88, 0.91);
  const double r_csf = r_skull - rng.uniform(0.08, 0.10);
  const double r_brain = r_csf - rng.uniform(0.06, 0.08);
  const double r_wm = r_brain * rng.uniform(0.70, 0.78);

  std::vector<Ellipsoid> ventricles, deep;
  for (int side : {-1, 1}) {
    Ellipsoid v;
    v.center = head.center + Eigen::Vector3d(side * 0.09 * head.radii[0], -0.05 * head.radii[1], rng.uniform(-0.05, 0.05) * head.radii[2]);
    v.radii = Eigen::Vector3d(0.07, 0.12, 0.25).cwiseProduct(head.radii) * rng.uniform(0.9, 1.1);
    ventricles.push_back(v);
    Ellipsoid g;
    g.center = head.center + Eigen::Vector3d(side * 0.27 * head.radii[0], 0.12 * head.radii[1], rng.uniform(-0.05, 0.05) * head.radii[2]);
    g.radii = Eigen::Vector3d(0.11, 0.13, 0.16).cwiseProduct(head.radii) * rng.uniform(0.9, 1.1);
    deep.push_back(g);
  }

  const double neck_radius_x = 0.45 * head.radii[0];
  const double neck_radius_z = 0.50 * head.radii[2];
  const double neck_shift_z = rng.uniform(-0.1, 0.1) * head.radii[2];

  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        Eigen::Vector3d p(i, j, k);
        Eigen::Vector3d rel = (p - head.center).cwiseQuotient(head.radii);
        double r = rel.norm();
        Eigen::Vector3d u = r > 1e-9 ? Eigen::Vector3d(rel / r) : Eigen::Vector3d::UnitX();
        double ro = r / outer(u);
        double rc = r / cortex(u);

        std::int32_t label = 0;
        if (rc < r_brain) {
          label = rc < r_wm ? kWhiteMatter : kCortex;
          for (const auto& g : deep) {
            if (g.radius(p) < 1.0) label = kDeepGray;
          }
          for (const auto& v : ventricles) {
            if (v.radius(p) < 1.0) label = kVentricle;
          }
        } else if (ro < r_csf) {
          label = kCsf;
        } else if (ro < r_skull) {
          label = kSkull;
        } else if (ro < r_scalp) {
          label = kScalp;
        } else if (p[1] > head.center[1]) {
          double dx = (p[0] - head.center[0]) / neck_radius_x;
          double dz = (p[2] - head.center[2] - neck_shift_z) / neck_radius_z;
          if (dx * dx + dz * dz < 1.0) label = kNeck;
        }
        s.at(i, j, k) = label;
      }
    }
  }
  return s;
}

} // namespace dstrip::synth
