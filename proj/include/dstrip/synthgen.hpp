#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dstrip/rng.hpp"
#include "dstrip/volgrid.hpp"

namespace dstrip::synth {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Interval&) const = default;
};

/// Sampling ranges of the generative model. Symmetric ranges (translation,
/// rotation, shear) are half-widths: each parameter is drawn from [-r, r].
struct SynthConfig {
  double translation_range = 15.0; // mm
  double rotation_range = 45.0;    // degrees
  Interval scale_range{0.8, 1.3};
  double shear_range = 0.1;
  int deform_ctrl_points = 8;
  double deform_max_amp = 10.0; // mm
  Interval intensity_mean_range{0.0, 1.0};
  Interval intensity_stddev_range{0.0, 0.1};
  int bias_ctrl_points = 4;
  double bias_max_log_amp = 0.5;
  Interval gamma_log_range{-0.5, 0.5};
  double crop_max_fraction = 0.25;
  std::vector<int> downsample_factors{2, 3, 4};
  Interval blur_sigma_range{0.0, 2.0}; // mm
  double prob_bias = 0.9;
  double prob_gamma = 0.9;
  double prob_crop = 0.3;
  double prob_downsample = 0.5;
  double prob_blur = 0.5;

  /// Throws ParameterError when a range is inverted or a probability is outside [0, 1].
  void validate() const;

  /// Every variability source switched off.
  static SynthConfig zero_variability();

  /// Spatial ranges shrunk for 32 mm phantom heads on 1 mm voxels: translation
  /// 3 mm, rotation 20 deg, scale [0.9, 1.1], shear 0.05, deformation 4^3
  /// points up to 2 mm, crop up to 15%, downsampling by 2, blur up to 1 mm.
  /// Intensity, bias and gamma settings keep their defaults.
  static SynthConfig desk_scale();

  bool operator==(const SynthConfig&) const = default;
};

/// Per-voxel displacement in mm, stored as three component volumes.
struct DisplacementField {
  Grid grid;
  std::array<std::vector<float>, 3> components;

  double max_norm() const;
};

/// Random affine in millimeters about the volume center:
/// translation * rotation * scaling * shear.
Eigen::Matrix4d sample_affine(Rng& rng, const SynthConfig& cfg);

/// Random control lattice trilinearly upsampled to `grid`; control points on
/// the boundary faces of the lattice are pinned to zero.
DisplacementField sample_deformation(Rng& rng, const Grid& grid, const SynthConfig& cfg);

/// Backward nearest-neighbor warp. The output voxel at centered position p
/// (mm) reads the input at affine * p + displacement(p). Outside the field
/// reads label 0. Throws GeometryError for a singular affine.
LabelMap warp_labelmap(const LabelMap& s, const Eigen::Matrix4d& affine, const DisplacementField& d);

/// Per-label Gaussian intensities with one shared standard deviation, clamped at 0.
Volume synth_intensities(const LabelMap& s, Rng& rng, const SynthConfig& cfg);

/// Multiplies by exp(B), B a random smooth log-field bounded by bias_max_log_amp.
Volume apply_bias_field(const Volume& v, Rng& rng, const SynthConfig& cfg);

/// Power-law contrast change with exponent exp(g) on the min-max normalized
/// image; the original range is restored afterwards.
Volume apply_gamma(const Volume& v, Rng& rng, const SynthConfig& cfg);
Volume apply_gamma_exponent(const Volume& v, double log_exponent);

/// Cropping (zeroed outer slabs), downsampling and Gaussian blurring, each
/// applied with its configured probability, in that order.
Volume apply_resolution_corruption(const Volume& v, Rng& rng, const SynthConfig& cfg);

/// Separable Gaussian blur with per-axis sigma in mm; the kernel is truncated
/// at 3 sigma and renormalized near the grid edges.
Volume gaussian_blur(const Volume& v, double sigma_mm);

/// Block-average by `factor`, then trilinear upsampling back to the input grid.
Volume downsample_upsample(const Volume& v, int factor);

/// Linear rescale to [0, 1]; a constant image maps to zeros.
Volume normalize_minmax(const Volume& v);

struct Sample {
  Volume image;
  LabelMap warped_labels;
};

/// Full generative pipeline: warp, intensities, bias, gamma, resolution
/// corruption, final [0, 1] normalization. Pure function of its arguments.
Sample synthesize_sample(const LabelMap& s, const SynthConfig& cfg, std::uint64_t seed);

/// Label schema of the procedural phantoms.
LabelSchema phantom_schema();

/// Procedural head phantom: nested perturbed ellipsoids for the brain tissues,
/// a CSF shell, skull and scalp shells and a neck slab, 1 mm voxels in LIA
/// orientation. Each axis must be at least 32 voxels.
LabelMap make_phantom_labelmap(std::uint64_t seed, Index3 dims);

} // namespace dstrip::synth
