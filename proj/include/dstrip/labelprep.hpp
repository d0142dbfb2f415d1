#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dstrip/maskops.hpp"
#include "dstrip/volgrid.hpp"

namespace dstrip::labelprep {

struct CorrectionResult {
  Volume corrected;
  bool fitted = false; // false: degenerate fit, input returned unchanged
  std::string status;
};

/// Divides by exp(P), P the least-squares polynomial of total degree `degree`
/// fitted to log-intensities over the positive voxels, then rescales so the
/// mean over those voxels is unchanged.
CorrectionResult correct_nonuniformity(const Volume& v, int degree = 3);

struct GmmParams {
  int k = 0;
  std::vector<double> means;
  std::vector<double> variances;
  std::vector<double> weights;

  /// Mean log-likelihood per sample.
  double log_likelihood(std::span<const double> samples) const;
  /// Component with the highest posterior; ties go to the lowest index.
  int classify(double x) const;
};

struct GmmFit {
  GmmParams params;
  std::vector<double> log_likelihood; // mean log-likelihood before each M-step
  int iterations = 0;
  bool converged = false;
};

constexpr double kGmmTolerance = 1e-6;
constexpr int kGmmMaxIterations = 100;

/// EM from a k-means++ start. Stops when the relative change of the
/// log-likelihood drops below kGmmTolerance or after kGmmMaxIterations.
GmmFit fit_gmm_trace(std::span<const double> samples, int k, std::uint64_t seed);
GmmParams fit_gmm(std::span<const double> samples, int k, std::uint64_t seed);

/// Labels base_label + component for every voxel outside brain_mask; voxels
/// inside stay 0.
LabelMap classify_nonbrain(const Volume& v, const BinaryMask& brain_mask, const GmmParams& gmm, std::int32_t base_label);

/// Manual labels inside brain_boundary, GMM labels elsewhere. The nonzero id
/// ranges of the two schemas must be disjoint.
LabelMap fuse_labels(const LabelMap& manual, const LabelMap& gmm_labels, const BinaryMask& brain_boundary);

/// Whole pipeline for one subject: correction, GMM over non-brain voxels,
/// classification and fusion. The brain boundary is the support of the
/// manual brain labels.
struct PrepResult {
  LabelMap fused;
  GmmFit gmm;
  CorrectionResult correction;
};
PrepResult prepare_labels(const Volume& image, const LabelMap& manual, int k = 6, int degree = 3, std::uint64_t seed = 0);

} // namespace dstrip::labelprep
