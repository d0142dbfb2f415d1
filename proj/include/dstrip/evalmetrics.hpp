#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dstrip/maskops.hpp"

namespace dstrip::eval {

/// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
double dice_score(const BinaryMask& a, const BinaryMask& b);

/// Symmetric Hausdorff distance in mm between the boundary voxels of a and b.
/// percentile = 100 gives the maximum; lower values take the nearest-rank
/// percentile of the directed distances of both directions pooled together.
/// Throws DegenerateInputError if either mask is empty.
double hausdorff(const BinaryMask& a, const BinaryMask& b, double percentile = 100.0);

struct HausdorffPair {
  double hd = 0.0;
  double hd95 = 0.0;
};
/// Both variants from one pair of distance transforms.
HausdorffPair hausdorff_both(const BinaryMask& a, const BinaryMask& b);

/// Per-voxel fraction of subjects where gt and pred disagree. Computed on the
/// common native grid of the masks.
Volume error_proportion_map(std::span<const BinaryMask> gt, std::span<const BinaryMask> pred);

struct MaskEvalReport {
  std::string subject;
  double dice = 0.0;
  double hausdorff_mm = 0.0;   // +inf if a mask is empty
  double hausdorff95_mm = 0.0; // +inf if a mask is empty
  double gt_volume_mm3 = 0.0;
  double pred_volume_mm3 = 0.0;
};

MaskEvalReport evaluate_pair(const std::string& subject, const BinaryMask& gt, const BinaryMask& pred);

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0; // sample standard deviation; 0 for a single row
  double median = 0.0;
};

struct CohortSummary {
  std::size_t count = 0;
  SummaryStat dice, hausdorff_mm, hausdorff95_mm, gt_volume_mm3, pred_volume_mm3;
};

struct CohortReport {
  std::vector<MaskEvalReport> rows; // sorted by subject id
  CohortSummary summary;
};

struct EvalPair {
  std::string subject;
  BinaryMask gt;
  BinaryMask pred;
};

SummaryStat summarize(std::vector<double> values);

/// Evaluates every pair. Throws ParameterError for an empty list or a
/// duplicate subject id.
CohortReport evaluate_cohort(const std::vector<EvalPair>& pairs);

/// CSV with columns subject,dice,hd_mm,hd95_mm,gt_vol_mm3,pred_vol_mm3.
void write_report_csv(const CohortReport& r, const std::filesystem::path& path);
/// Rows and summary as JSON; infinite distances are written as null.
void write_report_json(const CohortReport& r, const std::filesystem::path& path);

/// Evaluates and writes `out` (CSV) plus a JSON mirror next to it.
CohortReport evaluate_cohort(const std::vector<EvalPair>& pairs, const std::filesystem::path& out);

/// `out` with its extension replaced by .json.
std::filesystem::path json_path_for(const std::filesystem::path& out);

} // namespace dstrip::eval
