#include "dstrip/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dstrip/errors.hpp"

namespace dstrip::eval {

namespace {

// Distances from every boundary voxel of `from` to the boundary of `to`.
std::vector<double> directed(const BinaryMask& from_boundary, const std::vector<double>& to_sq) {
  std::vector<double> out;
  for (std::size_t i = 0; i < from_boundary.data.size(); ++i) {
    if (from_boundary.data[i]) out.push_back(std::sqrt(to_sq[i]));
  }
  return out;
}

double nearest_rank(std::vector<double>& v, double percentile) {
  std::sort(v.begin(), v.end());
  if (percentile >= 100.0) return v.back();
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * v.size()));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

std::vector<double> pooled_distances(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a.grid, b.grid, "hausdorff");
  if (a.empty() || b.empty()) throw DegenerateInputError("hausdorff: both masks must be nonempty");
  BinaryMask ba = mask::boundary_mask(a);
  BinaryMask bb = mask::boundary_mask(b);
  auto da = directed(ba, mask::squared_edt(bb));
  auto db = directed(bb, mask::squared_edt(ba));
  da.insert(da.end(), db.begin(), db.end());
  return da;
}

std::string fmt(double x) {
  if (std::isinf(x)) return "inf";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json stat_json(const SummaryStat& s) { return {{"mean", num(s.mean)}, {"sd", num(s.sd)}, {"median", num(s.median)}}; }

} // namespace

double dice_score(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a.grid, b.grid, "dice_score");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i] != 0;
    nb += b.data[i] != 0;
    both += a.data[i] != 0 && b.data[i] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * both / static_cast<double>(na + nb);
}

double hausdorff(const BinaryMask& a, const BinaryMask& b, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ParameterError("hausdorff: percentile must be in (0, 100]");
  auto d = pooled_distances(a, b);
  return nearest_rank(d, percentile);
}

HausdorffPair hausdorff_both(const BinaryMask& a, const BinaryMask& b) {
  auto d = pooled_distances(a, b);
  HausdorffPair r;
  r.hd95 = nearest_rank(d, 95.0);
  r.hd = d.back();
  return r;
}

Volume error_proportion_map(std::span<const BinaryMask> gt, std::span<const BinaryMask> pred) {
  if (gt.size() != pred.size()) throw ParameterError("error_proportion_map: gt and pred counts differ");
  if (gt.empty()) throw ParameterError("error_proportion_map: no subjects");
  const Grid& g = gt[0].grid;
  std::vector<std::size_t> errors(g.voxel_count(), 0);
  for (std::size_t s = 0; s < gt.size(); ++s) {
    require_same_grid(g, gt[s].grid, "error_proportion_map");
    require_same_grid(g, pred[s].grid, "error_proportion_map");
    for (std::size_t i = 0; i < errors.size(); ++i) errors[i] += (gt[s].data[i] != 0) != (pred[s].data[i] != 0);
  }
  Volume out(g);
  for (std::size_t i = 0; i < errors.size(); ++i) out.data[i] = static_cast<float>(static_cast<double>(errors[i]) / gt.size());
  return out;
}

MaskEvalReport evaluate_pair(const std::string& subject, const BinaryMask& gt, const BinaryMask& pred) {
  MaskEvalReport r;
  r.subject = subject;
  r.dice = dice_score(gt, pred);
  if (gt.empty() || pred.empty()) {
    r.hausdorff_mm = r.hausdorff95_mm = std::numeric_limits<double>::infinity();
  } else {
    auto h = hausdorff_both(gt, pred);
    r.hausdorff_mm = h.hd;
    r.hausdorff95_mm = h.hd95;
  }
  r.gt_volume_mm3 = gt.count() * gt.grid.voxel_volume();
  r.pred_volume_mm3 = pred.count() * pred.grid.voxel_volume();
  return r;
}

SummaryStat summarize(std::vector<double> values) {
  SummaryStat s;
  if (values.empty()) return s;
  const std::size_t n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1));
  }
  std::sort(values.begin(), values.end());
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

CohortReport evaluate_cohort(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw ParameterError("evaluate_cohort: no pairs");
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!seen.insert(p.subject).second) throw ParameterError("evaluate_cohort: duplicate subject '" + p.subject + "'");
  }
  CohortReport r;
  r.rows.resize(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < pairs.size(); ++i) r.rows[i] = evaluate_pair(pairs[i].subject, pairs[i].gt, pairs[i].pred);
  std::sort(r.rows.begin(), r.rows.end(), [](const auto& x, const auto& y) { return x.subject < y.subject; });

  auto column = [&](double MaskEvalReport::*field) {
    std::vector<double> v;
    for (const auto& row : r.rows) v.push_back(row.*field);
    return summarize(std::move(v));
  };
  r.summary.count = r.rows.size();
  r.summary.dice = column(&MaskEvalReport::dice);
  r.summary.hausdorff_mm = column(&MaskEvalReport::hausdorff_mm);
  r.summary.hausdorff95_mm = column(&MaskEvalReport::hausdorff95_mm);
  r.summary.gt_volume_mm3 = column(&MaskEvalReport::gt_volume_mm3);
  r.summary.pred_volume_mm3 = column(&MaskEvalReport::pred_volume_mm3);
  return r;
}

void write_report_csv(const CohortReport& r, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "subject,dice,hd_mm,hd95_mm,gt_vol_mm3,pred_vol_mm3\n";
  for (const auto& row : r.rows) {
    os << row.subject << ',' << fmt(row.dice) << ',' << fmt(row.hausdorff_mm) << ',' << fmt(row.hausdorff95_mm) << ','
       << fmt(row.gt_volume_mm3) << ',' << fmt(row.pred_volume_mm3) << '\n';
  }
  if (!os) throw Error("failed writing " + path.string());
}

void write_report_json(const CohortReport& r, const std::filesystem::path& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"subject", row.subject},
                    {"dice", num(row.dice)},
                    {"hd_mm", num(row.hausdorff_mm)},
                    {"hd95_mm", num(row.hausdorff95_mm)},
                    {"gt_vol_mm3", num(row.gt_volume_mm3)},
                    {"pred_vol_mm3", num(row.pred_volume_mm3)}});
  }
  nlohmann::json doc = {{"rows", rows},
                        {"summary",
                         {{"count", r.summary.count},
                          {"dice", stat_json(r.summary.dice)},
                          {"hd_mm", stat_json(r.summary.hausdorff_mm)},
                          {"hd95_mm", stat_json(r.summary.hausdorff95_mm)},
                          {"gt_vol_mm3", stat_json(r.summary.gt_volume_mm3)},
                          {"pred_vol_mm3", stat_json(r.summary.pred_volume_mm3)}}},
                        {"space", "native common grid"}};
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << doc.dump(2) << '\n';
  if (!os) throw Error("failed writing " + path.string());
}

std::filesystem::path json_path_for(const std::filesystem::path& out) {
  auto p = out;
  p.replace_extension(".json");
  if (p == out) p += ".json";
  return p;
}

CohortReport evaluate_cohort(const std::vector<EvalPair>& pairs, const std::filesystem::path& out) {
  auto r = evaluate_cohort(pairs);
  write_report_csv(r, out);
  write_report_json(r, json_path_for(out));
  return r;
}

} // namespace dstrip::eval
