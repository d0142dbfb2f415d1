#include "dstrip/labelprep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "dstrip/errors.hpp"
#include "dstrip/rng.hpp"

namespace dstrip::labelprep {

namespace {

// Exponent triples (a, b, c) with a + b + c <= degree.
std::vector<Index3> monomials(int degree) {
  std::vector<Index3> out;
  for (int total = 0; total <= degree; ++total) {
    for (int a = total; a >= 0; --a) {
      for (int b = total - a; b >= 0; --b) out.push_back({a, b, total - a - b});
    }
  }
  return out;
}

void eval_basis(const std::vector<Index3>& terms, int degree, const double* x, double* row) {
  std::array<std::vector<double>, 3> pw;
  for (int a = 0; a < 3; ++a) {
    pw[a].assign(degree + 1, 1.0);
    for (int e = 1; e <= degree; ++e) pw[a][e] = pw[a][e - 1] * x[a];
  }
  for (std::size_t t = 0; t < terms.size(); ++t) {
    row[t] = pw[0][terms[t][0]] * pw[1][terms[t][1]] * pw[2][terms[t][2]];
  }
}

double normalized_coord(int i, int n) { return n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0; }

constexpr double kLog2Pi = 1.8378770664093454836;

double log_component(const GmmParams& g, int c, double x) {
  double d = x - g.means[c];
  return std::log(g.weights[c]) - 0.5 * (kLog2Pi + std::log(g.variances[c]) + d * d / g.variances[c]);
}

double log_sum_exp(const std::vector<double>& v) {
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> kmeanspp(std::span<const double> x, int k, Rng& rng) {
  std::vector<double> centers{x[rng.below(x.size())]};
  std::vector<double> d2(x.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform() * total;
    std::size_t pick = x.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && r < acc) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0 && pick > 0) --pick; // never duplicate a center
    centers.push_back(x[pick]);
  }
  return centers;
}

} // namespace

CorrectionResult correct_nonuniformity(const Volume& v, int degree) {
  if (degree < 0) throw ParameterError("correct_nonuniformity: degree must be >= 0");
  const auto terms = monomials(degree);
  const std::size_t nt = terms.size();
  const auto& dims = v.grid.dims();

  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nt, nt);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(nt);
  std::vector<double> row(nt);
  std::size_t support = 0;
  double mean_in = 0.0;
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        float val = v.at(i, j, k);
        if (!(val > 0.0f)) continue;
        double x[3] = {normalized_coord(i, dims[0]), normalized_coord(j, dims[1]), normalized_coord(k, dims[2])};
        eval_basis(terms, degree, x, row.data());
        Eigen::Map<const Eigen::VectorXd> r(row.data(), nt);
        ata.selfadjointView<Eigen::Lower>().rankUpdate(r);
        atb += r * std::log(static_cast<double>(val));
        mean_in += val;
        ++support;
      }
    }
  }
  if (support < nt) return {v, false, "degenerate fit: too few positive voxels"};
  mean_in /= support;
  ata = ata.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  Eigen::VectorXd coef = ldlt.solve(atb);
  if (ldlt.info() != Eigen::Success || !coef.allFinite()) return {v, false, "degenerate fit: singular system"};

  std::vector<double> out(v.data.size());
  double mean_out = 0.0;
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        double x[3] = {normalized_coord(i, dims[0]), normalized_coord(j, dims[1]), normalized_coord(k, dims[2])};
        eval_basis(terms, degree, x, row.data());
        double p = Eigen::Map<const Eigen::VectorXd>(row.data(), nt).dot(coef);
        std::size_t idx = v.grid.index(i, j, k);
        out[idx] = v.data[idx] / std::exp(p);
        if (v.data[idx] > 0.0f) mean_out += out[idx];
      }
    }
  }
  mean_out /= support;
  const double scale = mean_in / mean_out;
  Volume res(v.grid);
  for (std::size_t i = 0; i < out.size(); ++i) res.data[i] = static_cast<float>(out[i] * scale);
  return {std::move(res), true, "ok"};
}

double GmmParams::log_likelihood(std::span<const double> samples) const {
  std::vector<double> lp(k);
  double total = 0.0;
  for (double x : samples) {
    for (int c = 0; c < k; ++c) lp[c] = log_component(*this, c, x);
    total += log_sum_exp(lp);
  }
  return samples.empty() ? 0.0 : total / samples.size();
}

int GmmParams::classify(double x) const {
  int best = 0;
  double best_lp = log_component(*this, 0, x);
  for (int c = 1; c < k; ++c) {
    double lp = log_component(*this, c, x);
    if (lp > best_lp) {
      best_lp = lp;
      best = c;
    }
  }
  return best;
}

GmmFit fit_gmm_trace(std::span<const double> samples, int k, std::uint64_t seed) {
  if (k < 1) throw ParameterError("fit_gmm: k must be >= 1");
  for (double x : samples) {
    if (!std::isfinite(x)) throw ParameterError("fit_gmm: samples must be finite");
  }
  std::vector<double> distinct(samples.begin(), samples.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < k) throw ParameterError("fit_gmm: fewer distinct samples than components");

  const std::size_t n = samples.size();
  double mean_all = 0.0;
  for (double x : samples) mean_all += x;
  mean_all /= n;
  double var_all = 0.0;
  for (double x : samples) var_all += (x - mean_all) * (x - mean_all);
  var_all /= n;
  // Keeps a component from collapsing onto a single repeated value.
  const double var_floor = std::max(1e-10 * var_all, 1e-300);

  Rng rng(seed);
  GmmFit fit;
  GmmParams& g = fit.params;
  g.k = k;
  g.means = kmeanspp(samples, k, rng);
  g.variances.assign(k, 0.0);
  g.weights.assign(k, 0.0);
  {
    std::vector<double> cnt(k, 0.0);
    for (double x : samples) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (std::abs(x - g.means[c]) < std::abs(x - g.means[best])) best = c;
      }
      cnt[best] += 1.0;
      g.variances[best] += (x - g.means[best]) * (x - g.means[best]);
    }
    for (int c = 0; c < k; ++c) {
      g.weights[c] = std::max(cnt[c], 1.0) / n;
      g.variances[c] = cnt[c] > 1.0 ? std::max(g.variances[c] / cnt[c], var_floor) : std::max(var_all / k, var_floor);
    }
    double ws = 0.0;
    for (double w : g.weights) ws += w;
    for (double& w : g.weights) w /= ws;
  }

  std::vector<double> resp(n * k);
  std::vector<double> lp(k);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < kGmmMaxIterations; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) lp[c] = log_component(g, c, samples[i]);
      double lse = log_sum_exp(lp);
      ll += lse;
      for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(lp[c] - lse);
    }
    ll /= n;
    fit.log_likelihood.push_back(ll);
    fit.iterations = it + 1;
    if (it > 0 && std::abs(ll - prev) <= kGmmTolerance * std::abs(prev)) {
      fit.converged = true;
      break;
    }
    prev = ll;

    for (int c = 0; c < k; ++c) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + c];
        sx += resp[i * k + c] * samples[i];
      }
      if (nk <= 0.0) continue; // empty component keeps its parameters
      double mu = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) sv += resp[i * k + c] * (samples[i] - mu) * (samples[i] - mu);
      g.means[c] = mu;
      g.variances[c] = std::max(sv / nk, var_floor);
      g.weights[c] = nk / n;
    }
    double ws = 0.0;
    for (double w : g.weights) ws += w;
    for (double& w : g.weights) w /= ws;
  }
  return fit;
}

GmmParams fit_gmm(std::span<const double> samples, int k, std::uint64_t seed) { return fit_gmm_trace(samples, k, seed).params; }

LabelMap classify_nonbrain(const Volume& v, const BinaryMask& brain_mask, const GmmParams& gmm, std::int32_t base_label) {
  require_same_grid(v.grid, brain_mask.grid, "classify_nonbrain");
  if (gmm.k < 1) throw ParameterError("classify_nonbrain: empty mixture");
  if (base_label < 1) throw ParameterError("classify_nonbrain: base label must be >= 1");
  LabelSchema schema{{0, {"background", LabelCategory::background}}};
  for (int c = 0; c < gmm.k; ++c) {
    schema[base_label + c] = {"nonbrain_" + std::to_string(c), LabelCategory::nonbrain_synthetic};
  }
  LabelMap out(v.grid, std::move(schema));
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (!brain_mask.data[i]) out.data[i] = base_label + gmm.classify(v.data[i]);
  }
  return out;
}

LabelMap fuse_labels(const LabelMap& manual, const LabelMap& gmm_labels, const BinaryMask& brain_boundary) {
  require_same_grid(manual.grid, gmm_labels.grid, "fuse_labels");
  require_same_grid(manual.grid, brain_boundary.grid, "fuse_labels");
  auto id_range = [](const LabelSchema& s) {
    std::int32_t lo = std::numeric_limits<std::int32_t>::max(), hi = std::numeric_limits<std::int32_t>::min();
    for (const auto& [id, info] : s) {
      if (id == 0) continue;
      lo = std::min(lo, id);
      hi = std::max(hi, id);
    }
    return std::pair{lo, hi};
  };
  auto [mlo, mhi] = id_range(manual.schema);
  auto [glo, ghi] = id_range(gmm_labels.schema);
  if (mlo <= mhi && glo <= ghi && mlo <= ghi && glo <= mhi) {
    throw SchemaError("fuse_labels: manual and GMM label ids overlap");
  }
  LabelSchema schema = manual.schema;
  for (const auto& [id, info] : gmm_labels.schema) {
    if (id != 0) schema[id] = info;
  }
  LabelMap out(manual.grid, std::move(schema));
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = brain_boundary.data[i] ? manual.data[i] : gmm_labels.data[i];
  }
  return out;
}

PrepResult prepare_labels(const Volume& image, const LabelMap& manual, int k, int degree, std::uint64_t seed) {
  require_same_grid(image.grid, manual.grid, "prepare_labels");
  PrepResult res;
  res.correction = correct_nonuniformity(image, degree);
  const Volume& v = res.correction.corrected;
  BinaryMask brain = mask::merge_brain_labels(manual);
  std::vector<double> samples;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (!brain.data[i]) samples.push_back(v.data[i]);
  }
  res.gmm = fit_gmm_trace(samples, k, seed);
  std::int32_t base = 1;
  for (const auto& [id, info] : manual.schema) base = std::max(base, id + 1);
  LabelMap gmm_labels = classify_nonbrain(v, brain, res.gmm.params, base);
  res.fused = fuse_labels(manual, gmm_labels, brain);
  return res;
}

} // namespace dstrip::labelprep
