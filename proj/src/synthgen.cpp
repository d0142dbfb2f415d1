#include "dstrip/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dstrip/errors.hpp"

namespace dstrip::synth {

namespace {

void check_interval(const Interval& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw ParameterError(std::string("synth config: ") + name + " must be a well-ordered finite interval");
  }
}

void check_halfwidth(double r, const char* name) {
  if (!std::isfinite(r) || r < 0.0) {
    throw ParameterError(std::string("synth config: ") + name + " must be finite and >= 0");
  }
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(std::string("synth config: ") + name + " must be in [0, 1]");
  }
}

// Trilinear upsampling of an n^3 lattice spanning the grid corner to corner.
std::vector<float> upsample_lattice(const std::vector<double>& lattice, int n, const Index3& dims) {
  std::vector<float> out(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  auto axis = [n](int i, int d, int& i0, double& w) {
    double t = d > 1 ? static_cast<double>(i) * (n - 1) / (d - 1) : 0.0;
    i0 = std::min(static_cast<int>(std::floor(t)), n - 2);
    w = t - i0;
  };
  auto L = [&](int a, int b, int c) { return lattice[a + static_cast<std::size_t>(n) * (b + static_cast<std::size_t>(n) * c)]; };
  for (int k = 0; k < dims[2]; ++k) {
    int c0;
    double wc;
    axis(k, dims[2], c0, wc);
    for (int j = 0; j < dims[1]; ++j) {
      int b0;
      double wb;
      axis(j, dims[1], b0, wb);
      for (int i = 0; i < dims[0]; ++i) {
        int a0;
        double wa;
        axis(i, dims[0], a0, wa);
        double v = 0.0;
        for (int dc = 0; dc < 2; ++dc) {
          for (int db = 0; db < 2; ++db) {
            for (int da = 0; da < 2; ++da) {
              double w = (da ? wa : 1.0 - wa) * (db ? wb : 1.0 - wb) * (dc ? wc : 1.0 - wc);
              if (w != 0.0) v += w * L(a0 + da, b0 + db, c0 + dc);
            }
          }
        }
        out[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k)] =
            static_cast<float>(v);
      }
    }
  }
  return out;
}

std::vector<double> random_lattice(Rng& rng, int n, double amp, bool pin_boundary) {
  std::vector<double> lat(static_cast<std::size_t>(n) * n * n, 0.0);
  for (int c = 0; c < n; ++c) {
    for (int b = 0; b < n; ++b) {
      for (int a = 0; a < n; ++a) {
        double v = rng.uniform(-amp, amp);
        bool edge = a == 0 || b == 0 || c == 0 || a == n - 1 || b == n - 1 || c == n - 1;
        if (!(pin_boundary && edge)) lat[a + static_cast<std::size_t>(n) * (b + static_cast<std::size_t>(n) * c)] = v;
      }
    }
  }
  return lat;
}

Vec3 grid_center(const Grid& g) {
  const auto& d = g.dims();
  return {(d[0] - 1) / 2.0, (d[1] - 1) / 2.0, (d[2] - 1) / 2.0};
}

std::vector<double> gaussian_kernel(double sigma_vox) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  std::vector<double> k(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t) k[t + radius] = std::exp(-0.5 * t * t / (sigma_vox * sigma_vox));
  return k;
}

// 1D pass along `axis`; weights renormalized where the kernel leaves the grid.
void convolve_axis(std::vector<double>& data, const Index3& dims, int axis, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = dims[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(dims[0]) : static_cast<std::size_t>(dims[0]) * dims[1];
  const int o1 = axis == 0 ? 1 : 0;
  const int o2 = axis == 2 ? 1 : 2;
  std::vector<double> line(n);
  for (int b = 0; b < dims[o2]; ++b) {
    for (int a = 0; a < dims[o1]; ++a) {
      Index3 start{0, 0, 0};
      start[o1] = a;
      start[o2] = b;
      std::size_t base = start[0] + static_cast<std::size_t>(dims[0]) * (start[1] + static_cast<std::size_t>(dims[1]) * start[2]);
      for (int t = 0; t < n; ++t) line[t] = data[base + t * stride];
      for (int t = 0; t < n; ++t) {
        double s = 0.0, w = 0.0;
        for (int u = std::max(0, t - radius); u <= std::min(n - 1, t + radius); ++u) {
          double kw = kernel[u - t + radius];
          s += kw * line[u];
          w += kw;
        }
        data[base + t * stride] = s / w;
      }
    }
  }
}

} // namespace

void SynthConfig::validate() const {
  check_halfwidth(translation_range, "translation_range");
  check_halfwidth(rotation_range, "rotation_range");
  check_interval(scale_range, "scale_range");
  if (scale_range.lo <= 0.0) throw ParameterError("synth config: scale_range must be positive");
  check_halfwidth(shear_range, "shear_range");
  if (deform_ctrl_points < 2) throw ParameterError("synth config: deform_ctrl_points must be >= 2");
  check_halfwidth(deform_max_amp, "deform_max_amp");
  check_interval(intensity_mean_range, "intensity_mean_range");
  check_interval(intensity_stddev_range, "intensity_stddev_range");
  if (intensity_stddev_range.lo < 0.0) throw ParameterError("synth config: intensity_stddev_range must be >= 0");
  if (bias_ctrl_points < 2) throw ParameterError("synth config: bias_ctrl_points must be >= 2");
  check_halfwidth(bias_max_log_amp, "bias_max_log_amp");
  check_interval(gamma_log_range, "gamma_log_range");
  if (!(crop_max_fraction >= 0.0 && crop_max_fraction < 1.0)) {
    throw ParameterError("synth config: crop_max_fraction must be in [0, 1)");
  }
  if (downsample_factors.empty()) throw ParameterError("synth config: downsample_factors must not be empty");
  for (int f : downsample_factors) {
    if (f < 1) throw ParameterError("synth config: downsample factors must be >= 1");
  }
  check_interval(blur_sigma_range, "blur_sigma_range");
  if (blur_sigma_range.lo < 0.0) throw ParameterError("synth config: blur_sigma_range must be >= 0");
  check_probability(prob_bias, "prob_bias");
  check_probability(prob_gamma, "prob_gamma");
  check_probability(prob_crop, "prob_crop");
  check_probability(prob_downsample, "prob_downsample");
  check_probability(prob_blur, "prob_blur");
}

SynthConfig SynthConfig::zero_variability() {
  SynthConfig c;
  c.translation_range = 0.0;
  c.rotation_range = 0.0;
  c.scale_range = {1.0, 1.0};
  c.shear_range = 0.0;
  c.deform_max_amp = 0.0;
  c.intensity_stddev_range = {0.0, 0.0};
  c.bias_max_log_amp = 0.0;
  c.gamma_log_range = {0.0, 0.0};
  c.crop_max_fraction = 0.0;
  c.blur_sigma_range = {0.0, 0.0};
  c.prob_bias = 0.0;
  c.prob_gamma = 0.0;
  c.prob_crop = 0.0;
  c.prob_downsample = 0.0;
  c.prob_blur = 0.0;
  return c;
}

SynthConfig SynthConfig::desk_scale() {
  SynthConfig c;
  c.translation_range = 3.0;
  c.rotation_range = 20.0;
  c.scale_range = {0.9, 1.1};
  c.shear_range = 0.05;
  c.deform_ctrl_points = 4;
  c.deform_max_amp = 2.0;
  c.crop_max_fraction = 0.15;
  c.downsample_factors = {2};
  c.blur_sigma_range = {0.0, 1.0};
  return c;
}

double DisplacementField::max_norm() const {
  double m = 0.0;
  for (std::size_t i = 0; i < components[0].size(); ++i) {
    double x = components[0][i], y = components[1][i], z = components[2][i];
    m = std::max(m, std::sqrt(x * x + y * y + z * z));
  }
  return m;
}

Eigen::Matrix4d sample_affine(Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  for (int a = 0; a < 3; ++a) T(a, 3) = rng.uniform(-cfg.translation_range, cfg.translation_range);

  const double deg = std::numbers::pi / 180.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  for (int a = 0; a < 3; ++a) {
    double ang = rng.uniform(-cfg.rotation_range, cfg.rotation_range) * deg;
    R = R * Eigen::AngleAxisd(ang, Eigen::Vector3d::Unit(a)).toRotationMatrix();
  }

  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (int a = 0; a < 3; ++a) S(a, a) = rng.uniform(cfg.scale_range.lo, cfg.scale_range.hi);

  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
  H(0, 1) = rng.uniform(-cfg.shear_range, cfg.shear_range);
  H(0, 2) = rng.uniform(-cfg.shear_range, cfg.shear_range);
  H(1, 2) = rng.uniform(-cfg.shear_range, cfg.shear_range);

  Eigen::Matrix4d L = Eigen::Matrix4d::Identity();
  L.topLeftCorner<3, 3>() = R * S * H;
  return T * L;
}

DisplacementField sample_deformation(Rng& rng, const Grid& grid, const SynthConfig& cfg) {
  cfg.validate();
  DisplacementField d{grid, {}};
  const int n = cfg.deform_ctrl_points;
  for (int a = 0; a < 3; ++a) {
    auto lat = random_lattice(rng, n, cfg.deform_max_amp, true);
    d.components[a] = upsample_lattice(lat, n, grid.dims());
  }
  return d;
}

LabelMap warp_labelmap(const LabelMap& s, const Eigen::Matrix4d& affine, const DisplacementField& d) {
  require_same_grid(s.grid, d.grid, "warp_labelmap");
  double det = affine.topLeftCorner<3, 3>().determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) throw GeometryError("warp_labelmap: affine is not invertible");

  LabelMap out(s.grid, s.schema);
  const auto& dims = s.grid.dims();
  const Vec3 c = grid_center(s.grid);
  const Vec3& vs = s.grid.voxel_size();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        std::size_t idx = s.grid.index(i, j, k);
        Eigen::Vector4d p((i - c[0]) * vs[0], (j - c[1]) * vs[1], (k - c[2]) * vs[2], 1.0);
        Eigen::Vector4d q = affine * p;
        Index3 src;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          double mm = q[a] + d.components[a][idx];
          double v = mm / vs[a] + c[a];
          double r = std::floor(v + 0.5);
          if (!(r >= 0.0 && r < dims[a])) {
            inside = false;
            break;
          }
          src[a] = static_cast<int>(r);
        }
        out.data[idx] = inside ? s.at(src[0], src[1], src[2]) : 0;
      }
    }
  }
  return out;
}

Volume synth_intensities(const LabelMap& s, Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  std::int32_t lo = 0, hi = 0;
  for (auto v : s.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> mu(static_cast<std::size_t>(hi - lo) + 1);
  for (auto& m : mu) m = rng.uniform(cfg.intensity_mean_range.lo, cfg.intensity_mean_range.hi);
  const double sigma = rng.uniform(cfg.intensity_stddev_range.lo, cfg.intensity_stddev_range.hi);

  Volume out(s.grid);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    double v = mu[static_cast<std::size_t>(s.data[i] - lo)];
    if (sigma > 0.0) v += sigma * rng.normal();
    out.data[i] = static_cast<float>(std::max(0.0, v));
  }
  return out;
}

Volume apply_bias_field(const Volume& v, Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.bias_ctrl_points;
  auto lat = random_lattice(rng, n, cfg.bias_max_log_amp, false);
  if (cfg.bias_max_log_amp == 0.0) return v;
  auto field = upsample_lattice(lat, n, v.grid.dims());
  Volume out(v.grid);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    out.data[i] = static_cast<float>(v.data[i] * std::exp(static_cast<double>(field[i])));
  }
  return out;
}

Volume apply_gamma_exponent(const Volume& v, double log_exponent) {
  if (v.data.empty()) return v;
  auto [mn_it, mx_it] = std::minmax_element(v.data.begin(), v.data.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn) || log_exponent == 0.0) return v;
  const double e = std::exp(log_exponent);
  Volume out(v.grid);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    double x = (v.data[i] - mn) / (mx - mn);
    out.data[i] = static_cast<float>(mn + std::pow(x, e) * (mx - mn));
  }
  return out;
}

Volume apply_gamma(const Volume& v, Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  return apply_gamma_exponent(v, rng.uniform(cfg.gamma_log_range.lo, cfg.gamma_log_range.hi));
}

Volume gaussian_blur(const Volume& v, double sigma_mm) {
  if (!(sigma_mm > 0.0)) return v;
  std::vector<double> buf(v.data.begin(), v.data.end());
  for (int a = 0; a < 3; ++a) {
    double s = sigma_mm / v.grid.voxel_size()[a];
    if (s < 1e-3) continue;
    convolve_axis(buf, v.grid.dims(), a, gaussian_kernel(s));
  }
  Volume out(v.grid);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = static_cast<float>(buf[i]);
  return out;
}

Volume downsample_upsample(const Volume& v, int factor) {
  if (factor < 1) throw ParameterError("downsample factor must be >= 1");
  if (factor == 1) return v;
  const auto& dims = v.grid.dims();
  Index3 low;
  for (int a = 0; a < 3; ++a) low[a] = (dims[a] + factor - 1) / factor;
  std::vector<double> sum(static_cast<std::size_t>(low[0]) * low[1] * low[2], 0.0);
  std::vector<int> cnt(sum.size(), 0);
  auto lidx = [&](int a, int b, int c) { return a + static_cast<std::size_t>(low[0]) * (b + static_cast<std::size_t>(low[1]) * c); };
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        auto li = lidx(i / factor, j / factor, k / factor);
        sum[li] += v.at(i, j, k);
        ++cnt[li];
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= cnt[i];

  auto axis = [&](int i, int a, int& i0, int& i1, double& w) {
    double t = std::clamp((i + 0.5) / factor - 0.5, 0.0, static_cast<double>(low[a] - 1));
    i0 = static_cast<int>(std::floor(t));
    i1 = std::min(i0 + 1, low[a] - 1);
    w = t - i0;
  };
  Volume out(v.grid);
  for (int k = 0; k < dims[2]; ++k) {
    int c0, c1;
    double wc;
    axis(k, 2, c0, c1, wc);
    for (int j = 0; j < dims[1]; ++j) {
      int b0, b1;
      double wb;
      axis(j, 1, b0, b1, wb);
      for (int i = 0; i < dims[0]; ++i) {
        int a0, a1;
        double wa;
        axis(i, 0, a0, a1, wa);
        auto lerp = [](double x, double y, double w) { return w == 0.0 ? x : x + w * (y - x); };
        double x00 = lerp(sum[lidx(a0, b0, c0)], sum[lidx(a1, b0, c0)], wa);
        double x10 = lerp(sum[lidx(a0, b1, c0)], sum[lidx(a1, b1, c0)], wa);
        double x01 = lerp(sum[lidx(a0, b0, c1)], sum[lidx(a1, b0, c1)], wa);
        double x11 = lerp(sum[lidx(a0, b1, c1)], sum[lidx(a1, b1, c1)], wa);
        out.at(i, j, k) = static_cast<float>(lerp(lerp(x00, x10, wb), lerp(x01, x11, wb), wc));
      }
    }
  }
  return out;
}

Volume apply_resolution_corruption(const Volume& v, Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  Volume out = v;
  const auto& dims = v.grid.dims();
  if (rng.bernoulli(cfg.prob_crop)) {
    int axis = static_cast<int>(rng.below(3));
    bool high = rng.bernoulli(0.5);
    int width = static_cast<int>(std::floor(rng.uniform(0.0, cfg.crop_max_fraction) * dims[axis]));
    for (int k = 0; k < dims[2]; ++k) {
      for (int j = 0; j < dims[1]; ++j) {
        for (int i = 0; i < dims[0]; ++i) {
          int t = axis == 0 ? i : axis == 1 ? j : k;
          bool zero = high ? t >= dims[axis] - width : t < width;
          if (zero) out.at(i, j, k) = 0.0f;
        }
      }
    }
  }
  if (rng.bernoulli(cfg.prob_downsample)) {
    int f = cfg.downsample_factors[rng.below(cfg.downsample_factors.size())];
    out = downsample_upsample(out, f);
  }
  if (rng.bernoulli(cfg.prob_blur)) {
    out = gaussian_blur(out, rng.uniform(cfg.blur_sigma_range.lo, cfg.blur_sigma_range.hi));
  }
  return out;
}

Volume normalize_minmax(const Volume& v) {
  Volume out(v.grid);
  if (v.data.empty()) return out;
  auto [mn_it, mx_it] = std::minmax_element(v.data.begin(), v.data.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn)) return out;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    out.data[i] = static_cast<float>(std::clamp((v.data[i] - mn) / (mx - mn), 0.0, 1.0));
  }
  return out;
}

Sample synthesize_sample(const LabelMap& s, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng spatial(derive_seed(seed, 0));
  Eigen::Matrix4d aff = sample_affine(spatial, cfg);
  DisplacementField d = sample_deformation(spatial, s.grid, cfg);
  LabelMap warped = warp_labelmap(s, aff, d);

  Rng intensity(derive_seed(seed, 1));
  Volume img = synth_intensities(warped, intensity, cfg);

  Rng bias(derive_seed(seed, 2));
  if (bias.bernoulli(cfg.prob_bias)) img = apply_bias_field(img, bias, cfg);

  Rng gamma(derive_seed(seed, 3));
  if (gamma.bernoulli(cfg.prob_gamma)) img = apply_gamma(img, gamma, cfg);

  Rng res(derive_seed(seed, 4));
  img = apply_resolution_corruption(img, res, cfg);

  return {normalize_minmax(img), std::move(warped)};
}

} // namespace dstrip::synth
