#include "dstrip/nn/unet.hpp"

#include <cmath>
#include <span>

#include "dstrip/errors.hpp"
#include "dstrip/nn/conv3d.hpp"
#include "dstrip/nn/fpenv.hpp"
#include "dstrip/rng.hpp"

namespace dstrip::nn {

const char* to_string(HeadMode h) { return h == HeadMode::softmax2 ? "softmax2" : "sdt1"; }

HeadMode head_from_string(const std::string& s) {
  if (s == "softmax2") return HeadMode::softmax2;
  if (s == "sdt1") return HeadMode::sdt1;
  throw ParameterError("unknown head mode '" + s + "'");
}

UNetConfig UNetConfig::with_doubling(int levels, int base, int input_size, HeadMode head) {
  UNetConfig cfg;
  cfg.levels = levels;
  cfg.features.clear();
  for (int l = 0; l < levels; ++l) {
    cfg.features.push_back(base << l);
  }
  cfg.input_size = input_size;
  cfg.head = head;
  return cfg;
}

void UNetConfig::validate() const {
  if (levels < 1) {
    throw ParameterError("unet: levels must be at least 1");
  }
  if (static_cast<int>(features.size()) != levels) {
    throw ParameterError("unet: features_per_level must list one width per level");
  }
  for (int f : features) {
    if (f < 1) {
      throw ParameterError("unet: feature widths must be positive");
    }
  }
  if (convs_per_level < 1) {
    throw ParameterError("unet: convs_per_level must be at least 1");
  }
  if (kernel != 3) {
    throw ParameterError("unet: only 3x3x3 kernels are supported");
  }
  if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) {
    throw ParameterError("unet: leaky_slope must be a nonnegative finite number");
  }
  const int factor = 1 << (levels - 1);
  if (input_size < 1 || input_size % factor != 0) {
    throw ParameterError("unet: input_size must be divisible by 2^(levels-1)");
  }
}

template <typename T>
std::size_t ModelParams<T>::size() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    n += t.data.size();
  }
  return n;
}

template <typename T>
const NamedTensor<T>& ModelParams<T>::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) {
      return t;
    }
  }
  throw ParameterError("model has no parameter '" + name + "'");
}

template <typename T>
NamedTensor<T>& ModelParams<T>::get(const std::string& name) {
  return const_cast<NamedTensor<T>&>(std::as_const(*this).get(name));
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams out;
  for (const auto& t : tensors) {
    out.tensors.push_back({t.name, t.shape, std::vector<T>(t.data.size(), T(0))});
  }
  return out;
}

template <typename T>
bool ModelParams<T>::congruent(const ModelParams& other) const {
  if (tensors.size() != other.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != other.tensors[i].name || tensors[i].shape != other.tensors[i].shape ||
        tensors[i].data.size() != other.tensors[i].data.size()) {
      return false;
    }
  }
  return true;
}

namespace {

std::string conv_name(const char* stage, int level, int conv) {
  return std::string(stage) + std::to_string(level) + ".conv" + std::to_string(conv);
}

// Input channel count of each conv in execution order, paired with its name stem.
struct ConvSpec {
  std::string stem;
  int c_in;
  int c_out;
};

std::vector<ConvSpec> conv_specs(const UNetConfig& cfg) {
  std::vector<ConvSpec> specs;
  int c = 1;
  for (int l = 0; l < cfg.levels; ++l) {
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      specs.push_back({conv_name("enc", l, k), c, cfg.features[l]});
      c = cfg.features[l];
    }
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    c = c + cfg.features[l];
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      specs.push_back({conv_name("dec", l, k), c, cfg.features[l]});
      c = cfg.features[l];
    }
  }
  specs.push_back({"head", c, cfg.output_channels()});
  return specs;
}

template <typename T>
std::span<const T> weight(const ModelParams<T>& p, const std::string& stem) {
  return p.get(stem + ".weight").data;
}

template <typename T>
std::span<const T> bias(const ModelParams<T>& p, const std::string& stem) {
  return p.get(stem + ".bias").data;
}

template <typename T>
void check_params(const ModelParams<T>& params, const UNetConfig& cfg) {
  cfg.validate();
  const auto layout = parameter_layout(cfg);
  if (layout.size() != params.tensors.size()) {
    throw ParameterError("unet: parameter count does not match the configuration");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != params.tensors[i].name || layout[i].second != params.tensors[i].shape) {
      throw ParameterError("unet: parameter '" + params.tensors[i].name + "' does not match the configuration");
    }
  }
}

template <typename T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
}

} // namespace

std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const UNetConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  for (const auto& s : conv_specs(cfg)) {
    out.push_back({s.stem + ".weight", {s.c_out, s.c_in, 3, 3, 3}});
    out.push_back({s.stem + ".bias", {s.c_out}});
  }
  return out;
}

template <typename T>
ModelParams<T> zero_params(const UNetConfig& cfg) {
  cfg.validate();
  ModelParams<T> p;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    std::size_t n = 1;
    for (int d : shape) {
      n *= static_cast<std::size_t>(d);
    }
    p.tensors.push_back({name, shape, std::vector<T>(n, T(0))});
  }
  return p;
}

template <typename T>
ModelParams<T> init_params(const UNetConfig& cfg, std::uint64_t seed, double brain_prior) {
  if (!(brain_prior > 0.0 && brain_prior < 1.0)) {
    throw ParameterError("unet: brain prior must lie in (0, 1)");
  }
  ModelParams<T> p = zero_params<T>(cfg);
  Rng rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
  for (auto& t : p.tensors) {
    if (t.shape.size() != 5 || t.name == "head.weight") {
      continue;
    }
    const double fan_in = static_cast<double>(t.shape[1]) * kTaps;
    const double sd = gain / std::sqrt(fan_in);
    for (T& v : t.data) {
      v = static_cast<T>(sd * rng.normal());
    }
  }
  if (cfg.head == HeadMode::softmax2) {
    p.get("head.bias").data[0] = static_cast<T>(std::log(brain_prior / (1.0 - brain_prior)));
  }
  return p;
}

template <typename T>
ForwardResult<T> unet_forward(const ModelParams<T>& params, const UNetConfig& cfg, const FeatureGrid<T>& x) {
  check_params(params, cfg);
  const int n = cfg.input_size;
  if (x.channels != 1 || x.spatial != std::array<int, 3>{n, n, n}) {
    throw ParameterError("unet: input must be one channel of size " + std::to_string(n) + "^3");
  }
  const T slope = static_cast<T>(cfg.leaky_slope);
  ForwardResult<T> r;
  UNetCache<T>& c = r.cache;
  c.encoder.resize(cfg.levels);
  c.decoder.resize(std::max(cfg.levels - 1, 0));

  auto run_conv = [&](const std::string& stem, FeatureGrid<T> in, std::vector<typename UNetCache<T>::ConvRecord>& rec) {
    FeatureGrid<T> out = leaky_relu(conv3d_forward<T>(in, weight(params, stem), bias(params, stem)), slope);
    rec.push_back({std::move(in), out});
    return out;
  };

  FeatureGrid<T> cur = x;
  std::vector<FeatureGrid<T>> skips;
  for (int l = 0; l < cfg.levels; ++l) {
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      cur = run_conv(conv_name("enc", l, k), std::move(cur), c.encoder[l]);
    }
    if (l + 1 < cfg.levels) {
      skips.push_back(cur);
      c.pools.push_back(maxpool2(cur));
      cur = c.pools.back().output;
    }
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    cur = concat(upsample2(cur), skips[l]);
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      cur = run_conv(conv_name("dec", l, k), std::move(cur), c.decoder[l]);
    }
  }
  FeatureGrid<T> logits = conv3d_forward<T>(cur, weight(params, "head"), bias(params, "head"));
  c.head_input = std::move(cur);
  r.output = cfg.head == HeadMode::softmax2 ? softmax(logits) : std::move(logits);
  c.output = r.output;
  return r;
}

template <typename T>
ModelParams<T> unet_backward(const ModelParams<T>& params, const UNetConfig& cfg, const UNetCache<T>& cache,
                             const FeatureGrid<T>& grad_output) {
  check_params(params, cfg);
  if (!grad_output.same_shape(cache.output)) {
    throw ParameterError("unet_backward: output gradient shape mismatch");
  }
  const T slope = static_cast<T>(cfg.leaky_slope);
  ModelParams<T> grads = params.zeros_like();

  auto store = [&](const std::string& stem, ConvGrads<T>& g) {
    grads.get(stem + ".weight").data = std::move(g.grad_kernel);
    grads.get(stem + ".bias").data = std::move(g.grad_bias);
  };

  FeatureGrid<T> g = cfg.head == HeadMode::softmax2 ? softmax_backward(cache.output, grad_output) : grad_output;
  {
    ConvGrads<T> cg = conv3d_backward<T>(cache.head_input, weight(params, "head"), g);
    store("head", cg);
    g = std::move(cg.grad_input);
  }

  auto back_convs = [&](const char* stage, int level, const std::vector<typename UNetCache<T>::ConvRecord>& recs,
                        bool first_layer) {
    for (int k = cfg.convs_per_level - 1; k >= 0; --k) {
      const auto& rec = recs[k];
      g = leaky_relu_backward(rec.activated, g, slope);
      const std::string stem = conv_name(stage, level, k);
      ConvGrads<T> cg = conv3d_backward<T>(rec.input, weight(params, stem), g, !(first_layer && k == 0));
      store(stem, cg);
      g = std::move(cg.grad_input);
    }
  };

  std::vector<FeatureGrid<T>> skip_grads(std::max(cfg.levels - 1, 0));
  for (int l = 0; l + 1 < cfg.levels; ++l) {
    back_convs("dec", l, cache.decoder[l], false);
    // Split the concatenation gradient into its upsampled and skip halves.
    const int up_channels = cfg.features[l + 1];
    FeatureGrid<T> g_up(up_channels, g.spatial);
    FeatureGrid<T> g_skip(g.channels - up_channels, g.spatial);
    std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(g_up.data.size()), g_up.data.begin());
    std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(g_up.data.size()), g.data.end(), g_skip.data.begin());
    skip_grads[l] = std::move(g_skip);
    g = upsample2_backward(g_up);
  }
  for (int l = cfg.levels - 1; l >= 0; --l) {
    if (l + 1 < cfg.levels) {
      FeatureGrid<T> from_pool = maxpool2_backward(cache.pools[l], g, skip_grads[l].spatial);
      add_into(from_pool.data, skip_grads[l].data);
      g = std::move(from_pool);
    }
    back_convs("enc", l, cache.encoder[l], l == 0);
  }
  return grads;
}

template <typename T>
FeatureGrid<T> to_feature_grid(const Volume& v) {
  const auto& d = v.grid.dims();
  FeatureGrid<T> g(1, {d[2], d[1], d[0]});
  std::copy(v.data.begin(), v.data.end(), g.data.begin());
  return g;
}

BinaryMask predict_mask(const ModelParams<float>& params, const UNetConfig& cfg, const Volume& x) {
  FlushDenormals ftz;
  const ForwardResult<float> r = unet_forward(params, cfg, to_feature_grid<float>(x));
  BinaryMask m(x.grid);
  const std::size_t n = r.output.plane();
  for (std::size_t i = 0; i < n; ++i) {
    m.data[i] = cfg.head == HeadMode::softmax2 ? (r.output.data[i] > 0.5f ? 1 : 0) : (r.output.data[i] < 0.0f ? 1 : 0);
  }
  return m;
}

Volume apply_mask(const Volume& x, const BinaryMask& m) {
  require_same_grid(x.grid, m.grid, "apply_mask");
  Volume out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!m.data[i]) {
      out.data[i] = 0.0f;
    }
  }
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params(const UNetConfig&, std::uint64_t, double);
template ModelParams<double> init_params(const UNetConfig&, std::uint64_t, double);
template ModelParams<float> zero_params(const UNetConfig&);
template ModelParams<double> zero_params(const UNetConfig&);
template ForwardResult<float> unet_forward(const ModelParams<float>&, const UNetConfig&, const FeatureGrid<float>&);
template ForwardResult<double> unet_forward(const ModelParams<double>&, const UNetConfig&, const FeatureGrid<double>&);
template ModelParams<float> unet_backward(const ModelParams<float>&, const UNetConfig&, const UNetCache<float>&,
                                          const FeatureGrid<float>&);
template ModelParams<double> unet_backward(const ModelParams<double>&, const UNetConfig&, const UNetCache<double>&,
                                           const FeatureGrid<double>&);
template FeatureGrid<float> to_feature_grid(const Volume&);
template FeatureGrid<double> to_feature_grid(const Volume&);

} // namespace dstrip::nn
