#include "dstrip/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "dstrip/errors.hpp"

namespace dstrip::cli {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

double parse_double(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  double x = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

long long parse_integer(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  long long x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return x;
}

int parse_int(const std::string& key, const std::string& raw) {
  long long x = parse_integer(key, raw);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError("config key '" + key + "': integer out of range");
  }
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  std::uint64_t x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string parse_string(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
    throw ConfigError("config key '" + key + "': expected a quoted string, got '" + v + "'");
  }
  return v.substr(1, v.size() - 2);
}

std::vector<std::string> parse_array(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError("config key '" + key + "': expected an array like [1, 2], got '" + v + "'");
  }
  std::vector<std::string> items;
  std::string inner = trim(v.substr(1, v.size() - 2));
  if (inner.empty()) return items;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

synth::Interval parse_interval(const std::string& key, const std::string& raw) {
  auto items = parse_array(key, raw);
  if (items.size() != 2) throw ConfigError("config key '" + key + "': expected two values [lo, hi]");
  return {parse_double(key, items[0]), parse_double(key, items[1])};
}

std::vector<int> parse_int_list(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  for (const auto& item : parse_array(key, raw)) out.push_back(parse_int(key, item));
  return out;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt_double(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s + "]";
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string& key, const std::string& raw)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Access>
Field dbl(std::string key, Access a) {
  return {std::move(key), [a](PipelineConfig& c, const std::string& k, const std::string& r) { a(c) = parse_double(k, r); },
          [a](const PipelineConfig& c) { return fmt_double(a(const_cast<PipelineConfig&>(c))); }};
}

template <typename Access>
Field integer(std::string key, Access a) {
  return {std::move(key), [a](PipelineConfig& c, const std::string& k, const std::string& r) { a(c) = parse_int(k, r); },
          [a](const PipelineConfig& c) { return std::to_string(a(const_cast<PipelineConfig&>(c))); }};
}

template <typename Access>
Field boolean(std::string key, Access a) {
  return {std::move(key), [a](PipelineConfig& c, const std::string& k, const std::string& r) { a(c) = parse_bool(k, r); },
          [a](const PipelineConfig& c) { return std::string(a(const_cast<PipelineConfig&>(c)) ? "true" : "false"); }};
}

template <typename Access>
Field interval(std::string key, Access a) {
  return {std::move(key), [a](PipelineConfig& c, const std::string& k, const std::string& r) { a(c) = parse_interval(k, r); },
          [a](const PipelineConfig& c) {
            const synth::Interval& iv = a(const_cast<PipelineConfig&>(c));
            return "[" + fmt_double(iv.lo) + ", " + fmt_double(iv.hi) + "]";
          }};
}

template <typename Access>
Field int_list(std::string key, Access a) {
  return {std::move(key), [a](PipelineConfig& c, const std::string& k, const std::string& r) { a(c) = parse_int_list(k, r); },
          [a](const PipelineConfig& c) { return fmt_list(a(const_cast<PipelineConfig&>(c))); }};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      {"seed", [](C& c, const std::string& k, const std::string& r) { c.seed = parse_u64(k, r); },
       [](const C& c) { return std::to_string(c.seed); }},

      dbl("synth.translation_range", [](C& c) -> double& { return c.synth.translation_range; }),
      dbl("synth.rotation_range", [](C& c) -> double& { return c.synth.rotation_range; }),
      interval("synth.scale_range", [](C& c) -> synth::Interval& { return c.synth.scale_range; }),
      dbl("synth.shear_range", [](C& c) -> double& { return c.synth.shear_range; }),
      integer("synth.deform_ctrl_points", [](C& c) -> int& { return c.synth.deform_ctrl_points; }),
      dbl("synth.deform_max_amp", [](C& c) -> double& { return c.synth.deform_max_amp; }),
      interval("synth.intensity_mean_range", [](C& c) -> synth::Interval& { return c.synth.intensity_mean_range; }),
      interval("synth.intensity_stddev_range", [](C& c) -> synth::Interval& { return c.synth.intensity_stddev_range; }),
      integer("synth.bias_ctrl_points", [](C& c) -> int& { return c.synth.bias_ctrl_points; }),
      dbl("synth.bias_max_log_amp", [](C& c) -> double& { return c.synth.bias_max_log_amp; }),
      interval("synth.gamma_log_range", [](C& c) -> synth::Interval& { return c.synth.gamma_log_range; }),
      dbl("synth.crop_max_fraction", [](C& c) -> double& { return c.synth.crop_max_fraction; }),
      int_list("synth.downsample_factors", [](C& c) -> std::vector<int>& { return c.synth.downsample_factors; }),
      interval("synth.blur_sigma_range", [](C& c) -> synth::Interval& { return c.synth.blur_sigma_range; }),
      dbl("synth.prob_bias", [](C& c) -> double& { return c.synth.prob_bias; }),
      dbl("synth.prob_gamma", [](C& c) -> double& { return c.synth.prob_gamma; }),
      dbl("synth.prob_crop", [](C& c) -> double& { return c.synth.prob_crop; }),
      dbl("synth.prob_downsample", [](C& c) -> double& { return c.synth.prob_downsample; }),
      dbl("synth.prob_blur", [](C& c) -> double& { return c.synth.prob_blur; }),

      integer("net.levels", [](C& c) -> int& { return c.net.levels; }),
      int_list("net.features", [](C& c) -> std::vector<int>& { return c.net.features; }),
      integer("net.convs_per_level", [](C& c) -> int& { return c.net.convs_per_level; }),
      integer("net.kernel", [](C& c) -> int& { return c.net.kernel; }),
      dbl("net.leaky_slope", [](C& c) -> double& { return c.net.leaky_slope; }),
      {"net.head", [](C& c, const std::string& k, const std::string& r) {
         try {
           c.net.head = nn::head_from_string(parse_string(k, r));
         } catch (const ParameterError& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       },
       [](const C& c) { return "\"" + std::string(nn::to_string(c.net.head)) + "\""; }},
      integer("net.input_size", [](C& c) -> int& { return c.net.input_size; }),

      {"loss.kind", [](C& c, const std::string& k, const std::string& r) {
         try {
           c.loss.kind = nn::loss_from_string(parse_string(k, r));
         } catch (const ParameterError& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       },
       [](const C& c) { return "\"" + std::string(nn::to_string(c.loss.kind)) + "\""; }},
      dbl("loss.b", [](C& c) -> double& { return c.loss.b; }),
      dbl("loss.h", [](C& c) -> double& { return c.loss.h; }),
      dbl("loss.cap", [](C& c) -> double& { return c.loss.cap; }),
      dbl("loss.dice_eps", [](C& c) -> double& { return c.loss.dice_eps; }),
      boolean("loss.usdt_zero_weight", [](C& c) -> bool& { return c.loss.usdt_zero_weight; }),

      dbl("train.lr", [](C& c) -> double& { return c.train.adam.lr; }),
      dbl("train.beta1", [](C& c) -> double& { return c.train.adam.beta1; }),
      dbl("train.beta2", [](C& c) -> double& { return c.train.adam.beta2; }),
      dbl("train.eps", [](C& c) -> double& { return c.train.adam.eps; }),
      integer("train.eval_every", [](C& c) -> int& { return c.train.eval_every; }),
      integer("train.patience", [](C& c) -> int& { return c.train.patience; }),
      dbl("train.min_delta", [](C& c) -> double& { return c.train.min_delta; }),
      integer("train.max_steps", [](C& c) -> int& { return c.train.max_steps; }),
      integer("train.closing_iters", [](C& c) -> int& { return c.train.closing_iters; }),

      integer("data.n_train", [](C& c) -> int& { return c.data.n_train; }),
      integer("data.n_val", [](C& c) -> int& { return c.data.n_val; }),
      integer("data.n_test", [](C& c) -> int& { return c.data.n_test; }),
  };
  return table;
}

// Flat dotted key -> raw value text.
std::map<std::string, std::string> tokenize(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
  }
  return kv;
}

PipelineConfig apply(std::map<std::string, std::string> kv, const std::string& prefix, PipelineConfig c) {
  for (const auto& f : fields()) {
    if (!prefix.empty() && f.key.rfind(prefix, 0) != 0) continue;
    auto it = kv.find(f.key);
    if (it == kv.end()) throw ConfigError("missing config key '" + f.key + "'");
    f.set(c, f.key, it->second);
    kv.erase(it);
  }
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
void wrap_validation(F&& f) {
  try {
    f();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

} // namespace

void PipelineConfig::validate() const {
  synth.validate();
  net.validate();
  loss.validate();
  train.validate();
  if (data.n_train < 1) throw ParameterError("data.n_train must be >= 1");
  if (data.n_val < 0) throw ParameterError("data.n_val must be >= 0");
  if (data.n_test < 1) throw ParameterError("data.n_test must be >= 1");
  if (net.input_size < 32) throw ParameterError("net.input_size must be >= 32 for phantom data");
  if ((loss.kind == nn::LossKind::dice) != (net.head == nn::HeadMode::softmax2)) {
    throw ParameterError("loss.kind and net.head do not match (dice needs softmax2, usdt/wsdt need sdt1)");
  }
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.net = nn::UNetConfig::with_doubling(3, 8, 32, nn::HeadMode::softmax2);
  c.synth = synth::SynthConfig::desk_scale();
  c.train.adam.lr = 3e-4;
  c.train.eval_every = 250;
  c.train.patience = 8;
  c.train.max_steps = 8000;
  return c;
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c = apply(tokenize(text), "", default_config());
  wrap_validation([&] { c.validate(); });
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

synth::SynthConfig load_synth_config(const std::filesystem::path& path) {
  auto kv = tokenize(read_text(path));
  bool only_synth = true;
  for (const auto& [k, v] : kv) only_synth = only_synth && k.rfind("synth.", 0) == 0;
  PipelineConfig c = only_synth ? apply(std::move(kv), "synth.", default_config()) : apply(std::move(kv), "", default_config());
  wrap_validation([&] { c.synth.validate(); });
  return c.synth;
}

std::string dump_config(const PipelineConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    auto dot = f.key.find('.');
    std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << name << " = " << f.get(c) << '\n';
  }
  return os.str();
}

} // namespace dstrip::cli
