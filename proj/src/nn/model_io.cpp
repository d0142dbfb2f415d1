#include "dstrip/nn/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dstrip/errors.hpp"

namespace dstrip::nn {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'T', 'R', 'I', 'P', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "model files are written in host byte order");

class Writer {
public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_floats(const std::vector<float>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  const std::string& bytes() const { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> get_floats(std::size_t n) {
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError("model file is truncated");
    }
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

template <typename T>
void check_field(const char* name, const T& got, const T& want) {
  if (!(got == want)) {
    std::ostringstream msg;
    msg << "model config mismatch in field '" << name << "'";
    if constexpr (requires(std::ostream& os) { os << got; }) {
      msg << ": file has " << got << ", expected " << want;
    }
    throw ParameterError(msg.str());
  }
}

} // namespace

void save_model(const std::filesystem::path& path, const UNetConfig& cfg, const ModelParams<float>& params) {
  cfg.validate();
  Writer w;
  for (char c : kMagic) {
    w.put<char>(c);
  }
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.levels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.features.size()));
  for (int f : cfg.features) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.convs_per_level));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.kernel));
  w.put<double>(cfg.leaky_slope);
  w.put<std::uint32_t>(cfg.head == HeadMode::softmax2 ? 0u : 1u);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.input_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.put_string(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.put_floats(t.data);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) {
    throw Error("failed writing model '" + path.string() + "'");
  }
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open model '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  for (char c : kMagic) {
    if (r.get<char>() != c) {
      throw FormatError("'" + path.string() + "' is not a model file (bad magic)");
    }
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  ModelFile mf;
  UNetConfig& cfg = mf.config;
  cfg.levels = static_cast<int>(r.get<std::uint32_t>());
  const auto nf = r.get<std::uint32_t>();
  if (nf > 64) {
    throw FormatError("model file lists an implausible number of levels");
  }
  cfg.features.resize(nf);
  for (auto& f : cfg.features) {
    f = static_cast<int>(r.get<std::uint32_t>());
  }
  cfg.convs_per_level = static_cast<int>(r.get<std::uint32_t>());
  cfg.kernel = static_cast<int>(r.get<std::uint32_t>());
  cfg.leaky_slope = r.get<double>();
  const auto head = r.get<std::uint32_t>();
  if (head > 1) {
    throw FormatError("model file has an unknown head mode");
  }
  cfg.head = head == 0 ? HeadMode::softmax2 : HeadMode::sdt1;
  cfg.input_size = static_cast<int>(r.get<std::uint32_t>());
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("model file holds an invalid configuration: ") + e.what());
  }

  const auto layout = parameter_layout(cfg);
  const auto count = r.get<std::uint32_t>();
  if (count != layout.size()) {
    throw FormatError("model file tensor count does not match its configuration");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor<float> t;
    t.name = r.get_string();
    const auto ndims = r.get<std::uint32_t>();
    if (ndims > 8) {
      throw FormatError("model file tensor has too many dimensions");
    }
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    if (t.name != layout[i].first || t.shape != layout[i].second) {
      throw FormatError("model file tensor '" + t.name + "' does not match its configuration");
    }
    t.data = r.get_floats(n);
    mf.params.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) {
    throw FormatError("model file has trailing bytes");
  }
  return mf;
}

ModelFile load_model(const std::filesystem::path& path, const UNetConfig& expected) {
  ModelFile mf = load_model(path);
  check_field("levels", mf.config.levels, expected.levels);
  check_field("features_per_level", mf.config.features, expected.features);
  check_field("convs_per_level", mf.config.convs_per_level, expected.convs_per_level);
  check_field("kernel", mf.config.kernel, expected.kernel);
  check_field("leaky_slope", mf.config.leaky_slope, expected.leaky_slope);
  check_field("head", std::string(to_string(mf.config.head)), std::string(to_string(expected.head)));
  check_field("input_size", mf.config.input_size, expected.input_size);
  return mf;
}

} // namespace dstrip::nn
