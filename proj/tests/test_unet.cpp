#include <cmath>
#include <fstream>

#include "doctest.h"
#include "dstrip/errors.hpp"
#include "dstrip/losses.hpp"
#include "dstrip/nn/model_io.hpp"
#include "dstrip/nn/unet.hpp"
#include "dstrip/rng.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace dstrip;
using namespace dstrip::nn;

namespace {

FeatureGrid<double> random_input(Rng& rng, int n) {
  FeatureGrid<double> x(1, {n, n, n});
  for (auto& v : x.data) v = rng.uniform();
  return x;
}

BinaryMask centered_box(int n, int lo, int hi) {
  BinaryMask m(Grid::cube(n, 1.0));
  for (int k = lo; k < hi; ++k)
    for (int j = lo; j < hi; ++j)
      for (int i = lo; i < hi; ++i) m.set(i, j, k);
  return m;
}

double scalar_loss(const ModelParams<double>& p, const UNetConfig& cfg, const FeatureGrid<double>& x,
                   const FeatureGrid<double>& target) {
  auto out = unet_forward(p, cfg, x).output;
  if (cfg.head == HeadMode::softmax2) return loss::dice_loss(target, out).value;
  return loss::wsdt_loss(target, out, 1e-3, 4.0).value;
}

double max_gradient_error(const UNetConfig& cfg, std::uint64_t seed, int probes_per_tensor) {
  Rng rng(seed);
  auto p = init_params<double>(cfg, seed);
  for (auto& t : p.tensors) {
    if (t.shape.size() == 1)
      for (auto& v : t.data) v = 0.1 * rng.normal();
    if (t.name == "head.weight")
      for (auto& v : t.data) v = 0.1 * rng.normal();
  }
  auto x = random_input(rng, cfg.input_size);
  BinaryMask m = centered_box(cfg.input_size, 4, 12);
  auto target = cfg.head == HeadMode::softmax2 ? loss::one_hot_target<double>(m) : loss::sdt_target<double>(m, 20.0);
  auto fwd = unet_forward(p, cfg, x);
  auto l = cfg.head == HeadMode::softmax2 ? loss::dice_loss(target, fwd.output) : loss::wsdt_loss(target, fwd.output, 1e-3, 4.0);
  auto g = unet_backward(p, cfg, fwd.cache, l.grad);
  auto loss_at = [&] { return scalar_loss(p, cfg, x, target); };
  double worst = 0;
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    for (int r = 0, tries = 0; r < probes_per_tensor; ++tries) {
      std::size_t i = rng.below(p.tensors[t].data.size());
      auto fd = oracle::central_difference(loss_at, p.tensors[t].data[i]);
      if (fd.kink && tries < 200) continue;
      double an = g.tensors[t].data[i];
      worst = std::max(worst, std::abs(fd.value - an) / std::max({1e-8, std::abs(fd.value), std::abs(an)}));
      ++r;
    }
  }
  return worst;
}

} // namespace

TEST_SUITE("unet") {

TEST_CASE("configuration validation") {
  CHECK_NOTHROW(UNetConfig{}.validate());
  UNetConfig c = UNetConfig::with_doubling(3, 4, 32, HeadMode::sdt1);
  CHECK(c.features == std::vector<int>{4, 8, 16});
  CHECK(c.output_channels() == 1);
  c.input_size = 30;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = UNetConfig{};
  c.features = {8, 16};
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = UNetConfig{};
  c.levels = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = UNetConfig{};
  c.kernel = 5;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK(head_from_string("sdt1") == HeadMode::sdt1);
  CHECK_THROWS_AS(head_from_string("sigmoid"), ParameterError);
}

TEST_CASE("parameter layout") {
  UNetConfig c = UNetConfig::with_doubling(2, 4, 16, HeadMode::softmax2);
  auto layout = parameter_layout(c);
  auto p = init_params<float>(c, 1);
  REQUIRE(layout.size() == p.tensors.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    CHECK(layout[i].first == p.tensors[i].name);
    CHECK(layout[i].second == p.tensors[i].shape);
    total += p.tensors[i].data.size();
  }
  CHECK(p.size() == total);
  // enc0: 2 convs (1->4, 4->4), enc1: (4->8, 8->8), dec0: (12->4, 4->4), head 4->2
  std::size_t expect = (1 * 4 + 4 * 4 + 4 * 8 + 8 * 8 + 12 * 4 + 4 * 4 + 4 * 2) * 27 + (4 + 4 + 8 + 8 + 4 + 4 + 2);
  CHECK(total == expect);
  CHECK(init_params<float>(c, 1).tensors[0].data == p.tensors[0].data);
  CHECK(init_params<float>(c, 2).tensors[0].data != p.tensors[0].data);
}

TEST_CASE("forward output shapes and ranges") {
  Rng rng(3);
  UNetConfig c = UNetConfig::with_doubling(3, 4, 16, HeadMode::softmax2);
  auto p = init_params<double>(c, 3);
  auto out = unet_forward(p, c, random_input(rng, 16)).output;
  CHECK(out.channels == 2);
  for (std::size_t v = 0; v < out.plane(); ++v) {
    CHECK(out.data[v] >= 0.0);
    CHECK(out.data[v] + out.data[out.plane() + v] == doctest::Approx(1.0));
  }
  auto zero = unet_forward(zero_params<double>(c), c, random_input(rng, 16)).output;
  for (double v : zero.data) CHECK(v == 0.5);
  CHECK_THROWS_AS(unet_forward(p, c, random_input(rng, 8)), ParameterError);
  UNetConfig other = UNetConfig::with_doubling(2, 4, 16, HeadMode::softmax2);
  CHECK_THROWS_AS(unet_forward(p, other, random_input(rng, 16)), ParameterError);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  UNetConfig dice = UNetConfig::with_doubling(2, 4, 16, HeadMode::softmax2);
  UNetConfig sdt = UNetConfig::with_doubling(2, 4, 16, HeadMode::sdt1);
  CHECK(max_gradient_error(dice, 21, 2) < 1e-4);
  CHECK(max_gradient_error(sdt, 22, 2) < 1e-4);
}

TEST_CASE("float and double forward agree") {
  Rng rng(4);
  UNetConfig c = UNetConfig::with_doubling(2, 4, 16, HeadMode::sdt1);
  auto pd = init_params<double>(c, 4);
  auto pf = pd.cast<float>();
  auto xd = random_input(rng, 16);
  FeatureGrid<float> xf(1, {16, 16, 16});
  for (std::size_t i = 0; i < xd.data.size(); ++i) xf.data[i] = static_cast<float>(xd.data[i]);
  auto od = unet_forward(pd, c, xd).output;
  auto of = unet_forward(pf, c, xf).output;
  for (std::size_t i = 0; i < od.data.size(); ++i) CHECK(std::abs(od.data[i] - of.data[i]) < 1e-4);
}

TEST_CASE("predict_mask and apply_mask") {
  UNetConfig c = UNetConfig::with_doubling(2, 4, 16, HeadMode::sdt1);
  auto p = zero_params<float>(c);
  p.get("head.bias").data[0] = -1.0f;
  Volume x(Grid::cube(16, 1.0), 0.3f);
  BinaryMask m = predict_mask(p, c, x);
  CHECK(m.full());
  CHECK(m.grid == x.grid);
  p.get("head.bias").data[0] = 1.0f;
  CHECK(predict_mask(p, c, x).empty());
  BinaryMask half(x.grid);
  for (std::size_t i = 0; i < half.data.size(); i += 2) half.data[i] = 1;
  Volume s = apply_mask(x, half);
  for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(s.data[i] == (i % 2 == 0 ? 0.3f : 0.0f));
}

TEST_CASE("model files round trip") {
  TempDir dir;
  UNetConfig c = UNetConfig::with_doubling(2, 4, 16, HeadMode::softmax2);
  auto p = init_params<float>(c, 5);
  save_model(dir / "m.bin", c, p);
  ModelFile f = load_model(dir / "m.bin");
  CHECK(f.config == c);
  REQUIRE(f.params.tensors.size() == p.tensors.size());
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    CHECK(f.params.tensors[t].name == p.tensors[t].name);
    CHECK(f.params.tensors[t].data == p.tensors[t].data);
  }
  CHECK_NOTHROW(load_model(dir / "m.bin", c));
  UNetConfig other = c;
  other.leaky_slope = 0.1;
  CHECK_THROWS_AS(load_model(dir / "m.bin", other), ParameterError);
}

TEST_CASE("corrupt model files are rejected") {
  TempDir dir;
  UNetConfig c = UNetConfig::with_doubling(2, 4, 16, HeadMode::softmax2);
  save_model(dir / "m.bin", c, init_params<float>(c, 6));
  std::ifstream in(dir / "m.bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto bad = bytes;
  bad[0] = 'X';
  write("magic.bin", bad);
  CHECK_THROWS_AS(load_model(dir / "magic.bin"), FormatError);
  write("short.bin", std::vector<char>(bytes.begin(), bytes.end() - 7));
  CHECK_THROWS_AS(load_model(dir / "short.bin"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  write("extra.bin", extra);
  CHECK_THROWS_AS(load_model(dir / "extra.bin"), FormatError);
  auto version = bytes;
  version[8] = 99;
  write("version.bin", version);
  CHECK_THROWS_AS(load_model(dir / "version.bin"), FormatError);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), Error);
}

} // TEST_SUITE
