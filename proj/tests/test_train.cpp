#include <cmath>
#include <fstream>

#include "doctest.h"
#include "dstrip/config.hpp"
#include "dstrip/errors.hpp"
#include "dstrip/manifest.hpp"
#include "dstrip/nn/train.hpp"
#include "dstrip/synthgen.hpp"
#include "tempdir.hpp"

using namespace dstrip;
using namespace dstrip::nn;

namespace {

std::vector<LabelMap> phantoms(int n, std::uint64_t seed) {
  std::vector<LabelMap> maps;
  for (int i = 0; i < n; ++i) maps.push_back(synth::make_phantom_labelmap(derive_seed(seed, i), {32, 32, 32}));
  return maps;
}

TrainConfig quick(int steps) {
  TrainConfig tc;
  tc.adam.lr = 1e-4;
  tc.max_steps = steps;
  tc.eval_every = steps;
  tc.patience = 1000;
  return tc;
}

void touch(const std::filesystem::path& p) { std::ofstream(p) << "x"; }

} // namespace

TEST_SUITE("train") {

TEST_CASE("loss kinds") {
  CHECK(loss_from_string("wsdt") == LossKind::wsdt);
  CHECK(std::string(to_string(LossKind::usdt)) == "usdt");
  CHECK_THROWS_AS(loss_from_string("ce"), ParameterError);
  LossConfig lc;
  lc.kind = LossKind::usdt;
  CHECK(lc.effective_b() == 1.0);
  lc.usdt_zero_weight = true;
  CHECK(lc.effective_b() == 0.0);
  lc.kind = LossKind::wsdt;
  CHECK(lc.effective_b() == 1e-3);
  lc.b = 2.0;
  CHECK_THROWS_AS(lc.validate(), ParameterError);
}

TEST_CASE("dice training on one phantom lowers the loss") {
  auto maps = phantoms(1, 7);
  UNetConfig cfg = UNetConfig::with_doubling(3, 4, 32, HeadMode::softmax2);
  TrainResult r = train(cfg, maps, synth::SynthConfig{}, LossConfig{}, {}, 3, quick(500));
  const auto& h = r.history.train_loss;
  REQUIRE(h.size() == 500);
  for (double v : h) CHECK(std::isfinite(v));
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += h[i];
    last += h[h.size() - 1 - i];
  }
  CHECK(last < first);
  CHECK(h.back() < h.front());
}

TEST_CASE("same seed gives the same history") {
  auto maps = phantoms(2, 8);
  UNetConfig cfg = UNetConfig::with_doubling(2, 4, 32, HeadMode::sdt1);
  LossConfig lc;
  lc.kind = LossKind::wsdt;
  TrainConfig tc = quick(6);
  tc.eval_every = 3;
  auto a = train(cfg, maps, synth::SynthConfig{}, lc, maps, 5, tc);
  auto b = train(cfg, maps, synth::SynthConfig{}, lc, maps, 5, tc);
  CHECK(a.history.train_loss == b.history.train_loss);
  REQUIRE(a.history.validation.size() == 2);
  CHECK(a.history.validation[1].step == 6);
  CHECK(a.history.validation[1].loss == b.history.validation[1].loss);
  for (std::size_t t = 0; t < a.params.tensors.size(); ++t) CHECK(a.params.tensors[t].data == b.params.tensors[t].data);
  auto c = train(cfg, maps, synth::SynthConfig{}, lc, maps, 6, tc);
  CHECK(c.history.train_loss != a.history.train_loss);
}

TEST_CASE("plateau stops training and keeps the best parameters") {
  auto maps = phantoms(1, 9);
  UNetConfig cfg = UNetConfig::with_doubling(2, 4, 32, HeadMode::softmax2);
  TrainConfig tc = quick(50);
  tc.eval_every = 1;
  tc.patience = 2;
  tc.min_delta = 1e9;
  auto r = train(cfg, maps, synth::SynthConfig{}, LossConfig{}, maps, 1, tc);
  CHECK(r.history.plateaued);
  CHECK(r.history.train_loss.size() == 3);
  CHECK(r.history.best_step == 1);
  CHECK(r.history.best_val == r.history.validation[0].loss);
  double again = validation_loss(r.params, cfg, maps, synth::SynthConfig{}, LossConfig{}, 1);
  CHECK(again == doctest::Approx(r.history.best_val).epsilon(1e-12));
}

TEST_CASE("training errors") {
  auto maps = phantoms(1, 10);
  UNetConfig cfg = UNetConfig::with_doubling(2, 4, 32, HeadMode::softmax2);
  LossConfig wsdt;
  wsdt.kind = LossKind::wsdt;
  CHECK_THROWS_AS(train(cfg, maps, synth::SynthConfig{}, wsdt, {}, 1, quick(1)), ParameterError);
  CHECK_THROWS_AS(train(cfg, {}, synth::SynthConfig{}, LossConfig{}, {}, 1, quick(1)), ParameterError);
  std::vector<LabelMap> small{synth::make_phantom_labelmap(1, {32, 32, 34})};
  CHECK_THROWS_AS(train(cfg, small, synth::SynthConfig{}, LossConfig{}, {}, 1, quick(1)), ParameterError);
  TrainConfig bad = quick(1);
  bad.patience = 0;
  CHECK_THROWS_AS(train(cfg, maps, synth::SynthConfig{}, LossConfig{}, {}, 1, bad), ParameterError);

  UNetConfig sdt = UNetConfig::with_doubling(2, 4, 32, HeadMode::sdt1);
  TrainConfig wild = quick(20);
  wild.adam.lr = 1e30;
  CHECK_THROWS_AS(train(sdt, maps, synth::SynthConfig{}, wsdt, {}, 1, wild), TrainingError);
}

TEST_CASE("config dump and parse round trip") {
  cli::PipelineConfig c = cli::default_config();
  CHECK_NOTHROW(c.validate());
  CHECK(cli::parse_config(cli::dump_config(c)) == c);
  c.seed = 42;
  c.synth.rotation_range = 12.5;
  c.loss.kind = LossKind::wsdt;
  c.net.head = HeadMode::sdt1;
  c.train.adam.lr = 3e-4;
  c.data.n_test = 3;
  CHECK(cli::parse_config(cli::dump_config(c)) == c);
}

TEST_CASE("config errors name the key") {
  std::string text = cli::dump_config(cli::default_config());
  auto expect_error = [](const std::string& t, const std::string& key) {
    try {
      cli::parse_config(t);
      FAIL("no error for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  auto pos = text.find("\npatience = ");
  REQUIRE(pos != std::string::npos);
  std::string missing = text;
  missing.erase(pos + 1, missing.find('\n', pos + 1) - pos);
  expect_error(missing, "train.patience");
  expect_error(text + "\n[train]\nbogus = 1\n", "train.bogus");
  std::string wrong_type = text;
  wrong_type.replace(pos + 1, std::string("patience = 5").size(), "patience = \"five\"");
  expect_error(wrong_type, "train.patience");
  CHECK_THROWS_AS(cli::parse_config("[net\n"), ConfigError);
  CHECK_THROWS_AS(cli::load_config("/nonexistent/cfg.toml"), Error);
}

TEST_CASE("manifest round trip and errors") {
  TempDir dir;
  touch(dir / "a.nii");
  touch(dir / "b.nii");
  touch(dir / "b_img.nii");
  cli::DatasetManifest m;
  m.entries.push_back({"a", dir / "a.nii", {}, cli::Split::train});
  m.entries.push_back({"b", dir / "b.nii", dir / "b_img.nii", cli::Split::test});
  cli::write_manifest(m, dir / "manifest.csv");
  auto back = cli::read_manifest(dir / "manifest.csv");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].subject == "a");
  CHECK(std::filesystem::equivalent(back.entries[1].labels, dir / "b.nii"));
  CHECK(std::filesystem::equivalent(back.entries[1].image, dir / "b_img.nii"));
  CHECK(back.entries[0].image.empty());
  CHECK(back.with_split(cli::Split::test).size() == 1);
  CHECK(back.with_split(cli::Split::val).empty());

  auto write = [&](const std::string& body) { std::ofstream(dir / "bad.csv") << "subject,labels,image,split\n" << body; };
  write("a,a.nii,,train\na,b.nii,,val\n");
  CHECK_THROWS_AS(cli::read_manifest(dir / "bad.csv"), ConfigError);
  write("a,missing.nii,,train\n");
  CHECK_THROWS_AS(cli::read_manifest(dir / "bad.csv"), ConfigError);
  write("a,a.nii,,holdout\n");
  CHECK_THROWS_AS(cli::read_manifest(dir / "bad.csv"), ConfigError);
  write("a,a.nii\n");
  CHECK_THROWS_AS(cli::read_manifest(dir / "bad.csv"), ConfigError);
  CHECK(cli::split_from_string("val") == cli::Split::val);
}

} // TEST_SUITE
