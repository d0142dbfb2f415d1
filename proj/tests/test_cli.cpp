#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "dstrip/commands.hpp"
#include "dstrip/config.hpp"
#include "dstrip/manifest.hpp"
#include "dstrip/maskops.hpp"
#include "dstrip/nifti.hpp"
#include "tempdir.hpp"

using namespace dstrip;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dstrip");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_subcommand(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small, fast pipeline settings.
cli::PipelineConfig tiny_config() {
  cli::PipelineConfig c = cli::default_config();
  c.net = nn::UNetConfig::with_doubling(2, 4, 32, nn::HeadMode::softmax2);
  c.train.max_steps = 3;
  c.train.eval_every = 2;
  c.data = {2, 1, 2};
  return c;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("phantom writes label maps and a manifest") {
  TempDir dir;
  Run r = run({"phantom", "--seed", "1", "--dims", "32", "--count", "5", "--val", "1", "--test", "1", "--out",
               (dir / "a").string()});
  REQUIRE(r.code == cli::kExitOk);
  auto m = cli::read_manifest(dir / "a" / "manifest.csv");
  REQUIRE(m.entries.size() == 5);
  CHECK(m.with_split(cli::Split::train).size() == 3);
  CHECK(m.with_split(cli::Split::val).size() == 1);
  CHECK(m.with_split(cli::Split::test).size() == 1);
  LabelMap first = read_labelmap(m.entries[0].labels);
  CHECK(first.grid.dims() == Index3{32, 32, 32});

  REQUIRE(run({"phantom", "--seed", "1", "--dims", "32", "--count", "5", "--val", "1", "--test", "1", "--out",
               (dir / "b").string()}).code == 0);
  for (const auto& e : m.entries) {
    fs::path other = dir / "b" / e.labels.filename();
    CHECK(bytes(e.labels) == bytes(other));
  }
  CHECK(run({"phantom", "--count", "2", "--val", "2", "--test", "1", "--out", (dir / "c").string()}).code ==
        cli::kExitFailure);
}

TEST_CASE("mask, sdt, synth and labelprep subcommands") {
  TempDir dir;
  REQUIRE(run({"phantom", "--seed", "3", "--count", "1", "--out", dir.path().string()}).code == 0);
  fs::path labels = dir / "phantom_000.nii.gz";
  REQUIRE(fs::exists(labels));

  REQUIRE(run({"mask", "--labels", labels.string(), "--out", (dir / "m.nii.gz").string()}).code == 0);
  BinaryMask m = mask::read_mask(dir / "m.nii.gz");
  CHECK(m == mask::derive_target_mask(read_labelmap(labels)));

  REQUIRE(run({"sdt", "--mask", (dir / "m.nii.gz").string(), "--out", (dir / "d.nii.gz").string()}).code == 0);
  Volume d = read_volume(dir / "d.nii.gz");
  Volume ref = mask::sdt(m);
  REQUIRE(d.data.size() == ref.data.size());
  for (std::size_t i = 0; i < d.data.size(); ++i) CHECK(d.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-6));

  auto synth = [&](const std::string& tag) {
    return run({"synth", "--labels", labels.string(), "--seed", "9", "--out-image", (dir / (tag + "_i.nii.gz")).string(),
                "--out-labels", (dir / (tag + "_l.nii.gz")).string(), "--out-mask", (dir / (tag + "_m.nii.gz")).string()});
  };
  REQUIRE(synth("s1").code == 0);
  REQUIRE(synth("s2").code == 0);
  CHECK(bytes(dir / "s1_i.nii.gz") == bytes(dir / "s2_i.nii.gz"));
  CHECK(bytes(dir / "s1_m.nii.gz") == bytes(dir / "s2_m.nii.gz"));

  Run lp = run({"labelprep", "--image", (dir / "s1_i.nii.gz").string(), "--brain-labels", (dir / "s1_l.nii.gz").string(),
                "--k", "3", "--out", (dir / "fused.nii.gz").string()});
  CHECK(lp.code == 0);
  CHECK(fs::exists(dir / "fused.nii.gz"));
}

TEST_CASE("train, strip and eval subcommands") {
  TempDir dir;
  REQUIRE(run({"phantom", "--seed", "4", "--count", "3", "--val", "1", "--out", (dir / "maps").string()}).code == 0);
  cli::PipelineConfig c = tiny_config();
  std::ofstream(dir / "c.toml") << cli::dump_config(c);
  Run tr = run({"train", "--labels", (dir / "maps").string(), "--config", (dir / "c.toml").string(), "--out",
                (dir / "model.bin").string(), "--history", (dir / "h.json").string()});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(fs::exists(dir / "h.json"));

  REQUIRE(run({"synth", "--labels", (dir / "maps" / "phantom_002.nii.gz").string(), "--out-image",
               (dir / "x.nii.gz").string(), "--out-labels", (dir / "xl.nii.gz").string()}).code == 0);
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  REQUIRE(run({"mask", "--labels", (dir / "xl.nii.gz").string(), "--out", (dir / "gt" / "s.nii.gz").string()}).code == 0);
  Run st = run({"strip", "--model", (dir / "model.bin").string(), "--image", (dir / "x.nii.gz").string(), "--out-mask",
                (dir / "pred" / "s.nii.gz").string(), "--out-stripped", (dir / "xs.nii.gz").string()});
  REQUIRE_MESSAGE(st.code == 0, st.err);
  CHECK(fs::exists(dir / "xs.nii.gz"));

  Run ev = run({"eval", "--gt", (dir / "gt").string(), "--pred", (dir / "pred").string(), "--out",
                (dir / "r.csv").string()});
  CHECK_MESSAGE(ev.code == 0, ev.err);
  CHECK(bytes(dir / "r.csv").rfind("subject,dice,hd_mm,hd95_mm,gt_vol_mm3,pred_vol_mm3\n", 0) == 0);
  CHECK(fs::exists(dir / "r.json"));

  CHECK(run({"train", "--labels", (dir / "maps").string(), "--config", (dir / "c.toml").string(), "--loss", "wsdt",
             "--out", (dir / "w.bin").string()}).code == 0);
  CHECK(run({"train", "--labels", (dir / "maps").string(), "--loss", "ce", "--out", (dir / "w.bin").string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("pipeline runs are byte-identical") {
  TempDir dir;
  std::ofstream(dir / "c.toml") << cli::dump_config(tiny_config());
  Run a = run({"pipeline", "--config", (dir / "c.toml").string(), "--out", (dir / "a").string()});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  Run b = run({"pipeline", "--config", (dir / "c.toml").string(), "--out", (dir / "b").string()});
  REQUIRE(b.code == 0);
  for (const char* f : {"model.bin", "report.csv", "report.json", "history.json", "manifest.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
    CHECK_MESSAGE(bytes(dir / "a" / f) == bytes(dir / "b" / f), f);
  }
  CHECK(a.out == b.out);
}

TEST_CASE("config subcommand") {
  TempDir dir;
  Run d = run({"config", "--dump-defaults"});
  REQUIRE(d.code == 0);
  CHECK(cli::parse_config(d.out) == cli::default_config());
  std::ofstream(dir / "ok.toml") << d.out;
  CHECK(run({"config", "--check", (dir / "ok.toml").string()}).code == 0);
  std::string text = d.out;
  auto pos = text.find("\nlr = ");
  REQUIRE(pos != std::string::npos);
  text.erase(pos + 1, text.find('\n', pos + 1) - pos);
  std::ofstream(dir / "bad.toml") << text;
  Run bad = run({"config", "--check", (dir / "bad.toml").string()});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.err.find("train.lr") != std::string::npos);
}

TEST_CASE("usage errors and help") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"phantom", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"phantom"}).code == cli::kExitUsage);
  CHECK(run({"mask", "--labels", "/nonexistent.nii", "--out", "x.nii"}).code == cli::kExitUsage);
  const std::vector<std::pair<std::string, std::vector<std::string>>> flags{
      {"phantom", {"--seed", "--dims", "--count", "--val", "--test", "--out"}},
      {"labelprep", {"--image", "--brain-labels", "--k", "--degree", "--seed", "--out"}},
      {"synth", {"--labels", "--config", "--seed", "--out-image", "--out-labels", "--out-mask"}},
      {"mask", {"--labels", "--closing", "--out"}},
      {"sdt", {"--mask", "--out"}},
      {"train", {"--labels", "--config", "--loss", "--seed", "--out", "--history"}},
      {"strip", {"--model", "--image", "--out-mask", "--out-stripped"}},
      {"eval", {"--gt", "--pred", "--out"}},
      {"pipeline", {"--config", "--out", "--seed"}},
      {"config", {"--dump-defaults", "--check"}},
  };
  for (const auto& [sub, names] : flags) {
    Run h = run({sub, "--help"});
    CHECK_MESSAGE(h.code == 0, sub);
    for (const auto& n : names) CHECK_MESSAGE(h.out.find(n) != std::string::npos, sub << " " << n);
  }
}

TEST_CASE("installed binary exit codes") {
  const std::string bin = DSTRIP_CLI_PATH;
  REQUIRE(fs::exists(bin));
  auto status = [&](const std::string& args) {
    int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  CHECK(status("--help") == 0);
  CHECK(status("nope") == 2);
  CHECK(status("config --check /nonexistent.toml") == 2);
  TempDir dir;
  std::ofstream(dir / "junk.nii") << "not a nifti file";
  CHECK(status("mask --labels " + (dir / "junk.nii").string() + " --out " + (dir / "m.nii").string()) == 1);
}

} // TEST_SUITE
