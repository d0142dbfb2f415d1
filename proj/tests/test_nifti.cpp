#include <algorithm>
#include <cstring>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "dstrip/errors.hpp"
#include "dstrip/nifti.hpp"
#include "dstrip/rng.hpp"
#include "tempdir.hpp"

using namespace dstrip;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
T field(const std::vector<char>& bytes, std::size_t off) {
  T v;
  std::memcpy(&v, bytes.data() + off, sizeof(T));
  return v;
}

Volume random_volume(std::uint64_t seed) {
  Rng rng(seed);
  Volume v(Grid::make({8, 8, 8}, {1.0, 1.5, 2.0}, "LIA"));
  for (auto& x : v.data) x = static_cast<float>(rng.normal());
  return v;
}

LabelMap random_labels(std::int32_t max_id, std::uint64_t seed) {
  LabelSchema schema{{0, {"background", LabelCategory::background}},
                     {1, {"wm", LabelCategory::brain}},
                     {max_id, {"skull", LabelCategory::nonbrain_synthetic}}};
  LabelMap s(Grid::make({6, 5, 4}, {1, 1, 1}, "RAS"), schema);
  Rng rng(seed);
  for (auto& x : s.data) x = std::array<std::int32_t, 3>{0, 1, max_id}[rng.below(3)];
  return s;
}

} // namespace

TEST_SUITE("nifti") {

TEST_CASE("float volume round trip is bit exact") {
  TempDir dir;
  Volume v = random_volume(1);
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    write_nifti(v, dir / name);
    Volume r = read_volume(dir / name);
    CHECK(r.grid == v.grid);
    CHECK(r.grid.orientation() == "LIA");
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("uncompressed volume file has header plus payload") {
  TempDir dir;
  write_nifti(random_volume(2), dir / "v.nii");
  auto bytes = slurp(dir / "v.nii");
  CHECK(bytes.size() == 352u + 8u * 8u * 8u * 4u);
  CHECK(field<std::int32_t>(bytes, 0) == 348);
  CHECK(std::string(bytes.data() + 344, 3) == "n+1");
  CHECK(field<std::int16_t>(bytes, 70) == 16);
  CHECK(field<float>(bytes, 108) == 352.0f);
}

TEST_CASE("label maps round trip with their schema") {
  TempDir dir;
  LabelMap s = random_labels(200, 3);
  write_nifti(s, dir / "s.nii.gz");
  LabelMap r = read_labelmap(dir / "s.nii.gz");
  CHECK(r.grid == s.grid);
  CHECK(r.data == s.data);
  CHECK(r.schema == s.schema);
}

TEST_CASE("label datatype depends on the largest id") {
  TempDir dir;
  write_nifti(random_labels(255, 4), dir / "small.nii");
  write_nifti(random_labels(256, 5), dir / "large.nii");
  CHECK(field<std::int16_t>(slurp(dir / "small.nii"), 70) == 2);
  CHECK(field<std::int16_t>(slurp(dir / "large.nii"), 70) == 4);
  LabelMap r = read_labelmap(dir / "large.nii");
  CHECK(r.max_label() == 256);
  CHECK_THROWS_AS(write_nifti(random_labels(40000, 6), dir / "huge.nii"), UnsupportedError);
}

TEST_CASE("integer files without a schema use the fallback category") {
  TempDir dir;
  LabelMap s = random_labels(7, 6);
  write_nifti(s, dir / "s.nii");
  Volume asv = read_volume(dir / "s.nii");
  write_nifti(asv, dir / "f.nii");
  CHECK_THROWS_AS(read_labelmap(dir / "f.nii"), UnsupportedError);
  // Strip the extension flag so the embedded schema is ignored.
  auto bytes = slurp(dir / "s.nii");
  bytes[348] = 0;
  spit(dir / "plain.nii", bytes);
  LabelMap r = read_labelmap(dir / "plain.nii", LabelCategory::brain);
  CHECK(r.data == s.data);
  CHECK(r.schema.at(0).category == LabelCategory::background);
  CHECK(r.schema.at(7).category == LabelCategory::brain);
}

TEST_CASE("malformed files are rejected") {
  TempDir dir;
  write_nifti(random_volume(7), dir / "v.nii");
  auto good = slurp(dir / "v.nii");

  auto bad_magic = good;
  bad_magic[344] = 'x';
  spit(dir / "magic.nii", bad_magic);
  CHECK_THROWS_AS(read_volume(dir / "magic.nii"), FormatError);

  auto truncated = good;
  truncated.resize(good.size() - 10);
  spit(dir / "trunc.nii", truncated);
  CHECK_THROWS_AS(read_volume(dir / "trunc.nii"), FormatError);

  spit(dir / "short.nii", std::vector<char>(good.begin(), good.begin() + 100));
  CHECK_THROWS_AS(read_volume(dir / "short.nii"), FormatError);

  auto bad_type = good;
  std::int16_t dt = 64;
  std::memcpy(bad_type.data() + 70, &dt, 2);
  spit(dir / "type.nii", bad_type);
  CHECK_THROWS_AS(read_volume(dir / "type.nii"), UnsupportedError);

  auto five_d = good;
  std::int16_t nd = 5;
  std::memcpy(five_d.data() + 40, &nd, 2);
  spit(dir / "5d.nii", five_d);
  CHECK_THROWS_AS(read_volume(dir / "5d.nii"), UnsupportedError);

  spit(dir / "junk.nii.gz", std::vector<char>{'\x1f', '\x8b', 'j', 'u', 'n', 'k'});
  CHECK_THROWS_AS(read_volume(dir / "junk.nii.gz"), FormatError);

  CHECK_THROWS_AS(read_volume(dir / "missing.nii"), Error);
}

TEST_CASE("scaling slope is applied on read") {
  TempDir dir;
  Volume v = random_volume(8);
  write_nifti(v, dir / "v.nii");
  auto bytes = slurp(dir / "v.nii");
  float slope = 2.0f, inter = 1.0f;
  std::memcpy(bytes.data() + 112, &slope, 4);
  std::memcpy(bytes.data() + 116, &inter, 4);
  spit(dir / "scaled.nii", bytes);
  Volume r = read_volume(dir / "scaled.nii");
  for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(r.data[i] == doctest::Approx(2.0 * v.data[i] + 1.0));
}

TEST_CASE("big-endian files are byte swapped") {
  TempDir dir;
  Volume v = random_volume(9);
  write_nifti(v, dir / "v.nii");
  auto bytes = slurp(dir / "v.nii");
  auto swap = [&](std::size_t off, std::size_t width) { std::reverse(bytes.begin() + off, bytes.begin() + off + width); };
  swap(0, 4);
  for (std::size_t off = 40; off < 56; off += 2) swap(off, 2);
  swap(70, 2);
  swap(72, 2);
  for (std::size_t off = 76; off < 108; off += 4) swap(off, 4);
  swap(108, 4);
  swap(112, 4);
  swap(116, 4);
  swap(252, 2);
  swap(254, 2);
  for (std::size_t off = 256; off < 344; off += 4) swap(off, 4);
  for (std::size_t off = 352; off < bytes.size(); off += 4) swap(off, 4);
  spit(dir / "be.nii", bytes);
  Volume r = read_volume(dir / "be.nii");
  CHECK(r.grid == v.grid);
  CHECK(r.data == v.data);
}

} // TEST_SUITE
