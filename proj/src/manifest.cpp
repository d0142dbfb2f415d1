#include "dstrip/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dstrip/errors.hpp"

namespace dstrip::cli {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

} // namespace

const char* to_string(Split s) {
  switch (s) {
  case Split::train:
    return "train";
  case Split::val:
    return "val";
  case Split::test:
    return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

std::vector<ManifestEntry> DatasetManifest::with_split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"subject", "labels", "image", "split"}) {
    throw ConfigError("manifest " + path.string() + ": header must be subject,labels,image,split");
  }
  DatasetManifest m;
  std::set<std::string> ids;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != 4) throw ConfigError("manifest line " + std::to_string(lineno) + ": expected 4 columns");
    ManifestEntry e;
    e.subject = cells[0];
    if (e.subject.empty()) throw ConfigError("manifest line " + std::to_string(lineno) + ": empty subject id");
    if (!ids.insert(e.subject).second) throw ConfigError("manifest: duplicate subject '" + e.subject + "'");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    e.labels = resolve(cells[1]);
    if (!std::filesystem::exists(e.labels)) throw ConfigError("manifest: missing label file " + e.labels.string());
    if (!cells[2].empty()) {
      e.image = resolve(cells[2]);
      if (!std::filesystem::exists(e.image)) throw ConfigError("manifest: missing image file " + e.image.string());
    }
    e.split = split_from_string(cells[3]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    if (p.empty()) return std::string();
    auto r = p.lexically_relative(base.empty() ? std::filesystem::path(".") : base);
    return (r.empty() || *r.begin() == "..") ? p.string() : r.string();
  };
  os << "subject,labels,image,split\n";
  for (const auto& e : m.entries) {
    os << e.subject << ',' << rel(e.labels) << ',' << rel(e.image) << ',' << to_string(e.split) << '\n';
  }
  if (!os) throw Error("failed writing " + path.string());
}

} // namespace dstrip::cli
