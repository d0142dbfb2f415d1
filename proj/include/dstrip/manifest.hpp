#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dstrip::cli {

enum class Split { train, val, test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string subject;
  std::filesystem::path labels;
  std::filesystem::path image; // empty when absent
  Split split = Split::train;
};

/// CSV with header subject,labels,image,split. Relative paths are resolved
/// against the manifest directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> with_split(Split s) const;
};

/// Throws ConfigError on a malformed row, a duplicate subject id or a
/// referenced file that does not exist.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Paths are written relative to the manifest directory when possible.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

} // namespace dstrip::cli
