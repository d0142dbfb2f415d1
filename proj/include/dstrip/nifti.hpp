#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "dstrip/volgrid.hpp"

namespace dstrip {

/// NIfTI-1 datatype codes handled by the reader and writer.
enum class NiftiDatatype : std::int16_t { uint8 = 2, int16 = 4, float32 = 16 };

/// How integer payloads are returned by read_nifti.
enum class NiftiLoad { as_volume, as_labels };

/// Reads a single-file NIfTI-1 image (`.nii` or `.nii.gz`).
///
/// Geometry comes from the sform when its code is nonzero, then the qform,
/// then the bare pixdim values. A label schema embedded by write_nifti is
/// restored; integer files without one get 0 = background and every other id
/// assigned `fallback`.
std::variant<Volume, LabelMap> read_nifti(const std::filesystem::path& path, NiftiLoad load = NiftiLoad::as_volume,
                                          LabelCategory fallback = LabelCategory::nonbrain_synthetic);

Volume read_volume(const std::filesystem::path& path);
LabelMap read_labelmap(const std::filesystem::path& path, LabelCategory fallback = LabelCategory::nonbrain_synthetic);

/// Float32 payload, geometry in the sform. Gzip-compressed when the path ends in `.gz`.
void write_nifti(const Volume& v, const std::filesystem::path& path);

/// uint8 payload when every label fits, int16 otherwise. The schema is stored
/// as a comment extension so it survives the round trip.
void write_nifti(const LabelMap& s, const std::filesystem::path& path);

} // namespace dstrip
