#include "dstrip/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "dstrip/errors.hpp"

namespace dstrip {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::int32_t kCommentCode = 6;
constexpr const char* kSchemaTag = "dstrip-label-schema:";

static_assert(std::endian::native == std::endian::little, "the NIfTI writer assumes a little-endian host");

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) {
    throw Error("cannot open '" + path.string() + "'");
  }
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof(buf));
    if (n < 0) {
      gzclose(f);
      throw FormatError("corrupt compressed stream in '" + path.string() + "'");
    }
    if (n == 0) {
      break;
    }
    bytes.insert(bytes.end(), buf, buf + n);
  }
  gzclose(f);
  return bytes;
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (ends_with(path.string(), ".gz")) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (f == nullptr) {
      throw Error("cannot write '" + path.string() + "'");
    }
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    if (gzclose(f) != Z_OK || n != static_cast<int>(bytes.size())) {
      throw Error("failed writing '" + path.string() + "'");
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error("failed writing '" + path.string() + "'");
  }
}

/// Byte-order aware view over a raw header.
class HeaderReader {
public:
  HeaderReader(const std::uint8_t* base, bool swap) : base_(base), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T value;
    std::memcpy(&value, base_ + offset, sizeof(T));
    if (swap_) {
      value = byteswap(value);
    }
    return value;
  }

  template <typename T>
  static T byteswap(T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

private:
  const std::uint8_t* base_;
  bool swap_;
};

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

Eigen::Matrix4d qform_affine(const HeaderReader& h) {
  const double b = h.get<float>(256);
  const double c = h.get<float>(260);
  const double d = h.get<float>(264);
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  double qfac = h.get<float>(76);
  qfac = qfac < 0.0 ? -1.0 : 1.0;
  Eigen::Matrix3d r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  const Eigen::Vector3d spacing(h.get<float>(80), h.get<float>(84), qfac * h.get<float>(88));
  Eigen::Matrix4d aff = Eigen::Matrix4d::Identity();
  aff.block<3, 3>(0, 0) = r * spacing.asDiagonal();
  aff(0, 3) = h.get<float>(268);
  aff(1, 3) = h.get<float>(272);
  aff(2, 3) = h.get<float>(276);
  return aff;
}

LabelSchema parse_schema(const std::string& text) {
  LabelSchema schema;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& entry : j.at("labels")) {
      schema[entry.at("id").get<std::int32_t>()] =
          LabelInfo{entry.at("name").get<std::string>(), category_from_string(entry.at("category").get<std::string>())};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed embedded label schema: ") + e.what());
  }
  return schema;
}

std::string serialize_schema(const LabelSchema& schema) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& [id, info] : schema) {
    labels.push_back({{"id", id}, {"name", info.name}, {"category", to_string(info.category)}});
  }
  return nlohmann::json{{"labels", labels}}.dump();
}

struct RawImage {
  Grid grid;
  std::int16_t datatype = 0;
  std::vector<double> values;
  bool has_schema = false;
  LabelSchema schema;
};

RawImage decode(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_all(path);
  if (bytes.size() < kHeaderSize) {
    throw FormatError("'" + path.string() + "' is too short for a NIfTI-1 header");
  }
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    if (HeaderReader::byteswap(sizeof_hdr) != 348) {
      throw FormatError("'" + path.string() + "' has an invalid sizeof_hdr");
    }
    swap = true;
  }
  const std::string magic(reinterpret_cast<const char*>(bytes.data() + 344), 3);
  if (magic != "n+1" && magic != "ni1") {
    throw FormatError("'" + path.string() + "' has bad NIfTI magic");
  }
  const HeaderReader h(bytes.data(), swap);

  const int ndim = h.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) {
    throw FormatError("'" + path.string() + "' has invalid dim[0]");
  }
  if (ndim > 4) {
    throw UnsupportedError("'" + path.string() + "' has more than four dimensions");
  }
  Index3 dims{1, 1, 1};
  for (int a = 0; a < std::min(ndim, 3); ++a) {
    dims[a] = h.get<std::int16_t>(42 + 2 * a);
    if (dims[a] < 1) {
      throw FormatError("'" + path.string() + "' has a nonpositive dimension");
    }
  }
  if (ndim == 4 && h.get<std::int16_t>(48) != 1) {
    throw UnsupportedError("'" + path.string() + "' has a non-singleton fourth dimension");
  }

  RawImage img;
  img.datatype = h.get<std::int16_t>(70);
  std::size_t bytes_per_voxel = 0;
  switch (img.datatype) {
  case 2: bytes_per_voxel = 1; break;
  case 4: bytes_per_voxel = 2; break;
  case 16: bytes_per_voxel = 4; break;
  default:
    throw UnsupportedError("'" + path.string() + "' uses unsupported datatype " + std::to_string(img.datatype));
  }

  Eigen::Matrix4d aff = Eigen::Matrix4d::Identity();
  if (h.get<std::int16_t>(254) > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        aff(r, c) = h.get<float>(280 + 16 * r + 4 * c);
      }
    }
  } else if (h.get<std::int16_t>(252) > 0) {
    aff = qform_affine(h);
  } else {
    for (int a = 0; a < 3; ++a) {
      const double p = h.get<float>(80 + 4 * a);
      aff(a, a) = p > 0.0 ? p : 1.0;
    }
  }
  img.grid = Grid::from_affine(dims, aff);

  const std::vector<std::uint8_t>* payload = &bytes;
  std::vector<std::uint8_t> pair_payload;
  std::size_t offset = 0;
  if (magic == "n+1") {
    const double vox_offset = h.get<float>(108);
    offset = static_cast<std::size_t>(vox_offset);
    if (vox_offset < static_cast<double>(kHeaderSize) || offset > bytes.size()) {
      throw FormatError("'" + path.string() + "' has an invalid vox_offset");
    }
    // Extensions live between the header and the voxel data.
    if (offset >= kHeaderSize + 4 && bytes[kHeaderSize] != 0) {
      std::size_t pos = kHeaderSize + 4;
      while (pos + 8 <= offset) {
        const std::int32_t esize = h.get<std::int32_t>(pos);
        const std::int32_t ecode = h.get<std::int32_t>(pos + 4);
        if (esize < 8 || pos + static_cast<std::size_t>(esize) > offset) {
          break;
        }
        if (ecode == kCommentCode) {
          std::string text(reinterpret_cast<const char*>(bytes.data() + pos + 8), static_cast<std::size_t>(esize) - 8);
          text = text.c_str();
          if (text.rfind(kSchemaTag, 0) == 0) {
            img.schema = parse_schema(text.substr(std::strlen(kSchemaTag)));
            img.has_schema = true;
          }
        }
        pos += static_cast<std::size_t>(esize);
      }
    }
  } else {
    std::string img_path = path.string();
    const bool gz = ends_with(img_path, ".gz");
    if (gz) {
      img_path.resize(img_path.size() - 3);
    }
    if (!ends_with(img_path, ".hdr")) {
      throw FormatError("'" + path.string() + "' is a header/image pair but not named .hdr");
    }
    img_path.replace(img_path.size() - 4, 4, ".img");
    pair_payload = read_all(gz && std::filesystem::exists(img_path + ".gz") ? img_path + ".gz" : img_path);
    payload = &pair_payload;
    offset = static_cast<std::size_t>(h.get<float>(108));
  }

  const std::size_t n = img.grid.voxel_count();
  if (payload->size() < offset + n * bytes_per_voxel) {
    throw FormatError("'" + path.string() + "' is truncated");
  }
  const HeaderReader data(payload->data() + offset, swap);
  float slope = h.get<float>(112);
  float inter = h.get<float>(116);
  if (slope == 0.0f || !std::isfinite(slope)) {
    slope = 1.0f;
    inter = 0.0f;
  }
  img.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    switch (img.datatype) {
    case 2: v = data.get<std::uint8_t>(i); break;
    case 4: v = data.get<std::int16_t>(2 * i); break;
    default: v = data.get<float>(4 * i); break;
    }
    img.values[i] = (slope == 1.0f && inter == 0.0f) ? v : v * slope + inter;
  }
  return img;
}

std::vector<std::uint8_t> make_header(const Grid& grid, NiftiDatatype type, std::size_t extension_bytes) {
  std::vector<std::uint8_t> buf(kHeaderSize + 4 + extension_bytes, 0);
  const auto& d = grid.dims();
  put<std::int32_t>(buf, 0, 348);
  put<std::int16_t>(buf, 40, 3);
  for (int a = 0; a < 3; ++a) {
    put<std::int16_t>(buf, 42 + 2 * a, static_cast<std::int16_t>(d[a]));
  }
  for (int a = 3; a < 7; ++a) {
    put<std::int16_t>(buf, 42 + 2 * a, 1);
  }
  const auto code = static_cast<std::int16_t>(type);
  put<std::int16_t>(buf, 70, code);
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(code == 2 ? 8 : code == 4 ? 16 : 32));
  put<float>(buf, 76, 1.0f);
  for (int a = 0; a < 3; ++a) {
    put<float>(buf, 80 + 4 * a, static_cast<float>(grid.voxel_size()[a]));
  }
  for (int a = 3; a < 7; ++a) {
    put<float>(buf, 80 + 4 * a, 1.0f);
  }
  put<float>(buf, 108, static_cast<float>(buf.size()));
  put<float>(buf, 112, 1.0f);
  put<float>(buf, 116, 0.0f);
  buf[123] = 2; // xyzt_units: mm
  put<std::int16_t>(buf, 252, 0);
  put<std::int16_t>(buf, 254, 2);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      put<float>(buf, 280 + 16 * r + 4 * c, static_cast<float>(grid.affine()(r, c)));
    }
  }
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  return buf;
}

} // namespace

std::variant<Volume, LabelMap> read_nifti(const std::filesystem::path& path, NiftiLoad load, LabelCategory fallback) {
  RawImage img = decode(path);
  if (load == NiftiLoad::as_volume) {
    std::vector<float> values(img.values.begin(), img.values.end());
    return Volume(img.grid, std::move(values));
  }
  if (img.datatype == static_cast<std::int16_t>(NiftiDatatype::float32)) {
    throw UnsupportedError("'" + path.string() + "' holds floating-point data and cannot be read as labels");
  }
  LabelMap s;
  s.grid = img.grid;
  s.data.resize(img.values.size());
  std::set<std::int32_t> ids;
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const double v = img.values[i];
    if (v < 0.0 || v != std::floor(v)) {
      throw SchemaError("'" + path.string() + "' contains a non-label value");
    }
    s.data[i] = static_cast<std::int32_t>(v);
    ids.insert(s.data[i]);
  }
  if (img.has_schema) {
    s.schema = std::move(img.schema);
  } else {
    s.schema[0] = LabelInfo{"background", LabelCategory::background};
    for (std::int32_t id : ids) {
      if (id != 0) {
        s.schema[id] = LabelInfo{"label_" + std::to_string(id), fallback};
      }
    }
  }
  s.validate();
  return s;
}

Volume read_volume(const std::filesystem::path& path) {
  return std::get<Volume>(read_nifti(path, NiftiLoad::as_volume));
}

LabelMap read_labelmap(const std::filesystem::path& path, LabelCategory fallback) {
  return std::get<LabelMap>(read_nifti(path, NiftiLoad::as_labels, fallback));
}

void write_nifti(const Volume& v, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf = make_header(v.grid, NiftiDatatype::float32, 0);
  const std::size_t offset = buf.size();
  buf.resize(offset + 4 * v.data.size());
  std::memcpy(buf.data() + offset, v.data.data(), 4 * v.data.size());
  write_all(path, buf);
}

void write_nifti(const LabelMap& s, const std::filesystem::path& path) {
  const std::int32_t max_label = s.max_label();
  if (max_label > 32767) {
    throw UnsupportedError("label ids above 32767 cannot be stored");
  }
  const NiftiDatatype type = max_label <= 255 ? NiftiDatatype::uint8 : NiftiDatatype::int16;

  std::string text = std::string(kSchemaTag) + serialize_schema(s.schema);
  const std::size_t esize = ((text.size() + 1 + 8 + 15) / 16) * 16;
  std::vector<std::uint8_t> buf = make_header(s.grid, type, esize);
  buf[kHeaderSize] = 1;
  put<std::int32_t>(buf, kHeaderSize + 4, static_cast<std::int32_t>(esize));
  put<std::int32_t>(buf, kHeaderSize + 8, kCommentCode);
  std::memcpy(buf.data() + kHeaderSize + 12, text.data(), text.size());

  const std::size_t offset = buf.size();
  if (type == NiftiDatatype::uint8) {
    buf.resize(offset + s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      buf[offset + i] = static_cast<std::uint8_t>(s.data[i]);
    }
  } else {
    buf.resize(offset + 2 * s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      put<std::int16_t>(buf, offset + 2 * i, static_cast<std::int16_t>(s.data[i]));
    }
  }
  write_all(path, buf);
}

} // namespace dstrip
