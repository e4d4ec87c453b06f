#pragma once

// 3D Gaussian splat clouds in the standard binary PLY layout, removal sets,
// and the sphere-intersection predicates used to seed refinement.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsrm/error.hpp"
#include "gsrm/file_util.hpp"
#include "json.hpp"

namespace gsrm {

static_assert(std::endian::native == std::endian::little, "PLY codec assumes a little-endian host");

enum class PlyType : std::uint8_t { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::int8:
    case PlyType::uint8: return 1;
    case PlyType::int16:
    case PlyType::uint16: return 2;
    case PlyType::int32:
    case PlyType::uint32:
    case PlyType::float32: return 4;
    case PlyType::float64: return 8;
  }
  return 0;
}

inline std::optional<PlyType> parse_ply_type(const std::string& s) {
  static const std::unordered_map<std::string, PlyType> table{
      {"char", PlyType::int8},     {"int8", PlyType::int8},       {"uchar", PlyType::uint8},
      {"uint8", PlyType::uint8},   {"short", PlyType::int16},     {"int16", PlyType::int16},
      {"ushort", PlyType::uint16}, {"uint16", PlyType::uint16},   {"int", PlyType::int32},
      {"int32", PlyType::int32},   {"uint", PlyType::uint32},     {"uint32", PlyType::uint32},
      {"float", PlyType::float32}, {"float32", PlyType::float32}, {"double", PlyType::float64},
      {"float64", PlyType::float64}};
  const auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

inline const char* ply_type_name(PlyType t) {
  switch (t) {
    case PlyType::int8: return "char";
    case PlyType::uint8: return "uchar";
    case PlyType::int16: return "short";
    case PlyType::uint16: return "ushort";
    case PlyType::int32: return "int";
    case PlyType::uint32: return "uint";
    case PlyType::float32: return "float";
    case PlyType::float64: return "double";
  }
  return "float";
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::float32;
};

using Vec3f = std::array<float, 3>;
using Quatf = std::array<float, 4>;

struct GaussianCloud {
  std::vector<Vec3f> positions;
  std::vector<Vec3f> log_scales;
  std::vector<Quatf> rotations;  // (w, x, y, z) as stored in rot_0..rot_3
  std::vector<float> opacity_logits;

  // f_dc_* followed by f_rest_*, row-major n x color_dim.
  std::size_t color_dim = 3;
  std::vector<float> color_coeffs;

  // Optional per-splat semantic vectors, row-major n x feature_dim.
  std::size_t feature_dim = 0;
  std::vector<float> features;

  // Properties not listed above, kept byte-for-byte in file order.
  std::vector<PlyProperty> layout;
  std::size_t extra_stride = 0;
  std::vector<std::uint8_t> extras;
  std::vector<std::string> comments;

  std::size_t size() const noexcept { return positions.size(); }
  bool has_features() const noexcept { return feature_dim > 0 && features.size() == size() * feature_dim; }

  std::span<const float> feature(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }

  void validate() const {
    const std::size_t n = size();
    if (log_scales.size() != n || rotations.size() != n || opacity_logits.size() != n ||
        color_coeffs.size() != n * color_dim || extras.size() != n * extra_stride) {
      throw Error(ErrorCode::invalid_argument, "gaussian cloud arrays disagree on splat count");
    }
    if (feature_dim > 0 && features.size() != n * feature_dim) {
      throw Error(ErrorCode::invalid_argument, "feature array does not match splat count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (float s : log_scales[i]) {
        const double e = std::exp(static_cast<double>(s));
        if (!std::isfinite(e) || e <= 0.0) {
          throw Error(ErrorCode::invalid_argument, "splat " + std::to_string(i) + " has a non-positive scale");
        }
      }
    }
  }
};

// Flags over a cloud; true marks a splat to delete.
struct RemovalSet {
  std::vector<std::uint8_t> flags;
  std::string provenance;

  RemovalSet() = default;
  explicit RemovalSet(std::size_t n, std::string tag = {}) : flags(n, 0), provenance(std::move(tag)) {}

  static RemovalSet from_indices(std::size_t n, std::span<const std::size_t> indices, std::string tag = {}) {
    RemovalSet r(n, std::move(tag));
    for (std::size_t i : indices) {
      if (i >= n) {
        throw Error(ErrorCode::index_out_of_range,
                    "removal index " + std::to_string(i) + " outside cloud of " + std::to_string(n));
      }
      r.flags[i] = 1;
    }
    return r;
  }

  std::size_t size() const noexcept { return flags.size(); }
  bool contains(std::size_t i) const { return flags.at(i) != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
  }
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (flags[i]) out.push_back(i);
    }
    return out;
  }
};

namespace detail {

inline double read_ply_value(const std::uint8_t* p, PlyType t) {
  switch (t) {
    case PlyType::int8: return static_cast<double>(static_cast<std::int8_t>(*p));
    case PlyType::uint8: return static_cast<double>(*p);
    case PlyType::int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::uint16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::uint32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::float32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::float64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

inline float read_ply_float(const std::uint8_t* p, PlyType t) {
  if (t == PlyType::float32) {
    float v;
    std::memcpy(&v, p, 4);
    return v;
  }
  return static_cast<float>(read_ply_value(p, t));
}

inline void write_ply_float(std::uint8_t* p, PlyType t, float value) {
  switch (t) {
    case PlyType::int8: { auto v = static_cast<std::int8_t>(std::lround(value)); std::memcpy(p, &v, 1); break; }
    case PlyType::uint8: { auto v = static_cast<std::uint8_t>(std::lround(value)); std::memcpy(p, &v, 1); break; }
    case PlyType::int16: { auto v = static_cast<std::int16_t>(std::lround(value)); std::memcpy(p, &v, 2); break; }
    case PlyType::uint16: { auto v = static_cast<std::uint16_t>(std::lround(value)); std::memcpy(p, &v, 2); break; }
    case PlyType::int32: { auto v = static_cast<std::int32_t>(std::lround(value)); std::memcpy(p, &v, 4); break; }
    case PlyType::uint32: { auto v = static_cast<std::uint32_t>(std::llround(value)); std::memcpy(p, &v, 4); break; }
    case PlyType::float32: std::memcpy(p, &value, 4); break;
    case PlyType::float64: { double v = value; std::memcpy(p, &v, 8); break; }
  }
}

// Leaves a quaternion untouched when it is already unit length to float
// precision, so normalizing on every load is idempotent.
inline Quatf normalized(Quatf q) {
  double n2 = 0.0;
  for (float c : q) n2 += static_cast<double>(c) * c;
  if (n2 == 0.0 || !std::isfinite(n2)) return {1.0f, 0.0f, 0.0f, 0.0f};
  if (std::abs(n2 - 1.0) <= 4.0 * std::numeric_limits<float>::epsilon()) return q;
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& c : q) c = static_cast<float>(c * inv);
  return q;
}

// Role of a vertex property within the cloud.
struct FieldSlot {
  enum Kind { position, scale, rotation, opacity, color, feature, extra } kind = extra;
  std::size_t component = 0;
};

inline bool parse_indexed(const std::string& name, const std::string& prefix, std::size_t& index) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return false;
  std::size_t v = 0;
  for (std::size_t i = prefix.size(); i < name.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    v = v * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  index = v;
  return true;
}

}  // namespace detail

inline GaussianCloud decode_ply(std::span<const std::uint8_t> data, const std::string& name) {
  // Header is ASCII lines up to "end_header\n".
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t start = pos;
    while (pos < data.size() && data[pos] != '\n') ++pos;
    if (pos >= data.size()) throw Error(ErrorCode::format, name + ": unterminated PLY header");
    std::string line(reinterpret_cast<const char*>(data.data()) + start, pos - start);
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw Error(ErrorCode::format, name + ": missing 'ply' magic");
  GaussianCloud cloud;
  std::vector<PlyProperty> props;
  std::optional<std::size_t> vertex_count;
  bool in_vertex = false;
  bool format_ok = false;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw Error(ErrorCode::format, name + ": unsupported PLY format '" + fmt + "' (binary_little_endian required)");
      }
      format_ok = true;
    } else if (keyword == "comment" || keyword == "obj_info") {
      cloud.comments.push_back(line.size() > keyword.size() + 1 ? line.substr(keyword.size() + 1) : std::string{});
    } else if (keyword == "element") {
      std::string element;
      std::size_t count = 0;
      ls >> element >> count;
      if (element == "vertex") {
        vertex_count = count;
        in_vertex = true;
      } else if (count != 0) {
        throw Error(ErrorCode::format, name + ": unsupported non-empty element '" + element + "'");
      } else {
        in_vertex = false;
      }
    } else if (keyword == "property") {
      std::string type_name, prop_name;
      ls >> type_name >> prop_name;
      if (type_name == "list") throw Error(ErrorCode::format, name + ": list properties are not supported");
      if (!in_vertex) continue;
      const auto type = parse_ply_type(type_name);
      if (!type) throw Error(ErrorCode::format, name + ": unknown property type '" + type_name + "'");
      props.push_back({prop_name, *type});
    }
  }
  if (!format_ok) throw Error(ErrorCode::format, name + ": missing format line");
  if (!vertex_count) throw Error(ErrorCode::format, name + ": missing vertex element");

  using detail::FieldSlot;
  std::vector<FieldSlot> slots(props.size());
  std::vector<std::size_t> offsets(props.size());
  std::size_t stride = 0;
  std::size_t n_rest = 0, n_feat = 0;
  std::vector<int> seen_pos(3, 0), seen_scale(3, 0), seen_rot(4, 0), seen_dc(3, 0);
  int seen_opacity = 0;
  for (std::size_t k = 0; k < props.size(); ++k) {
    offsets[k] = stride;
    stride += ply_type_size(props[k].type);
    const auto& nm = props[k].name;
    std::size_t idx = 0;
    if (nm == "x" || nm == "y" || nm == "z") {
      slots[k] = {FieldSlot::position, static_cast<std::size_t>(nm[0] - 'x')};
      seen_pos[slots[k].component] = 1;
    } else if (detail::parse_indexed(nm, "scale_", idx) && idx < 3) {
      slots[k] = {FieldSlot::scale, idx};
      seen_scale[idx] = 1;
    } else if (detail::parse_indexed(nm, "rot_", idx) && idx < 4) {
      slots[k] = {FieldSlot::rotation, idx};
      seen_rot[idx] = 1;
    } else if (nm == "opacity") {
      slots[k] = {FieldSlot::opacity, 0};
      seen_opacity = 1;
    } else if (detail::parse_indexed(nm, "f_dc_", idx) && idx < 3) {
      slots[k] = {FieldSlot::color, idx};
      seen_dc[idx] = 1;
    } else if (detail::parse_indexed(nm, "f_rest_", idx)) {
      slots[k] = {FieldSlot::color, 3 + idx};
      n_rest = std::max(n_rest, idx + 1);
    } else if (detail::parse_indexed(nm, "feature_", idx)) {
      slots[k] = {FieldSlot::feature, idx};
      n_feat = std::max(n_feat, idx + 1);
    } else {
      slots[k] = {FieldSlot::extra, 0};
    }
  }
  std::string missing;
  const char* axis[] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    if (!seen_pos[i]) missing += std::string(" ") + axis[i];
  }
  for (int i = 0; i < 3; ++i) {
    if (!seen_scale[i]) missing += " scale_" + std::to_string(i);
  }
  for (int i = 0; i < 4; ++i) {
    if (!seen_rot[i]) missing += " rot_" + std::to_string(i);
  }
  if (!seen_opacity) missing += " opacity";
  for (int i = 0; i < 3; ++i) {
    if (!seen_dc[i]) missing += " f_dc_" + std::to_string(i);
  }
  if (!missing.empty()) throw Error(ErrorCode::format, name + ": missing required vertex properties:" + missing);

  const std::size_t n = *vertex_count;
  if (data.size() - pos < n * stride) throw Error(ErrorCode::format, name + ": truncated vertex data");

  cloud.layout = props;
  cloud.color_dim = 3 + n_rest;
  cloud.feature_dim = n_feat;
  for (std::size_t k = 0; k < props.size(); ++k) {
    if (slots[k].kind == FieldSlot::extra) cloud.extra_stride += ply_type_size(props[k].type);
  }
  cloud.positions.resize(n);
  cloud.log_scales.resize(n);
  cloud.rotations.resize(n);
  cloud.opacity_logits.resize(n);
  cloud.color_coeffs.assign(n * cloud.color_dim, 0.0f);
  cloud.features.assign(n * n_feat, 0.0f);
  cloud.extras.resize(n * cloud.extra_stride);

  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* row = data.data() + pos + i * stride;
    std::size_t extra_off = 0;
    for (std::size_t k = 0; k < props.size(); ++k) {
      const std::uint8_t* p = row + offsets[k];
      const auto [kind, c] = slots[k];
      switch (kind) {
        case FieldSlot::position: cloud.positions[i][c] = detail::read_ply_float(p, props[k].type); break;
        case FieldSlot::scale: cloud.log_scales[i][c] = detail::read_ply_float(p, props[k].type); break;
        case FieldSlot::rotation: cloud.rotations[i][c] = detail::read_ply_float(p, props[k].type); break;
        case FieldSlot::opacity: cloud.opacity_logits[i] = detail::read_ply_float(p, props[k].type); break;
        case FieldSlot::color:
          cloud.color_coeffs[i * cloud.color_dim + c] = detail::read_ply_float(p, props[k].type);
          break;
        case FieldSlot::feature: cloud.features[i * n_feat + c] = detail::read_ply_float(p, props[k].type); break;
        case FieldSlot::extra: {
          const std::size_t sz = ply_type_size(props[k].type);
          std::memcpy(cloud.extras.data() + i * cloud.extra_stride + extra_off, p, sz);
          extra_off += sz;
          break;
        }
      }
    }
    cloud.rotations[i] = detail::normalized(cloud.rotations[i]);
  }
  return cloud;
}

inline GaussianCloud load_ply(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  return decode_ply(data, path.string());
}

// Property layout written for clouds that were not loaded from a file.
inline std::vector<PlyProperty> default_ply_layout(const GaussianCloud& cloud) {
  std::vector<PlyProperty> layout;
  for (const char* nm : {"x", "y", "z"}) layout.push_back({nm, PlyType::float32});
  for (int i = 0; i < 3; ++i) layout.push_back({"f_dc_" + std::to_string(i), PlyType::float32});
  for (std::size_t i = 3; i < cloud.color_dim; ++i) layout.push_back({"f_rest_" + std::to_string(i - 3), PlyType::float32});
  layout.push_back({"opacity", PlyType::float32});
  for (int i = 0; i < 3; ++i) layout.push_back({"scale_" + std::to_string(i), PlyType::float32});
  for (int i = 0; i < 4; ++i) layout.push_back({"rot_" + std::to_string(i), PlyType::float32});
  for (std::size_t i = 0; i < cloud.feature_dim; ++i) layout.push_back({"feature_" + std::to_string(i), PlyType::float32});
  return layout;
}

// Serializes the cloud, dropping every splat flagged in `removal`.
inline std::vector<std::uint8_t> encode_ply(const GaussianCloud& cloud, const RemovalSet* removal = nullptr) {
  cloud.validate();
  const std::size_t n = cloud.size();
  if (removal && removal->size() != n) {
    throw Error(ErrorCode::invalid_argument, "removal set size " + std::to_string(removal->size()) +
                                                 " does not match cloud size " + std::to_string(n));
  }
  std::vector<PlyProperty> layout = cloud.layout.empty() ? default_ply_layout(cloud) : cloud.layout;
  if (!cloud.layout.empty()) {
    // Features attached after loading (e.g. from a sidecar) are appended.
    std::size_t present = 0;
    std::size_t idx = 0;
    for (const auto& p : layout) {
      if (detail::parse_indexed(p.name, "feature_", idx)) present = std::max(present, idx + 1);
    }
    for (std::size_t i = present; i < cloud.feature_dim; ++i) layout.push_back({"feature_" + std::to_string(i), PlyType::float32});
  }
  const std::size_t kept = removal ? n - removal->count() : n;

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : cloud.comments) header << "comment " << c << "\n";
  header << "element vertex " << kept << "\n";
  for (const auto& p : layout) header << "property " << ply_type_name(p.type) << " " << p.name << "\n";
  header << "end_header\n";
  const std::string head = header.str();

  std::size_t stride = 0;
  for (const auto& p : layout) stride += ply_type_size(p.type);
  std::vector<std::uint8_t> out(head.begin(), head.end());
  const std::size_t body = out.size();
  out.resize(body + kept * stride);

  std::size_t row_index = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (removal && removal->contains(i)) continue;
    std::uint8_t* row = out.data() + body + row_index * stride;
    ++row_index;
    std::size_t off = 0, extra_off = 0;
    for (const auto& p : layout) {
      const std::size_t sz = ply_type_size(p.type);
      std::size_t idx = 0;
      float value = 0.0f;
      bool is_extra = false;
      if (p.name == "x" || p.name == "y" || p.name == "z") {
        value = cloud.positions[i][static_cast<std::size_t>(p.name[0] - 'x')];
      } else if (detail::parse_indexed(p.name, "scale_", idx) && idx < 3) {
        value = cloud.log_scales[i][idx];
      } else if (detail::parse_indexed(p.name, "rot_", idx) && idx < 4) {
        value = cloud.rotations[i][idx];
      } else if (p.name == "opacity") {
        value = cloud.opacity_logits[i];
      } else if (detail::parse_indexed(p.name, "f_dc_", idx) && idx < 3) {
        value = cloud.color_coeffs[i * cloud.color_dim + idx];
      } else if (detail::parse_indexed(p.name, "f_rest_", idx)) {
        value = cloud.color_coeffs[i * cloud.color_dim + 3 + idx];
      } else if (detail::parse_indexed(p.name, "feature_", idx)) {
        value = idx < cloud.feature_dim ? cloud.features[i * cloud.feature_dim + idx] : 0.0f;
      } else {
        is_extra = true;
      }
      if (is_extra) {
        std::memcpy(row + off, cloud.extras.data() + i * cloud.extra_stride + extra_off, sz);
        extra_off += sz;
      } else {
        detail::write_ply_float(row + off, p.type, value);
      }
      off += sz;
    }
  }
  return out;
}

inline void save_ply(const GaussianCloud& cloud, const RemovalSet* removal, const std::filesystem::path& path) {
  const auto bytes = encode_ply(cloud, removal);
  write_file_atomic(path, [&](std::ostream& out) {
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  });
}

inline void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path) { save_ply(cloud, nullptr, path); }

// Semantic features stored next to a cloud: a JSON header naming a raw
// little-endian float32 array of count x dim values.
inline void load_feature_sidecar(const std::filesystem::path& header_path, GaussianCloud& cloud) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_file_bytes(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, header_path.string() + ": " + e.what());
  }
  const auto count = header.value("count", std::size_t{0});
  const auto dim = header.value("dim", std::size_t{0});
  const auto dtype = header.value("dtype", std::string("float32"));
  const auto order = header.value("byte_order", std::string("little"));
  const auto data_name = header.value("data", std::string{});
  if (dtype != "float32" || order != "little") {
    throw Error(ErrorCode::format, header_path.string() + ": only little-endian float32 features are supported");
  }
  if (count != cloud.size() || dim == 0 || data_name.empty()) {
    throw Error(ErrorCode::format, header_path.string() + ": feature header does not match the cloud (count " +
                                       std::to_string(count) + ", cloud " + std::to_string(cloud.size()) + ")");
  }
  const auto raw = read_file_bytes(header_path.parent_path() / data_name);
  if (raw.size() != count * dim * 4) {
    throw Error(ErrorCode::format, header_path.string() + ": feature data has " + std::to_string(raw.size()) +
                                       " bytes, expected " + std::to_string(count * dim * 4));
  }
  cloud.feature_dim = dim;
  cloud.features.resize(count * dim);
  std::memcpy(cloud.features.data(), raw.data(), raw.size());
}

inline void save_feature_sidecar(const GaussianCloud& cloud, const std::filesystem::path& header_path) {
  if (!cloud.has_features()) throw Error(ErrorCode::missing_features, "cloud has no features to write");
  const std::string data_name = header_path.stem().string() + ".bin";
  write_file_atomic(header_path.parent_path() / data_name, [&](std::ostream& out) {
    out.write(reinterpret_cast<const char*>(cloud.features.data()),
              static_cast<std::streamsize>(cloud.features.size() * sizeof(float)));
  });
  const nlohmann::json header{{"format", "gsrm-features"}, {"version", 1},           {"count", cloud.size()},
                              {"dim", cloud.feature_dim},  {"dtype", "float32"},     {"byte_order", "little"},
                              {"data", data_name}};
  write_text_atomic(header_path, header.dump(2) + "\n");
}

// Removal sets on disk: a text list of indices (one per line, '#' comments)
// or a packed bitmask ("GSRMBITS", u64 count, LSB-first bits).
enum class RemovalFormat { index_list, bitmask };

inline constexpr char kBitmaskMagic[8] = {'G', 'S', 'R', 'M', 'B', 'I', 'T', 'S'};

inline void save_removal_set(const RemovalSet& set, const std::filesystem::path& path,
                             RemovalFormat format = RemovalFormat::index_list) {
  if (format == RemovalFormat::bitmask) {
    write_file_atomic(path, [&](std::ostream& out) {
      out.write(kBitmaskMagic, 8);
      const std::uint64_t n = set.size();
      out.write(reinterpret_cast<const char*>(&n), 8);
      std::vector<std::uint8_t> packed((set.size() + 7) / 8, 0);
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.flags[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
      }
      out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    });
    return;
  }
  std::ostringstream text;
  text << "# removal-set count=" << set.size();
  if (!set.provenance.empty()) text << " provenance=" << set.provenance;
  text << "\n";
  for (std::size_t i : set.indices()) text << i << "\n";
  write_text_atomic(path, text.str());
}

// `cloud_size` is needed because an index list does not record it.
inline RemovalSet load_removal_set(const std::filesystem::path& path, std::size_t cloud_size) {
  const auto data = read_file_bytes(path);
  RemovalSet set(cloud_size);
  if (data.size() >= 16 && std::equal(kBitmaskMagic, kBitmaskMagic + 8, data.begin())) {
    std::uint64_t n = 0;
    std::memcpy(&n, data.data() + 8, 8);
    if (n != cloud_size) {
      throw Error(ErrorCode::format, path.string() + ": bitmask covers " + std::to_string(n) + " splats, cloud has " +
                                         std::to_string(cloud_size));
    }
    if (data.size() < 16 + (n + 7) / 8) throw Error(ErrorCode::format, path.string() + ": truncated bitmask");
    for (std::size_t i = 0; i < n; ++i) set.flags[i] = (data[16 + i / 8] >> (i % 8)) & 1u;
    set.provenance = path.stem().string();
    return set;
  }
  std::istringstream in(std::string(data.begin(), data.end()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      const auto tag = line.find("provenance=", hash);
      if (tag != std::string::npos) set.provenance = line.substr(tag + 11);
      line.erase(hash);
    }
    std::istringstream ls(line);
    long long idx = 0;
    if (!(ls >> idx)) continue;
    std::string rest;
    if (ls >> rest || idx < 0) {
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": expected one index");
    }
    if (static_cast<std::size_t>(idx) >= cloud_size) {
      throw Error(ErrorCode::index_out_of_range, path.string() + ":" + std::to_string(line_no) + ": index " +
                                                     std::to_string(idx) + " outside cloud of " +
                                                     std::to_string(cloud_size));
    }
    set.flags[static_cast<std::size_t>(idx)] = 1;
  }
  if (set.provenance.empty()) set.provenance = path.stem().string();
  return set;
}

inline void check_index(const GaussianCloud& cloud, std::size_t i) {
  if (i >= cloud.size()) {
    throw Error(ErrorCode::index_out_of_range,
                "splat " + std::to_string(i) + " outside cloud of " + std::to_string(cloud.size()));
  }
}

inline double largest_scale(const GaussianCloud& cloud, std::size_t i) {
  check_index(cloud, i);
  const auto& s = cloud.log_scales[i];
  return std::exp(static_cast<double>(std::max({s[0], s[1], s[2]})));
}

inline double center_distance(const GaussianCloud& cloud, std::size_t i, std::size_t j) {
  check_index(cloud, i);
  check_index(cloud, j);
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = static_cast<double>(cloud.positions[i][k]) - cloud.positions[j][k];
    d2 += d * d;
  }
  return std::sqrt(d2);
}

// Splats approximated as spheres of their largest scale; touching spheres
// do not intersect.
inline bool intersects(const GaussianCloud& cloud, std::size_t i, std::size_t j) {
  return center_distance(cloud, i, j) < largest_scale(cloud, i) + largest_scale(cloud, j);
}

// Seed splats plus every splat intersecting at least one seed splat, sorted.
// Uses a uniform grid whose cell edge is twice the largest splat scale, so
// intersecting pairs always sit in adjacent cells.
inline std::vector<std::size_t> candidate_filter(const GaussianCloud& cloud, const RemovalSet& seed) {
  const std::size_t n = cloud.size();
  if (seed.size() != n) {
    throw Error(ErrorCode::invalid_argument, "removal set size " + std::to_string(seed.size()) +
                                                 " does not match cloud size " + std::to_string(n));
  }
  if (seed.count() == 0) throw Error(ErrorCode::graph_empty, "graph empty: the removal set has no splats");

  std::vector<double> radius(n);
  double max_radius = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    radius[i] = largest_scale(cloud, i);
    max_radius = std::max(max_radius, radius[i]);
  }
  const double cell = 2.0 * max_radius;
  using Key = std::array<std::int64_t, 3>;
  auto key_of = [&](std::size_t i) {
    Key k;
    for (int a = 0; a < 3; ++a) k[a] = static_cast<std::int64_t>(std::floor(cloud.positions[i][a] / cell));
    return k;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::uint64_t h = 1469598103934665603ull;
      for (auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ull;
      return static_cast<std::size_t>(h);
    }
  };
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> grid;
  for (std::size_t i = 0; i < n; ++i) {
    if (seed.flags[i]) grid[key_of(i)].push_back(i);
  }

  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (seed.flags[j]) {
      out.push_back(j);
      continue;
    }
    const Key kj = key_of(j);
    bool hit = false;
    for (std::int64_t dx = -1; dx <= 1 && !hit; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && !hit; ++dy) {
        for (std::int64_t dz = -1; dz <= 1 && !hit; ++dz) {
          const auto it = grid.find({kj[0] + dx, kj[1] + dy, kj[2] + dz});
          if (it == grid.end()) continue;
          for (std::size_t i : it->second) {
            if (center_distance(cloud, i, j) < radius[i] + radius[j]) {
              hit = true;
              break;
            }
          }
        }
      }
    }
    if (hit) out.push_back(j);
  }
  return out;
}

}  // namespace gsrm
