#pragma once

// Raster data model shared by every metric: binary masks, ordered mask sets
// and depth maps, plus their file formats (PNG/PGM masks, PFM depth).

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gsrm/error.hpp"
#include "gsrm/file_util.hpp"

namespace gsrm {

struct Size2 {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size2&, const Size2&) = default;
};

inline std::string to_string(Size2 s) {
  return std::to_string(s.width) + "x" + std::to_string(s.height);
}

inline void check_size(Size2 s) {
  if (s.width <= 0 || s.height <= 0) {
    throw Error(ErrorCode::invalid_argument, "raster dimensions must be positive, got " + to_string(s));
  }
}

class BinaryMask {
 public:
  BinaryMask(int width, int height) : size_{width, height} {
    check_size(size_);
    bits_.assign(pixel_count(), 0);
  }

  BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
      : size_{width, height}, bits_(std::move(bits)) {
    check_size(size_);
    if (bits_.size() != pixel_count()) {
      throw Error(ErrorCode::invalid_argument, "mask bit count does not match " + to_string(size_));
    }
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size2 size() const noexcept { return size_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(size_.width) * static_cast<std::size_t>(size_.height);
  }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits_[index(x, y)] = on ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return count() == 0; }

  BinaryMask complement() const {
    BinaryMask out(*this);
    for (auto& b : out.bits_) b ^= 1;
    return out;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const {
    if (x < 0 || y < 0 || x >= size_.width || y >= size_.height) {
      throw Error(ErrorCode::index_out_of_range, "pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                                     ") outside " + to_string(size_));
    }
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(size_.width) + static_cast<std::size_t>(x);
  }

  Size2 size_;
  std::vector<std::uint8_t> bits_;
};

// Ordered masks of one view; the position of a mask is its identity.
class MaskSet {
 public:
  MaskSet() = default;
  explicit MaskSet(std::vector<BinaryMask> masks) {
    for (auto& m : masks) push_back(std::move(m));
  }

  void push_back(BinaryMask mask) {
    if (!masks_.empty() && mask.size() != masks_.front().size()) {
      throw Error(ErrorCode::dimension_mismatch, "mask " + to_string(mask.size()) + " does not match set size " +
                                                     to_string(masks_.front().size()));
    }
    masks_.push_back(std::move(mask));
  }

  std::size_t size() const noexcept { return masks_.size(); }
  bool empty() const noexcept { return masks_.empty(); }
  const BinaryMask& operator[](std::size_t i) const { return masks_.at(i); }
  auto begin() const noexcept { return masks_.begin(); }
  auto end() const noexcept { return masks_.end(); }

  // Only meaningful for a nonempty set.
  Size2 mask_size() const { return masks_.at(0).size(); }

 private:
  std::vector<BinaryMask> masks_;
};

class DepthMap {
 public:
  // Non-finite and negative depths are marked invalid.
  DepthMap(int width, int height, std::vector<float> values) : size_{width, height}, values_(std::move(values)) {
    check_size(size_);
    if (values_.size() != pixel_count()) {
      throw Error(ErrorCode::invalid_argument, "depth value count does not match " + to_string(size_));
    }
    valid_.resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
      valid_[i] = (std::isfinite(values_[i]) && values_[i] >= 0.0f) ? 1 : 0;
    }
  }

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size2 size() const noexcept { return size_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(size_.width) * static_cast<std::size_t>(size_.height);
  }

  std::span<const float> values() const noexcept { return values_; }
  std::span<const std::uint8_t> valid() const noexcept { return valid_; }

  float at(int x, int y) const { return values_.at(static_cast<std::size_t>(y) * size_.width + x); }
  bool valid_at(int x, int y) const { return valid_.at(static_cast<std::size_t>(y) * size_.width + x) != 0; }

 private:
  Size2 size_;
  std::vector<float> values_;
  std::vector<std::uint8_t> valid_;
};

// Intersection over union. Two empty masks agree perfectly and score 1.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch, "iou of " + to_string(a.size()) + " and " + to_string(b.size()));
  }
  const auto abits = a.bits();
  const auto bbits = b.bits();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < abits.size(); ++i) {
    inter += abits[i] & bbits[i];
    uni += abits[i] | bbits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

inline BinaryMask mask_from_gray(int width, int height, std::span<const std::uint8_t> gray, int maxval) {
  std::vector<std::uint8_t> bits(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    bits[i] = (2 * static_cast<int>(gray[i]) > maxval) ? 1 : 0;
  }
  return BinaryMask(width, height, std::move(bits));
}

// Netpbm header token reader; skips whitespace and '#' comments.
class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> data) : data_(data) {}

  std::string token() {
    skip_space();
    std::string out;
    while (pos_ < data_.size() && !std::isspace(data_[pos_])) out.push_back(static_cast<char>(data_[pos_++]));
    if (out.empty()) throw Error(ErrorCode::format, "truncated header");
    return out;
  }

  long integer() {
    const auto t = token();
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0') throw Error(ErrorCode::format, "expected integer in header, got '" + t + "'");
    return v;
  }

  double real() {
    const auto t = token();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (*end != '\0') throw Error(ErrorCode::format, "expected number in header, got '" + t + "'");
    return v;
  }

  // Consumes the single whitespace byte that separates header from raster.
  std::size_t raster_offset() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_])) throw Error(ErrorCode::format, "missing raster separator");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < data_.size()) {
      if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(data_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline BinaryMask decode_pgm(std::span<const std::uint8_t> data, const std::string& name) {
  PnmHeader header(data);
  const auto magic = header.token();
  if (magic != "P5" && magic != "P2") {
    throw Error(ErrorCode::format, name + ": not a single-channel PGM (magic " + magic + ")");
  }
  const long width = header.integer();
  const long height = header.integer();
  const long maxval = header.integer();
  if (width <= 0 || height <= 0) throw Error(ErrorCode::format, name + ": bad dimensions");
  if (maxval <= 0 || maxval > 255) throw Error(ErrorCode::format, name + ": only 8-bit PGM is supported");
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> gray(n);
  if (magic == "P5") {
    const std::size_t off = header.raster_offset();
    if (data.size() < off + n) throw Error(ErrorCode::format, name + ": truncated raster");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(off), n, gray.begin());
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = header.integer();
      if (v < 0 || v > maxval) throw Error(ErrorCode::format, name + ": sample out of range");
      gray[i] = static_cast<std::uint8_t>(v);
    }
  }
  return mask_from_gray(static_cast<int>(width), static_cast<int>(height), gray, static_cast<int>(maxval));
}

inline BinaryMask decode_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::io, path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(ErrorCode::format, path.string() + ": only 8-bit PNG masks are supported");
  }
  const bool color = (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_COLORMAP)) != 0;
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  image.format = (color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY) | (alpha ? PNG_FORMAT_FLAG_ALPHA : 0u);
  const int channels = static_cast<int>(PNG_IMAGE_SAMPLE_CHANNELS(image.format));
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::format, path.string() + ": " + msg);
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> gray(n);
  const int color_channels = color ? 3 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = buffer.data() + i * static_cast<std::size_t>(channels);
    for (int c = 1; c < color_channels; ++c) {
      if (px[c] != px[0]) {
        throw Error(ErrorCode::format, path.string() + ": multi-channel mask with disagreeing channels");
      }
    }
    gray[i] = px[0];
  }
  return mask_from_gray(width, height, gray, 255);
}

}  // namespace detail

// Reads an 8-bit PNG or PGM; a pixel is foreground when its value exceeds 127.
inline BinaryMask load_mask(const std::filesystem::path& path) {
  const auto ext = lowercase_extension(path);
  if (ext == ".png") return detail::decode_png(path);
  const auto data = read_file_bytes(path);
  return detail::decode_pgm(data, path.string());
}

inline void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(mask.pixel_count());
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = bits[i] ? 255 : 0;

  if (lowercase_extension(path) == ".png") {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(mask.width());
    image.height = static_cast<png_uint_32>(mask.height());
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t bytes = 0;
    if (!png_image_write_get_memory_size(image, bytes, 0, gray.data(), 0, nullptr)) {
      throw Error(ErrorCode::io, path.string() + ": " + image.message);
    }
    std::vector<std::uint8_t> encoded(bytes);
    if (!png_image_write_to_memory(&image, encoded.data(), &bytes, 0, gray.data(), 0, nullptr)) {
      throw Error(ErrorCode::io, path.string() + ": " + image.message);
    }
    write_file_atomic(path, [&](std::ostream& out) {
      out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(bytes));
    });
    return;
  }
  write_file_atomic(path, [&](std::ostream& out) {
    out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  });
}

inline bool is_mask_file(const std::filesystem::path& path) {
  const auto ext = lowercase_extension(path);
  return ext == ".png" || ext == ".pgm";
}

// Loads every PNG/PGM in a directory; lexicographic filename order defines
// the mask indices.
inline MaskSet load_mask_set(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorCode::io, dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_mask_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  std::vector<BinaryMask> masks;
  masks.reserve(files.size());
  for (const auto& f : files) masks.push_back(load_mask(f));
  if (masks.empty()) return {};

  const Size2 ref = masks.front().size();
  std::string offenders;
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (masks[i].size() != ref) {
      offenders += " " + files[i].filename().string() + "(" + to_string(masks[i].size()) + ")";
    }
  }
  if (!offenders.empty()) {
    throw Error(ErrorCode::dimension_mismatch, dir.string() + ": masks differ from " +
                                                   files.front().filename().string() + "(" + to_string(ref) +
                                                   "):" + offenders);
  }
  return MaskSet(std::move(masks));
}

// Portable FloatMap, single channel ("Pf"). A negative scale marks
// little-endian samples; only the sign of the scale is significant. Rows are
// stored bottom-up in the file and returned top-down.
inline DepthMap decode_pfm(std::span<const std::uint8_t> data, const std::string& name) {
  detail::PnmHeader header(data);
  const auto magic = header.token();
  if (magic == "PF") throw Error(ErrorCode::format, name + ": 3-channel PFM is not a depth map");
  if (magic != "Pf") throw Error(ErrorCode::format, name + ": not a PFM file (magic " + magic + ")");
  const long width = header.integer();
  const long height = header.integer();
  const double scale = header.real();
  if (width <= 0 || height <= 0) throw Error(ErrorCode::format, name + ": bad dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) throw Error(ErrorCode::format, name + ": bad scale");
  const std::size_t off = header.raster_offset();
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (data.size() < off + n * 4) throw Error(ErrorCode::format, name + ": truncated raster");

  const bool little = scale < 0.0;
  std::vector<float> values(n);
  for (long row = 0; row < height; ++row) {
    const long dst_row = height - 1 - row;
    for (long col = 0; col < width; ++col) {
      const std::uint8_t* p = data.data() + off + (static_cast<std::size_t>(row) * width + col) * 4;
      std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                                     std::uint32_t{p[3]} << 24)
                                  : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                                     std::uint32_t{p[0]} << 24);
      values[static_cast<std::size_t>(dst_row) * width + col] = std::bit_cast<float>(bits);
    }
  }
  return DepthMap(static_cast<int>(width), static_cast<int>(height), std::move(values));
}

inline DepthMap load_depth(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  return decode_pfm(data, path.string());
}

// Writes little-endian PFM (scale -1).
inline void save_depth(const DepthMap& depth, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) {
    out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1\n";
    const auto values = depth.values();
    for (int row = depth.height() - 1; row >= 0; --row) {
      for (int col = 0; col < depth.width(); ++col) {
        const auto bits = std::bit_cast<std::uint32_t>(values[static_cast<std::size_t>(row) * depth.width() + col]);
        const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                               static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
        out.write(bytes, 4);
      }
    }
  });
}

}  // namespace gsrm
