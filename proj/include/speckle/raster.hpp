#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace speckle {

/// Grayscale image with a physical scale in micrometers per pixel.
class GrayRaster {
public:
  GrayRaster() = default;
  GrayRaster(int width, int height, double pixel_size = 1.0);
  GrayRaster(int width, int height, double pixel_size, std::vector<std::uint16_t> values);

  int width() const { return width_; }
  int height() const { return height_; }
  double pixel_size() const { return pixel_size_; }
  std::span<const std::uint16_t> values() const { return values_; }

  std::uint16_t at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, std::uint16_t v) { values_[static_cast<std::size_t>(y) * width_ + x] = v; }

  bool operator==(const GrayRaster &) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  double pixel_size_ = 1.0;
  std::vector<std::uint16_t> values_;
};

/// Binary speckle. Bits are packed row-major into 64-bit words using the
/// linear pixel index; tail bits past width*height are always zero.
class BinaryRaster {
public:
  BinaryRaster() = default;
  BinaryRaster(int width, int height, double pixel_size = 1.0);
  static BinaryRaster from_bools(int width, int height, double pixel_size, std::span<const bool> bits);

  int width() const { return width_; }
  int height() const { return height_; }
  double pixel_size() const { return pixel_size_; }
  std::size_t size() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t count() const { return count_; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool get(int x, int y) const {
    const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, bool v);

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  /// Nearest-neighbor lookup at real coordinates: the bit at
  /// (floor(x + 0.5), floor(y + 0.5)), or false when that is out of bounds.
  /// Agrees with round_px() but avoids the floor() call in hot loops.
  bool sample(double x, double y) const {
    const double fx = x + 0.5, fy = y + 0.5;
    if (!(fx >= 0.0 && fy >= 0.0 && fx < width_ && fy < height_))
      return false;
    const std::size_t i = static_cast<std::size_t>(static_cast<int>(fy)) * width_ + static_cast<int>(fx);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }

  std::vector<bool> to_bools() const;

  bool operator==(const BinaryRaster &o) const {
    return width_ == o.width_ && height_ == o.height_ && pixel_size_ == o.pixel_size_ && words_ == o.words_;
  }

private:
  friend class BinaryRasterBuilder;
  int width_ = 0;
  int height_ = 0;
  double pixel_size_ = 1.0;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Fills a BinaryRaster word-by-word from parallel kernels, then recounts.
class BinaryRasterBuilder {
public:
  BinaryRasterBuilder(int width, int height, double pixel_size) : raster_(width, height, pixel_size) {}
  std::span<std::uint64_t> words() { return raster_.words_; }
  BinaryRaster finish() &&;

private:
  BinaryRaster raster_;
};

/// 8-bit RGB image used for overlays.
struct ColorRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb; // 3 bytes per pixel, row-major

  std::array<std::uint8_t, 3> at(int x, int y) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

enum class PgmVariant { Plain, Binary };

GrayRaster read_raster(const std::filesystem::path &path, std::optional<double> pixel_size_override = std::nullopt);
/// Reads a graymap and marks every nonzero value as segmented.
BinaryRaster read_mask(const std::filesystem::path &path, std::optional<double> pixel_size_override = std::nullopt);

void write_raster(const GrayRaster &raster, const std::filesystem::path &path, PgmVariant variant = PgmVariant::Binary);
void write_raster(const BinaryRaster &raster, const std::filesystem::path &path, PgmVariant variant = PgmVariant::Binary);
void write_color(const ColorRaster &raster, const std::filesystem::path &path);

GrayRaster to_gray(const BinaryRaster &raster);

BinaryRaster threshold(const GrayRaster &raster, std::uint16_t low, std::uint16_t high, bool invert = false);

/// Nearest-neighbor resampling to a new physical pixel size.
BinaryRaster rescale_nearest(const BinaryRaster &raster, double target_pixel_size);

/// Crops or zero-pads (anchored at the top-left corner) to the given size.
BinaryRaster fit_to(const BinaryRaster &raster, int width, int height);

/// Round-half-up used by every nearest-neighbor sampler in the library.
/// Values outside the int range (and NaN) map to -1, which is never in bounds.
inline int round_px(double v) {
  const double r = std::floor(v + 0.5);
  return (r > -2.0e9 && r < 2.0e9) ? static_cast<int>(r) : -1;
}

} // namespace speckle
