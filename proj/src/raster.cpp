#include "speckle/raster.hpp"

#include "speckle/log.hpp"
#include "speckle/textio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <stdexcept>
#include <string>

namespace speckle {

namespace {

constexpr std::size_t kMaxPixels = std::size_t{1} << 31;

std::size_t checked_size(long long width, long long height) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("raster dimensions must be positive");
  if (width > (1 << 24) || height > (1 << 24) || static_cast<std::size_t>(width) * height > kMaxPixels)
    throw std::runtime_error("dimension overflow");
  return static_cast<std::size_t>(width) * height;
}

std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }

struct PgmHeader {
  char variant = 0;
  long long width = 0;
  long long height = 0;
  long long maxval = 0;
  std::optional<double> pixel_size;
  std::size_t data_offset = 0;
};

class HeaderScanner {
public:
  explicit HeaderScanner(std::string_view data) : data_(data) {}

  // Skips whitespace and comments, recording pixel-size metadata on the way.
  void skip(PgmHeader &hdr) {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        auto nl = data_.find('\n', pos_);
        if (nl == std::string_view::npos)
          nl = data_.size();
        parse_comment(data_.substr(pos_ + 1, nl - pos_ - 1), hdr);
        pos_ = nl;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long long integer() {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(data_.data() + pos_, data_.data() + data_.size(), v);
    if (ec == std::errc::result_out_of_range)
      throw std::runtime_error("dimension overflow");
    if (ec != std::errc())
      throw std::runtime_error("malformed header");
    pos_ = static_cast<std::size_t>(ptr - data_.data());
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  bool at_end() const { return pos_ >= data_.size(); }
  char peek() const { return data_[pos_]; }

private:
  static void parse_comment(std::string_view body, PgmHeader &hdr) {
    constexpr std::string_view key = "pixel_size_um=";
    const auto k = body.find(key);
    if (k == std::string_view::npos)
      return;
    auto rest = body.substr(k + key.size());
    double v = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (ec != std::errc() || !(v > 0.0))
      throw std::runtime_error("malformed header: bad pixel_size_um");
    hdr.pixel_size = v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

PgmHeader parse_header(std::string_view data, HeaderScanner &scan) {
  PgmHeader hdr;
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '2' && data[1] != '5'))
    throw std::runtime_error("malformed header");
  hdr.variant = data[1];
  scan.advance(2);
  scan.skip(hdr);
  hdr.width = scan.integer();
  scan.skip(hdr);
  hdr.height = scan.integer();
  scan.skip(hdr);
  hdr.maxval = scan.integer();
  if (hdr.width <= 0 || hdr.height <= 0 || hdr.maxval <= 0 || hdr.maxval > 65535)
    throw std::runtime_error("malformed header");
  checked_size(hdr.width, hdr.height);
  if (hdr.variant == '5') {
    // Exactly one whitespace byte separates maxval from the payload.
    if (scan.at_end())
      throw std::runtime_error("malformed header: missing raster data");
    scan.advance(1);
  }
  hdr.data_offset = scan.pos();
  return hdr;
}

std::string pgm_header(char variant, int width, int height, int maxval, double pixel_size) {
  std::string out = variant == '5' ? "P5\n" : "P2\n";
  out += "# pixel_size_um=" + format_double(pixel_size) + "\n";
  out += std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
  return out;
}

} // namespace

GrayRaster::GrayRaster(int width, int height, double pixel_size)
    : GrayRaster(width, height, pixel_size, std::vector<std::uint16_t>(checked_size(width, height), 0)) {}

GrayRaster::GrayRaster(int width, int height, double pixel_size, std::vector<std::uint16_t> values)
    : width_(width), height_(height), pixel_size_(pixel_size), values_(std::move(values)) {
  if (values_.size() != checked_size(width, height))
    throw std::invalid_argument("value count does not match dimensions");
  if (!(pixel_size > 0.0))
    throw std::invalid_argument("pixel_size must be positive");
}

BinaryRaster::BinaryRaster(int width, int height, double pixel_size)
    : width_(width), height_(height), pixel_size_(pixel_size), words_(word_count(checked_size(width, height)), 0) {
  if (!(pixel_size > 0.0))
    throw std::invalid_argument("pixel_size must be positive");
}

BinaryRaster BinaryRaster::from_bools(int width, int height, double pixel_size, std::span<const bool> bits) {
  BinaryRaster r(width, height, pixel_size);
  if (bits.size() != r.size())
    throw std::invalid_argument("bit count does not match dimensions");
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i])
      r.words_[i >> 6] |= std::uint64_t{1} << (i & 63);
  r.count_ = 0;
  for (auto w : r.words_)
    r.count_ += static_cast<std::size_t>(std::popcount(w));
  return r;
}

void BinaryRaster::set(int x, int y, bool v) {
  const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
  const std::uint64_t mask = std::uint64_t{1} << (i & 63);
  const bool old = words_[i >> 6] & mask;
  if (old == v)
    return;
  if (v) {
    words_[i >> 6] |= mask;
    ++count_;
  } else {
    words_[i >> 6] &= ~mask;
    --count_;
  }
}

std::vector<bool> BinaryRaster::to_bools() const {
  std::vector<bool> out(size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (words_[i >> 6] >> (i & 63)) & 1u;
  return out;
}

BinaryRaster BinaryRasterBuilder::finish() && {
  const std::size_t n = raster_.size();
  if (n % 64 != 0 && !raster_.words_.empty())
    raster_.words_.back() &= (std::uint64_t{1} << (n % 64)) - 1;
  std::size_t c = 0;
  for (auto w : raster_.words_)
    c += static_cast<std::size_t>(std::popcount(w));
  raster_.count_ = c;
  return std::move(raster_);
}

GrayRaster read_raster(const std::filesystem::path &path, std::optional<double> pixel_size_override) {
  if (!std::filesystem::is_regular_file(path))
    throw std::invalid_argument("no such file: " + path.string());
  std::string data;
  try {
    data = read_file(path);
  } catch (const std::exception &) {
    throw std::runtime_error("unreadable file: " + path.string());
  }
  HeaderScanner scan(data);
  const PgmHeader hdr = parse_header(data, scan);
  const std::size_t n = checked_size(hdr.width, hdr.height);
  std::vector<std::uint16_t> values(n);

  if (hdr.variant == '5') {
    const std::size_t bytes_per = hdr.maxval > 255 ? 2 : 1;
    if (data.size() - hdr.data_offset < n * bytes_per)
      throw std::runtime_error("truncated raster data: " + path.string());
    const auto *p = reinterpret_cast<const unsigned char *>(data.data() + hdr.data_offset);
    for (std::size_t i = 0; i < n; ++i)
      values[i] = bytes_per == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
  } else {
    PgmHeader scratch;
    for (std::size_t i = 0; i < n; ++i) {
      scan.skip(scratch);
      if (scan.at_end())
        throw std::runtime_error("truncated raster data: " + path.string());
      const long long v = scan.integer();
      if (v < 0 || v > hdr.maxval)
        throw std::runtime_error("raster value out of range: " + path.string());
      values[i] = static_cast<std::uint16_t>(v);
    }
  }
  for (auto v : values)
    if (v > hdr.maxval)
      throw std::runtime_error("raster value out of range: " + path.string());

  double pixel_size = 1.0;
  if (pixel_size_override) {
    pixel_size = *pixel_size_override;
  } else if (hdr.pixel_size) {
    pixel_size = *hdr.pixel_size;
  } else {
    log::warn("no pixel_size_um metadata in " + path.string() + "; assuming 1.0");
  }
  return GrayRaster(static_cast<int>(hdr.width), static_cast<int>(hdr.height), pixel_size, std::move(values));
}

BinaryRaster read_mask(const std::filesystem::path &path, std::optional<double> pixel_size_override) {
  const GrayRaster g = read_raster(path, pixel_size_override);
  BinaryRaster out(g.width(), g.height(), g.pixel_size());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      if (g.at(x, y) != 0)
        out.set(x, y, true);
  return out;
}

void write_raster(const GrayRaster &raster, const std::filesystem::path &path, PgmVariant variant) {
  std::uint16_t peak = 0;
  for (auto v : raster.values())
    peak = std::max(peak, v);
  const int maxval = peak > 255 ? 65535 : 255;
  const char magic = variant == PgmVariant::Binary ? '5' : '2';
  std::string out = pgm_header(magic, raster.width(), raster.height(), maxval, raster.pixel_size());
  const auto values = raster.values();
  if (variant == PgmVariant::Binary) {
    out.reserve(out.size() + values.size() * (maxval > 255 ? 2 : 1));
    for (auto v : values) {
      if (maxval > 255)
        out.push_back(static_cast<char>(v >> 8));
      out.push_back(static_cast<char>(v & 0xff));
    }
  } else {
    for (int y = 0; y < raster.height(); ++y) {
      for (int x = 0; x < raster.width(); ++x) {
        if (x)
          out.push_back(' ');
        out += std::to_string(raster.at(x, y));
      }
      out.push_back('\n');
    }
  }
  write_file_atomic(path, out);
}

GrayRaster to_gray(const BinaryRaster &raster) {
  std::vector<std::uint16_t> values(raster.size());
  for (int y = 0; y < raster.height(); ++y)
    for (int x = 0; x < raster.width(); ++x)
      values[static_cast<std::size_t>(y) * raster.width() + x] = raster.get(x, y) ? 255 : 0;
  return GrayRaster(raster.width(), raster.height(), raster.pixel_size(), std::move(values));
}

void write_raster(const BinaryRaster &raster, const std::filesystem::path &path, PgmVariant variant) {
  write_raster(to_gray(raster), path, variant);
}

void write_color(const ColorRaster &raster, const std::filesystem::path &path) {
  std::string out = "P6\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
  out.append(reinterpret_cast<const char *>(raster.rgb.data()), raster.rgb.size());
  write_file_atomic(path, out);
}

BinaryRaster threshold(const GrayRaster &raster, std::uint16_t low, std::uint16_t high, bool invert) {
  if (low > high)
    throw std::invalid_argument("threshold: low > high");
  BinaryRaster out(raster.width(), raster.height(), raster.pixel_size());
  for (int y = 0; y < raster.height(); ++y)
    for (int x = 0; x < raster.width(); ++x) {
      const auto v = raster.at(x, y);
      if ((low <= v && v <= high) != invert)
        out.set(x, y, true);
    }
  if (out.count() == 0)
    log::warn("threshold produced an empty speckle");
  return out;
}

BinaryRaster rescale_nearest(const BinaryRaster &raster, double target_pixel_size) {
  if (!(target_pixel_size > 0.0))
    throw std::invalid_argument("rescale: target pixel size must be positive");
  const double ratio = raster.pixel_size() / target_pixel_size;
  const long long w = std::llround(raster.width() * ratio);
  const long long h = std::llround(raster.height() * ratio);
  if (w <= 0 || h <= 0)
    throw std::invalid_argument("rescale: zero output dimension");
  const double scale = target_pixel_size / raster.pixel_size();
  BinaryRaster out(static_cast<int>(w), static_cast<int>(h), target_pixel_size);
  auto src_index = [scale](int i, int bound) {
    const auto s = static_cast<long long>(std::floor((i + 0.5) * scale));
    return static_cast<int>(std::clamp<long long>(s, 0, bound - 1));
  };
  for (int y = 0; y < out.height(); ++y) {
    const int sy = src_index(y, raster.height());
    for (int x = 0; x < out.width(); ++x)
      if (raster.get(src_index(x, raster.width()), sy))
        out.set(x, y, true);
  }
  return out;
}

BinaryRaster fit_to(const BinaryRaster &raster, int width, int height) {
  BinaryRaster out(width, height, raster.pixel_size());
  const int w = std::min(width, raster.width());
  const int h = std::min(height, raster.height());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (raster.get(x, y))
        out.set(x, y, true);
  return out;
}

} // namespace speckle
