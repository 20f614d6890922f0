#include "speckle/geometry.hpp"

#include "speckle/similarity.hpp"
#include "speckle/textio.hpp"

#include "backward_map.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace speckle {

ControlMesh::ControlMesh(int rows, int cols, std::vector<Point> points)
    : rows_(rows), cols_(cols), points_(std::move(points)) {
  if (rows < 1 || cols < 1 || points_.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("mesh: point count must equal rows*cols");
}

std::vector<double> ControlMesh::flatten() const {
  std::vector<double> flat;
  flat.reserve(2 * points_.size());
  for (const auto &p : points_) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  return flat;
}

ControlMesh ControlMesh::unflatten(int rows, int cols, std::span<const double> flat) {
  if (rows < 1 || cols < 1 || flat.size() != 2 * static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("mesh: flat vector has wrong dimension");
  std::vector<Point> pts(flat.size() / 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    pts[i] = {flat[2 * i], flat[2 * i + 1]};
  return ControlMesh(rows, cols, std::move(pts));
}

ControlMesh ControlMesh::rounded() const {
  auto pts = points_;
  for (auto &p : pts)
    p = {std::floor(p.x + 0.5), std::floor(p.y + 0.5)};
  return ControlMesh(rows_, cols_, std::move(pts));
}

ControlMesh regular_mesh(int rows, int cols, int width, int height) {
  if (rows < 2 || cols < 2)
    throw std::invalid_argument("regular_mesh: rows and cols must be >= 2");
  if (width < 1 || height < 1)
    throw std::invalid_argument("regular_mesh: raster must be nonempty");
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      pts.push_back({static_cast<double>(c) * (width - 1) / (cols - 1),
                     static_cast<double>(r) * (height - 1) / (rows - 1)});
  return ControlMesh(rows, cols, std::move(pts));
}

namespace {

struct AffineFrame {
  double c, s, cx, cy;
};

AffineFrame frame_of(const AffineParams &p, int width, int height) {
  const double t = p.theta_deg * std::numbers::pi / 180.0;
  return {std::cos(t), std::sin(t), 0.5 * (width - 1), 0.5 * (height - 1)};
}

// Sample (sx, sy) = R(-theta) (x - c, y - c) + c - t.
class AffineSampler {
public:
  AffineSampler(const BinaryRaster &src, const AffineParams &p)
      : src_(src), f_(frame_of(p, src.width(), src.height())), tx_(p.tx), ty_(p.ty) {}

  struct Row {
    double bx, by;
  };
  Row row(int y) const {
    const double dy = y - f_.cy;
    return {f_.s * dy + f_.cx - tx_, f_.c * dy + f_.cy - ty_};
  }
  bool sample(const Row &r, int x) const {
    const double dx = x - f_.cx;
    return src_.sample(f_.c * dx + r.bx, -f_.s * dx + r.by);
  }

private:
  const BinaryRaster &src_;
  AffineFrame f_;
  double tx_, ty_;
};

} // namespace

Point affine_source(const AffineParams &p, double x, double y, int width, int height) {
  const auto f = frame_of(p, width, height);
  const double dx = x - f.cx, dy = y - f.cy;
  // Same association as AffineSampler, so both agree to the last bit.
  const double bx = f.s * dy + f.cx - p.tx, by = f.c * dy + f.cy - p.ty;
  return {f.c * dx + bx, -f.s * dx + by};
}

BinaryRaster apply_affine(const BinaryRaster &speckle, const AffineParams &p) {
  return detail::backward_map(speckle.width(), speckle.height(), speckle.pixel_size(), AffineSampler(speckle, p));
}

double affine_dice(const BinaryRaster &moving, const AffineParams &p, const BinaryRaster &fixed) {
  if (moving.width() != fixed.width() || moving.height() != fixed.height())
    throw std::invalid_argument("dice: dimension mismatch");
  const AffineSampler sampler(moving, p);
  const int w = moving.width();
  const int h = moving.height();
  std::size_t overlap = 0, count = 0;
#pragma omp parallel for reduction(+ : overlap, count) schedule(static)
  for (int y = 0; y < h; ++y) {
    const auto row = sampler.row(y);
    const auto ref = fixed.words();
    const std::size_t base = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      if (!sampler.sample(row, x))
        continue;
      const std::size_t i = base + x;
      ++count;
      overlap += (ref[i >> 6] >> (i & 63)) & 1u;
    }
  }
  return dice_from_counts(overlap, count, fixed.count());
}

std::vector<double> Range::values() const {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
    throw std::invalid_argument("range: non-finite bound");
  if (start > stop)
    throw std::invalid_argument("range: empty lattice (start > stop)");
  if (start == stop)
    return {start};
  if (!(step > 0.0))
    throw std::invalid_argument("range: step must be positive");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 1'000'000)
    throw std::invalid_argument("range: lattice too large");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = start + static_cast<double>(i) * step;
  return v;
}

Range Range::parse(std::string_view text) {
  std::vector<double> parts;
  std::size_t pos = 0;
  while (true) {
    const auto colon = text.find(':', pos);
    const auto tok = text.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos);
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
      throw std::invalid_argument("range: cannot parse '" + std::string(text) + "' (expected a:b:step)");
    parts.push_back(v);
    if (colon == std::string_view::npos)
      break;
    pos = colon + 1;
  }
  Range r;
  switch (parts.size()) {
  case 1: r = single(parts[0]); break;
  case 2: r = {parts[0], parts[1], 1.0}; break;
  case 3: r = {parts[0], parts[1], parts[2]}; break;
  default: throw std::invalid_argument("range: too many fields in '" + std::string(text) + "'");
  }
  r.values(); // validate
  return r;
}

std::string Range::to_string() const {
  return format_double(start) + ":" + format_double(stop) + ":" + format_double(step);
}

AlignResult grid_search_align(const BinaryRaster &moving, const BinaryRaster &fixed, const Range &tx,
                              const Range &ty, const Range &theta) {
  if (moving.width() != fixed.width() || moving.height() != fixed.height())
    throw std::invalid_argument("align: moving and fixed must have identical dimensions");
  const auto txs = tx.values();
  const auto tys = ty.values();
  const auto ths = theta.values();
  for (const auto *vals : {&txs, &tys})
    for (double v : *vals)
      if (v != std::floor(v))
        throw std::invalid_argument("align: translations must be whole pixels");
  if (fixed.count() == 0)
    throw std::invalid_argument("align: fixed speckle is empty");

  const std::size_t ntx = txs.size(), nty = tys.size();
  const auto total = static_cast<std::ptrdiff_t>(ntx * nty * ths.size());
  auto params_at = [&](std::ptrdiff_t i) {
    const auto u = static_cast<std::size_t>(i);
    return AffineParams{static_cast<int>(txs[u % ntx]), static_cast<int>(tys[(u / ntx) % nty]), ths[u / (ntx * nty)]};
  };

  std::vector<double> scores(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < total; ++i)
    scores[static_cast<std::size_t>(i)] = affine_dice(moving, params_at(i), fixed);

  std::ptrdiff_t best = 0;
  for (std::ptrdiff_t i = 1; i < total; ++i)
    if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)])
      best = i;
  return {params_at(best), scores[static_cast<std::size_t>(best)], static_cast<std::size_t>(total)};
}

std::string to_key_values(const AlignResult &r) {
  return "tx=" + std::to_string(r.params.tx) + "\nty=" + std::to_string(r.params.ty) +
         "\ntheta=" + format_double(r.params.theta_deg) + "\nscore=" + format_double(r.score) + "\n";
}

AlignResult align_from_key_values(std::string_view text) {
  const auto kv = parse_key_values(text);
  auto need = [&](const char *key) -> const std::string & {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error(std::string("alignment file missing key: ") + key);
    return it->second;
  };
  AlignResult r;
  r.params.tx = std::stoi(need("tx"));
  r.params.ty = std::stoi(need("ty"));
  r.params.theta_deg = std::stod(need("theta"));
  if (auto it = kv.find("score"); it != kv.end())
    r.score = std::stod(it->second);
  return r;
}

} // namespace speckle
