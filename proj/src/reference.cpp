#include "speckle/reference.hpp"

#include <stdexcept>

namespace speckle::reference {

double dice(const BinaryRaster &a, const BinaryRaster &b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument("dice: dimension mismatch");
  std::size_t na = 0, nb = 0, both = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const bool p = a.get(x, y), q = b.get(x, y);
      na += p;
      nb += q;
      both += p && q;
    }
  if (na + nb == 0)
    throw std::invalid_argument("dice: both speckles are empty");
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

namespace {

template <class Map>
BinaryRaster backward(const BinaryRaster &src, Map map) {
  BinaryRaster out(src.width(), src.height(), src.pixel_size());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      const Point s = map(x, y);
      const int sx = round_px(s.x), sy = round_px(s.y);
      if (src.in_bounds(sx, sy) && src.get(sx, sy))
        out.set(x, y, true);
    }
  return out;
}

} // namespace

BinaryRaster apply_affine(const BinaryRaster &speckle, const AffineParams &p) {
  return backward(speckle, [&](int x, int y) { return affine_source(p, x, y, speckle.width(), speckle.height()); });
}

BinaryRaster warp_raster(const BinaryRaster &speckle, const PolyWarp &warp) {
  return backward(speckle, [&](int x, int y) { return warp.eval(x, y); });
}

double warped_dice(const BinaryRaster &moving, const PolyWarp &warp, const BinaryRaster &reference) {
  if (moving.width() != reference.width() || moving.height() != reference.height())
    throw std::invalid_argument("dice: dimension mismatch");
  return reference::dice(reference::warp_raster(moving, warp), reference);
}

AlignResult grid_search_align(const BinaryRaster &moving, const BinaryRaster &fixed, const Range &tx, const Range &ty,
                              const Range &theta) {
  AlignResult best;
  bool first = true;
  for (double t : theta.values())
    for (double dy : ty.values())
      for (double dx : tx.values()) {
        const AffineParams p{static_cast<int>(dx), static_cast<int>(dy), t};
        const double s = reference::dice(reference::apply_affine(moving, p), fixed);
        ++best.evaluated;
        if (first || s > best.score) {
          best.params = p;
          best.score = s;
          first = false;
        }
      }
  return best;
}

EbsdMap regenerate(const EbsdMap &map, const PolyWarp &warp, const BinaryRaster &phases, const PhaseIds &ids) {
  if (phases.width() != map.cols || phases.height() != map.rows)
    throw std::invalid_argument("regenerate: phase raster does not match the map grid");
  EbsdMap out = map;
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const Point s = warp.eval(c, r);
      const int sx = round_px(s.x), sy = round_px(s.y);
      EbsdRecord e = EbsdRecord::zero();
      if (sx >= 0 && sy >= 0 && sx < map.cols && sy < map.rows)
        e = map.at(sx, sy);
      e.phase = phases.get(c, r) ? ids.precipitate : ids.matrix;
      out.at(c, r) = e;
    }
  return out;
}

} // namespace speckle::reference
