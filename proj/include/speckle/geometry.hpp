#pragma once

#include "speckle/raster.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace speckle {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point &) const = default;
};

/// Row-major grid of 2-D control points. Flattens to (x0, y0, x1, y1, ...).
class ControlMesh {
public:
  ControlMesh() = default;
  ControlMesh(int rows, int cols, std::vector<Point> points);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return points_.size(); }
  std::span<const Point> points() const { return points_; }
  const Point &at(int r, int c) const { return points_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::vector<double> flatten() const;
  static ControlMesh unflatten(int rows, int cols, std::span<const double> flat);

  /// Copy with every coordinate rounded to the nearest pixel.
  ControlMesh rounded() const;

  bool operator==(const ControlMesh &) const = default;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Point> points_;
};

/// Evenly spaced mesh whose corners sit on (0,0) and (width-1, height-1).
ControlMesh regular_mesh(int rows, int cols, int width, int height);

struct AffineParams {
  int tx = 0;
  int ty = 0;
  double theta_deg = 0.0;
  bool operator==(const AffineParams &) const = default;
};

/// Where output pixel (x, y) samples its source under `p`: rotate by -theta
/// about the raster center, then translate by (-tx, -ty).
Point affine_source(const AffineParams &p, double x, double y, int width, int height);

/// Backward nearest-neighbor affine warp; out-of-bounds samples are background.
BinaryRaster apply_affine(const BinaryRaster &speckle, const AffineParams &p);

/// dice(apply_affine(moving, p), fixed) without materializing the warped raster.
double affine_dice(const BinaryRaster &moving, const AffineParams &p, const BinaryRaster &fixed);

/// Inclusive lattice start, start+step, ... <= stop. A zero step is only
/// valid for a singleton (start == stop).
struct Range {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> values() const;
  static Range parse(std::string_view text); // "a:b:step", "a:b" (step 1) or "a"
  static Range single(double v) { return {v, v, 1.0}; }
  std::string to_string() const;
};

struct AlignResult {
  AffineParams params;
  double score = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive search over the (theta, ty, tx) lattice maximizing
/// dice(apply_affine(moving, p), fixed). Ties resolve to the first maximum
/// in that lexicographic order, independent of thread count.
AlignResult grid_search_align(const BinaryRaster &moving, const BinaryRaster &fixed, const Range &tx,
                              const Range &ty, const Range &theta);

std::string to_key_values(const AlignResult &r);
AlignResult align_from_key_values(std::string_view text);

} // namespace speckle
