#pragma once

#include "speckle/geometry.hpp"
#include "speckle/raster.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace speckle {

/// Number of monomials x^k y^l with k + l <= degree.
constexpr int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// Position of x^k y^l in the coefficient list. Terms are ordered by total
/// degree n = 0..P, and within a degree by k = 0..n.
constexpr int monomial_index(int k, int l) {
  const int n = k + l;
  return n * (n + 1) / 2 + k;
}

/// Bivariate polynomial coordinate map (x, y) -> (x', y') in pixel units.
class PolyWarp {
public:
  PolyWarp() = default;
  PolyWarp(int degree, std::vector<double> cx, std::vector<double> cy);

  static PolyWarp identity(int degree);
  static PolyWarp translation(int degree, double dx, double dy);

  int degree() const { return degree_; }
  std::span<const double> cx() const { return cx_; }
  std::span<const double> cy() const { return cy_; }

  Point eval(double x, double y) const;

  /// Per-row form: for a fixed y, x' and y' are polynomials in x alone.
  /// Writes degree+1 coefficients (ascending powers of x) for each.
  void row_coefficients(double y, std::span<double> ax, std::span<double> ay) const;

  bool operator==(const PolyWarp &) const = default;

private:
  int degree_ = 0;
  std::vector<double> cx_;
  std::vector<double> cy_;
};

/// Least-squares fitter for a fixed set of source points. The design matrix
/// is built in coordinates normalized to [-1, 1] and factorized once, so
/// repeated fits against new targets only cost a triangular solve.
class PolyFitter {
public:
  PolyFitter(std::span<const Point> source, int degree);
  PolyFitter(const ControlMesh &source, int degree) : PolyFitter(source.points(), degree) {}

  int degree() const { return degree_; }
  std::size_t point_count() const { return n_points_; }

  /// Minimizer of sum_i |target_i - f(source_i)|^2.
  PolyWarp fit(std::span<const Point> target) const;
  PolyWarp fit(const ControlMesh &target) const { return fit(target.points()); }

private:
  int degree_;
  std::size_t n_points_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd to_raw_; // normalized-basis coefficients -> raw pixel basis
};

PolyWarp fit(const ControlMesh &source, const ControlMesh &target, int degree);

/// Sum of squared residuals |target_i - warp(source_i)|^2.
double fit_residual(const PolyWarp &warp, std::span<const Point> source, std::span<const Point> target);

/// Backward nearest-neighbor resampling: output(x, y) = input(round(warp(x, y))).
BinaryRaster warp_raster(const BinaryRaster &speckle, const PolyWarp &warp);

/// dice(warp_raster(moving, warp), reference) without materializing the warp.
double warped_dice(const BinaryRaster &moving, const PolyWarp &warp, const BinaryRaster &reference);

/// Plain-text form: `degree P`, `cx ...`, `cy ...` with 17 significant digits.
std::string to_text(const PolyWarp &warp, std::string_view comment = {});
PolyWarp warp_from_text(std::string_view text);
void write_warp(const PolyWarp &warp, const std::filesystem::path &path, std::string_view comment = {});
PolyWarp read_warp(const std::filesystem::path &path);

} // namespace speckle
