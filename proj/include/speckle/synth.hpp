#pragma once

#include "speckle/polywarp.hpp"
#include "speckle/raster.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace speckle {

enum class DistortionFamily { None, Affine, Barrel, Polynomial };

DistortionFamily parse_family(const std::string &name);
std::string to_string(DistortionFamily family);

/// Synthetic speckle pair: random non-overlapping disks plus a known warp.
struct SynthSpec {
  int width = 512;
  int height = 512;
  int disks = 200;
  double radius_min = 3.0;
  double radius_max = 8.0;
  double gap = 2.0; // minimum clearance between disk edges
  DistortionFamily family = DistortionFamily::Polynomial;
  int degree = 3;
  double magnitude = 15.0; // max displacement along the raster boundary, px
  double drift = 0.0;      // row-wise x drift amplitude at the first row, px
  double drift_decay = 0.2; // e-folding length as a fraction of the height
  double pixel_size = 1.0;
  std::uint64_t seed = 0;
};

struct Disk {
  double x, y, r;
};

/// The ground-truth map T sends a pixel of the clean (reference) frame to its
/// location in the distorted frame: T(x, y) = truth(x, y) + (drift(y), 0).
/// Distorted pixel q is set iff T^{-1}(q) lies inside a disk, so a perfect
/// correction backward-samples the distorted speckle through T.
struct SynthResult {
  SynthSpec spec;
  std::vector<Disk> disks;
  BinaryRaster clean;
  BinaryRaster distorted;
  PolyWarp truth;

  Point truth_map(double x, double y) const;
  std::string truth_text() const; // warp file with drift recorded as a comment
};

SynthResult synth(const SynthSpec &spec);

} // namespace speckle
