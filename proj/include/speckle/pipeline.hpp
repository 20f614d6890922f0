#pragma once

#include "speckle/cmaes.hpp"
#include "speckle/ebsd.hpp"
#include "speckle/geometry.hpp"
#include "speckle/polywarp.hpp"
#include "speckle/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace speckle {

struct AlignmentRanges {
  Range tx{-20, 20, 1};
  Range ty{-20, 20, 1};
  Range theta = Range::single(0.0);
};

/// Optimizer settings. Defaults: 25x25 mesh, sigma0 = 20 px, degree 3.
struct CorrectionSettings {
  int mesh_rows = 25;
  int mesh_cols = 25;
  double sigma0 = 20.0;
  int degree = 3;
  long long budget = 5000; // fitness evaluations
  int lambda = 0;          // 0 = default population size
  std::uint64_t seed = 0;
  bool diagonal = false;
  AlignmentRanges ranges;

  void validate() const;
};

/// Rigid step. Scoring happens on the EBSD grid: the BSE speckle is rescaled
/// to the EBSD step, cropped/padded to the EBSD size, then moved onto the
/// EBSD speckle. `reference` is that moved BSE speckle.
struct Prealignment {
  AlignResult align;
  BinaryRaster reference;
};

Prealignment prealign(const BinaryRaster &ebsd, const BinaryRaster &bse, const AlignmentRanges &ranges);

/// Non-rigid step. The EBSD speckle is warped toward the fixed reference.
struct MeshOptimization {
  ControlMesh regular;
  ControlMesh mesh; // rounded final mean
  PolyWarp warp;
  double final_score = 0.0;
  double best_score = 0.0; // best candidate seen; may exceed final_score
  std::vector<GenerationRecord> trace;
  long long evaluations = 0;
  int repairs = 0;
  BinaryRaster corrected;
};

MeshOptimization optimize_mesh(const BinaryRaster &ebsd, const BinaryRaster &reference,
                               const CorrectionSettings &settings);

struct Correction {
  Prealignment pre;
  MeshOptimization opt;
};

Correction correct_speckles(const BinaryRaster &ebsd, const BinaryRaster &bse, const CorrectionSettings &settings);

struct RepeatResult {
  AlignResult align;
  std::vector<std::uint64_t> seeds;
  std::vector<MeshOptimization> runs;
  double mean_score = 0.0;
  double std_score = 0.0;     // sample standard deviation
  double mean_pairwise = 0.0; // mean dice between corrected speckles of distinct runs
  int width = 0;
  int height = 0;
  std::vector<double> heatmap; // per pixel: fraction of runs with the corrected speckle set

  GrayRaster heatmap_raster() const; // 0..255
};

/// Prealigns once, then optimizes with seeds seed, seed+1, ...
RepeatResult repeat_speckles(const BinaryRaster &ebsd, const BinaryRaster &bse, const CorrectionSettings &settings,
                             int runs);

/// Blue background, BSE-only pixels white, EBSD pixels red on top.
ColorRaster render_overlay(const BinaryRaster &ebsd, const BinaryRaster &bse);

/// Mean displacement |fitted - truth| over pixels, split at a margin (as a
/// fraction of each dimension) into interior and border sets.
struct WarpError {
  double interior = 0.0;
  double border = 0.0;
  double max = 0.0;
};

WarpError warp_error(const PolyWarp &fitted, const std::function<Point(double, double)> &truth, int width, int height,
                     double margin = 0.1, int stride = 2);

struct RunConfig {
  CorrectionSettings settings;
  std::filesystem::path ebsd_map;  // TSL-style text map, or
  std::filesystem::path ebsd_mask; // a ready-made speckle graymap
  SpeckleRule ebsd_rule;
  std::filesystem::path bse_image; // grayscale, thresholded with bse_low..bse_high, or
  std::filesystem::path bse_mask;  // a ready-made speckle graymap
  int bse_low = 128;
  int bse_high = 65535;
  bool bse_invert = false;
  std::optional<double> bse_pixel_size;
  PhaseIds phases;
  std::filesystem::path out_dir = ".";

  /// Throws std::invalid_argument for bad values or missing files.
  void validate() const;
};

struct RunReport {
  AlignResult prealign;
  double final_score = 0.0;
  double best_score = 0.0;
  bool regressed = false; // final score below the prealignment score
  long long evaluations = 0;
  int repairs = 0;
  std::uint64_t seed = 0;
  std::filesystem::path warp_path;
  std::filesystem::path trace_path;
  std::filesystem::path map_path; // empty without an input map
  double wall_seconds = 0.0;

  /// key=value lines. Wall-clock time is only included on request so the
  /// report file stays reproducible.
  std::string to_text(bool with_wall_clock = false) const;
};

RunReport run_correction(const RunConfig &cfg);

struct RepeatReport {
  RepeatResult result;
  std::filesystem::path stats_path;
  std::filesystem::path heatmap_path;
  double wall_seconds = 0.0;

  std::string to_text(bool with_wall_clock = false) const;
};

RepeatReport run_repeat(const RunConfig &cfg, int runs);

} // namespace speckle
