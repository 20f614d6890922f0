#pragma once

#include "speckle/polywarp.hpp"
#include "speckle/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace speckle {

struct EbsdRecord {
  double phi1 = 0.0; // Euler angles, radians
  double Phi = 0.0;
  double phi2 = 0.0;
  double iq = 0.0; // image quality
  double ci = 0.0; // confidence index
  int phase = 0;

  /// Fill value for grid cells that receive no data.
  static EbsdRecord zero() { return {}; }
  bool operator==(const EbsdRecord &) const = default;
};

/// Square-grid EBSD map in TSL-style column layout.
struct EbsdMap {
  int cols = 0;
  int rows = 0;
  double step = 1.0; // micrometers
  std::vector<EbsdRecord> records; // row-major
  std::vector<std::string> header; // original '#' lines, preserved on write

  EbsdMap() = default;
  EbsdMap(int cols, int rows, double step);

  const EbsdRecord &at(int c, int r) const { return records[static_cast<std::size_t>(r) * cols + c]; }
  EbsdRecord &at(int c, int r) { return records[static_cast<std::size_t>(r) * cols + c]; }
};

/// Parses `phi1 Phi phi2 x y iq ci phase` rows; extra trailing columns are ignored.
/// Requires '# GRID: SqrGrid', '# XSTEP:', '# NCOLS_ODD:' and '# NROWS:'.
EbsdMap parse_ebsd(std::string_view text);
EbsdMap read_ebsd(const std::filesystem::path &path);

/// Writes the stored header (or a minimal one), an optional provenance
/// comment, then one record per line with 6 decimals.
std::string to_text(const EbsdMap &map, std::string_view provenance = {});
void write_ebsd(const EbsdMap &map, const std::filesystem::path &path, std::string_view provenance = {});

/// Cell selection used to build a speckle from a map.
struct SpeckleRule {
  enum class Kind { Phase, CiBelow, IqBelow };
  Kind kind = Kind::Phase;
  double value = 2.0;

  /// "phase=2", "ci<0.1" or "iq<120".
  static SpeckleRule parse(std::string_view text);
  std::string to_string() const;
  bool selects(const EbsdRecord &r) const;
};

BinaryRaster ebsd_speckle(const EbsdMap &map, const SpeckleRule &rule);

struct PhaseIds {
  int precipitate = 2;
  int matrix = 1;
};

/// Corrected map on the original grid: cell (c, r) takes the source record at
/// round(warp(c, r)), or the zero record when that falls off-grid. Phase ids
/// are then overwritten from `phases` (set -> precipitate, clear -> matrix).
EbsdMap regenerate(const EbsdMap &map, const PolyWarp &warp, const BinaryRaster &phases, const PhaseIds &ids = {});

double phase_fraction(const EbsdMap &map, int phase);

/// Map whose `ids.precipitate` cells follow `speckle`, with seeded random
/// orientations and quality values. Used for synthetic data and tests.
EbsdMap synthetic_map(const BinaryRaster &speckle, double step, std::uint64_t seed, const PhaseIds &ids = {});

} // namespace speckle
