#pragma once

// Straightforward single-threaded versions of the parallel kernels. They are
// slow on purpose: tests compare the optimized kernels against them for exact
// equality, and the benchmark reports the speedup.

#include "speckle/ebsd.hpp"
#include "speckle/geometry.hpp"
#include "speckle/polywarp.hpp"
#include "speckle/raster.hpp"

namespace speckle::reference {

double dice(const BinaryRaster &a, const BinaryRaster &b);
BinaryRaster apply_affine(const BinaryRaster &speckle, const AffineParams &p);
BinaryRaster warp_raster(const BinaryRaster &speckle, const PolyWarp &warp);
double warped_dice(const BinaryRaster &moving, const PolyWarp &warp, const BinaryRaster &reference);
AlignResult grid_search_align(const BinaryRaster &moving, const BinaryRaster &fixed, const Range &tx, const Range &ty,
                              const Range &theta);
EbsdMap regenerate(const EbsdMap &map, const PolyWarp &warp, const BinaryRaster &phases, const PhaseIds &ids = {});

} // namespace speckle::reference
