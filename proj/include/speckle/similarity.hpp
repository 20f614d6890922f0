#pragma once

#include "speckle/raster.hpp"

#include <cstddef>

namespace speckle {

/// |a ∩ b| over segmented pixels.
std::size_t overlap_count(const BinaryRaster &a, const BinaryRaster &b);

/// Dice overlap 2|a∩b| / (|a| + |b|), in [0, 1].
/// Throws std::invalid_argument on a size mismatch or when both speckles are empty.
double dice(const BinaryRaster &a, const BinaryRaster &b);

/// Dice from raw counts; shared by the fused warp-and-score kernels.
double dice_from_counts(std::size_t overlap, std::size_t count_a, std::size_t count_b);

} // namespace speckle
