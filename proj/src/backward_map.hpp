#pragma once

// Internal: parallel backward-mapping driver shared by the raster warps.

#include "speckle/raster.hpp"

#include <cstddef>
#include <cstdint>

namespace speckle::detail {

// Sampler must provide:
//   Row row(int y) const;             per-row precomputation
//   bool sample(const Row&, int x) const;  true if output (x, y) is set
// Work is split by output word so no two threads write the same word.
template <class Sampler>
BinaryRaster backward_map(int width, int height, double pixel_size, const Sampler &sampler) {
  BinaryRasterBuilder builder(width, height, pixel_size);
  auto words = builder.words();
  const auto n = static_cast<std::size_t>(width) * height;
  const auto nwords = static_cast<std::ptrdiff_t>(words.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t wi = 0; wi < nwords; ++wi) {
    const std::size_t i0 = static_cast<std::size_t>(wi) * 64;
    const std::size_t i1 = std::min(i0 + 64, n);
    int y = static_cast<int>(i0 / width);
    int x = static_cast<int>(i0 % width);
    auto row = sampler.row(y);
    std::uint64_t word = 0;
    for (std::size_t i = i0; i < i1; ++i) {
      if (sampler.sample(row, x))
        word |= std::uint64_t{1} << (i - i0);
      if (++x == width && i + 1 < i1) {
        x = 0;
        row = sampler.row(++y);
      }
    }
    words[static_cast<std::size_t>(wi)] = word;
  }
  return std::move(builder).finish();
}

} // namespace speckle::detail
