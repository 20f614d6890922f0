#include "speckle/similarity.hpp"

#include <bit>
#include <stdexcept>

namespace speckle {

std::size_t overlap_count(const BinaryRaster &a, const BinaryRaster &b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument("dice: dimension mismatch");
  const auto wa = a.words();
  const auto wb = b.words();
  const auto n = static_cast<std::ptrdiff_t>(wa.size());
  std::size_t overlap = 0;
#pragma omp parallel for reduction(+ : overlap) schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    overlap += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  return overlap;
}

double dice_from_counts(std::size_t overlap, std::size_t count_a, std::size_t count_b) {
  if (count_a + count_b == 0)
    throw std::invalid_argument("dice: both speckles are empty");
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(count_a + count_b);
}

double dice(const BinaryRaster &a, const BinaryRaster &b) {
  const std::size_t overlap = overlap_count(a, b);
  return dice_from_counts(overlap, a.count(), b.count());
}

} // namespace speckle
