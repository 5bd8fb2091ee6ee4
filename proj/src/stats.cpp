#include "drumloop/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drumloop {

std::size_t percentile_rank(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("percentile of an empty sample");
  const auto below = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) / 100.0));
  return std::clamp<std::size_t>(below + 1, 1, n);
}

double percentile(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t rank = percentile_rank(p, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace drumloop
