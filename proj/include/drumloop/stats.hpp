#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drumloop {

// 1-based rank of the p-th percentile among n sorted values: floor(p*n/100)+1,
// clamped to [1, n]. The value at this rank is the smallest one with at least
// p percent of the sample strictly below it, so 98 over 1..100 gives 99 and
// 75 over 128 values keeps exactly the top 32.
std::size_t percentile_rank(double p, std::size_t n);

// Value at percentile_rank(p, values.size()) of the sorted values.
// Throws std::invalid_argument on an empty input.
double percentile(std::span<const double> values, double p);

double median(std::span<const double> values);

}  // namespace drumloop
