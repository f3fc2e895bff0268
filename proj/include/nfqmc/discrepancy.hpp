#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nfqmc/errors.hpp"
#include "nfqmc/point_set.hpp"

namespace nfqmc {

inline constexpr double kMaxDiscrepancyCorners = 1e7;

/// Exact star discrepancy by exhaustive search over the critical grid.
///
/// The supremum over anchored boxes [0,a) is attained, as a value or a
/// one-sided limit, at corners whose coordinates are point coordinates or 1.
/// At each corner both the open count (x < a) and the closed count (x <= a)
/// are compared with the box volume. Cost is O(corners * n * d).
inline double star_discrepancy(const PointSet& points) {
  const std::size_t n = points.size();
  const std::size_t d = points.dim();
  std::vector<std::vector<double>> grid(d);
  double corners = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    auto& g = grid[j];
    g.reserve(n + 1);
    for (std::size_t i = 0; i < n; ++i) g.push_back(points(i, j));
    g.push_back(1.0);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    corners *= static_cast<double>(g.size());
  }
  if (corners > kMaxDiscrepancyCorners) {
    throw SizeLimitError("star_discrepancy: " + std::to_string(corners) +
                         " candidate corners exceed the 1e7 limit");
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> a(d);
  double worst = 0.0;
  while (true) {
    double volume = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      a[j] = grid[j][idx[j]];
      volume *= a[j];
    }
    std::size_t open = 0, closed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool in_open = true, in_closed = true;
      for (std::size_t j = 0; j < d && in_closed; ++j) {
        const double x = points(i, j);
        if (!(x < a[j])) in_open = false;
        if (!(x <= a[j])) in_closed = false;
      }
      open += in_open;
      closed += in_closed;
    }
    worst = std::max(worst, volume - static_cast<double>(open) * inv_n);
    worst = std::max(worst, static_cast<double>(closed) * inv_n - volume);

    std::size_t j = 0;
    while (j < d && ++idx[j] == grid[j].size()) idx[j++] = 0;
    if (j == d) break;
  }
  return worst;
}

}  // namespace nfqmc
