#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nfqmc/discrepancy.hpp"
#include "nfqmc/qmc_sequences.hpp"

using namespace nfqmc;

namespace {

PointSet one_dim(std::vector<double> xs) {
  const std::size_t n = xs.size();
  return PointSet(n, 1, std::move(xs), SequenceKind::mc, std::nullopt);
}

// Closed form in d = 1: D* = 1/(2n) + max_i |x_(i) - (2i - 1)/(2n)|.
double one_dim_closed_form(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    worst = std::max(worst, std::abs(xs[i] - (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n)));
  }
  return 1.0 / (2.0 * n) + worst;
}

}  // namespace

TEST(StarDiscrepancy, HandValues) {
  EXPECT_DOUBLE_EQ(star_discrepancy(one_dim({0.5})), 0.5);
  EXPECT_DOUBLE_EQ(star_discrepancy(one_dim({0.25, 0.75})), 0.25);
  EXPECT_DOUBLE_EQ(star_discrepancy(one_dim({0.0})), 1.0);
}

TEST(StarDiscrepancy, MatchesOneDimensionalClosedForm) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.uniform();
    EXPECT_NEAR(star_discrepancy(one_dim(xs)), one_dim_closed_form(xs), 1e-14);
  }
}

TEST(StarDiscrepancy, VanDerCorputNetIsExact) {
  for (unsigned m = 0; m <= 10; ++m) {
    EXPECT_EQ(star_discrepancy(sobol_points(m, 1)), std::ldexp(1.0, -static_cast<int>(m))) << m;
  }
}

TEST(StarDiscrepancy, DominatesGridSearchInTwoDimensions) {
  // any box evaluated directly is a lower bound on the supremum
  const auto ps = halton_points(20, 2, 3);
  const double exact = star_discrepancy(ps);
  double lower = 0.0;
  for (int a = 1; a <= 200; ++a) {
    for (int b = 1; b <= 200; ++b) {
      const double x = a / 200.0, y = b / 200.0;
      std::size_t inside = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) inside += ps(i, 0) < x && ps(i, 1) < y;
      lower = std::max(lower, std::abs(static_cast<double>(inside) / 20.0 - x * y));
    }
  }
  EXPECT_GE(exact + 1e-15, lower);
  EXPECT_LT(exact - lower, 0.05);
}

TEST(StarDiscrepancy, RefusesHugeInstances) {
  EXPECT_THROW(star_discrepancy(mc_points(400, 3, 1)), SizeLimitError);
}
