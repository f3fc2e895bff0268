#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nfqmc/gaussian_map.hpp"
#include "nfqmc/qmc_sequences.hpp"

using namespace nfqmc;

namespace {

// Bisection on Phi(x) = erfc(-x / sqrt 2) / 2 for p <= 1/2; symmetric above.
double quantile_oracle(double p) {
  if (p > 0.5) return -quantile_oracle(1.0 - p);
  double lo = -40.0, hi = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

PointSet single(std::vector<double> u) {
  const std::size_t d = u.size();
  return PointSet(1, d, std::move(u), SequenceKind::mc, std::nullopt);
}

}  // namespace

TEST(InverseCdf, KnownValues) {
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959964, 1e-6);
  const auto g = inv_cdf_map(single({0.0}));
  EXPECT_TRUE(std::isfinite(g.values[0]));
  EXPECT_EQ(g.values[0], normal_quantile(0x1.0p-53));
  EXPECT_LT(g.values[0], -8.0);
}

TEST(InverseCdf, AccurateAgainstBisectionOracle) {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    // log-uniform in the tails plus uniform in the middle
    double p = i % 2 == 0 ? rng.uniform() : std::exp(-36.7 * rng.uniform());
    if (i % 4 == 3) p = 1.0 - p;
    p = clamp_uniform(p);
    worst = std::max(worst, std::abs(normal_quantile(p) - quantile_oracle(p)));
  }
  for (double p : {kUniformClamp, 1.0 - kUniformClamp, 1e-10, 0.425, 0.075}) {
    worst = std::max(worst, std::abs(normal_quantile(p) - quantile_oracle(p)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(InverseCdf, MonotoneAfterClamping) {
  const auto ps = sobol_points(12, 1);
  std::vector<std::pair<double, double>> pairs;
  const auto g = inv_cdf_map(ps);
  for (std::size_t i = 0; i < ps.size(); ++i) pairs.emplace_back(ps(i, 0), g.values[i]);
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_LT(pairs[i - 1].second, pairs[i].second);
}

TEST(BoxMuller, HandValue) {
  const auto g = box_muller_map(single({0.5, 0.25}));
  EXPECT_NEAR(g.values[0], 0.0, 1e-6);
  EXPECT_NEAR(g.values[1], 1.177410, 1e-6);
  EXPECT_EQ(g.map_kind, MapKind::box_muller);
}

TEST(BoxMuller, OddDimensionRejected) {
  EXPECT_THROW(box_muller_map(mc_points(4, 3, 1)), DimensionError);
}

TEST(BoxMuller, RadiusVanishesAsU1ApproachesOne) {
  const auto g = box_muller_map(single({std::nextafter(1.0, 0.0), 0.3}));
  EXPECT_NEAR(g.values[0], 0.0, 1e-7);
  EXPECT_NEAR(g.values[1], 0.0, 1e-7);
  const auto z = box_muller_map(single({0.0, 0.3}));
  EXPECT_TRUE(std::isfinite(z.values[0]));
}

TEST(GaussianMap, PushforwardMoments) {
  constexpr std::size_t n = 1 << 14;
  const auto ps = mc_points(n, 2, 2024);
  for (MapKind kind : {MapKind::inverse, MapKind::box_muller}) {
    const auto g = gaussian_map(ps, kind);
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += g.values[i * 2 + j];
        s2 += g.values[i * 2 + j] * g.values[i * 2 + j];
      }
      const double mean = s / n;
      const double var = s2 / n - mean * mean;
      EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(double(n)));
      EXPECT_NEAR(var, 1.0, 3.0 * std::sqrt(2.0 / n));
    }
  }
}

TEST(GaussianMap, Deterministic) {
  const auto ps = halton_points(64, 2, 9);
  EXPECT_EQ(inv_cdf_map(ps).values, inv_cdf_map(ps).values);
  EXPECT_EQ(box_muller_map(ps).values, box_muller_map(ps).values);
}
