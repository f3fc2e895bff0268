#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "flow_test_util.hpp"
#include "nfqmc/flow.hpp"

using namespace nfqmc;
using nfqmc::testing::random_flow;

namespace {

const std::vector<TransformKind> kAffine2{TransformKind::affine, TransformKind::affine};
const std::vector<TransformKind> kMixed{TransformKind::rq_spline, TransformKind::affine,
                                        TransformKind::rq_spline, TransformKind::affine};

double det2(double a, double b, double c, double d) { return a * d - b * c; }

// log|det| of the central-difference Jacobian of forward at z (d = 2).
double fd_log_det(const FlowModel& flow, std::vector<double> z, double h = 1e-5) {
  double jac[2][2];
  for (std::size_t j = 0; j < 2; ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const auto xp = flow.forward(zp).first;
    const auto xm = flow.forward(zm).first;
    for (std::size_t i = 0; i < 2; ++i) jac[i][j] = (xp[i] - xm[i]) / (2 * h);
  }
  return std::log(std::abs(det2(jac[0][0], jac[0][1], jac[1][0], jac[1][1])));
}

FlowModel single_affine_layer(double s, double t) {
  // d = 2, keep x0, transform x1; conditioner 1 -> 2 with zero weights
  CouplingLayer layer;
  layer.mask = {true, false};
  layer.kind = TransformKind::affine;
  layer.conditioner.sizes = {1, 2};
  layer.conditioner.weights = {0.0, 0.0};
  layer.conditioner.biases = {kAffineScaleBound * std::atanh(s / kAffineScaleBound), t};
  return FlowModel(2, {layer});
}

}  // namespace

TEST(Flow, ZeroConditionerIsIdentity) {
  FlowArchitecture arch;
  arch.dim = 3;
  arch.layer_kinds = {TransformKind::affine, TransformKind::rq_spline, TransformKind::affine};
  const auto flow = FlowModel::create(arch, 1);
  const std::vector<double> z{0.3, -1.2, 2.5};
  const auto [x, ld] = flow.forward(z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], z[i], 1e-14);
  EXPECT_NEAR(ld, 0.0, 1e-14);
  const auto [zb, ldi] = flow.inverse(z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(zb[i], z[i], 1e-14);
  EXPECT_NEAR(ldi, 0.0, 1e-14);
}

TEST(Flow, ClosedFormAffineLayer) {
  const auto flow = single_affine_layer(std::log(2.0), 1.0);
  const std::vector<double> z{0.7, -0.4};
  const auto [x, ld] = flow.forward(z);
  EXPECT_DOUBLE_EQ(x[0], 0.7);
  EXPECT_NEAR(x[1], 2.0 * -0.4 + 1.0, 1e-14);
  EXPECT_NEAR(ld, std::log(2.0), 1e-14);
  // doubling a coordinate halves the density at the image point
  const double base = standard_normal_log_pdf<double>(z);
  EXPECT_NEAR(flow.log_density(x), base - std::log(2.0), 1e-13);
}

TEST(Flow, LogDetMatchesFiniteDifferenceJacobian) {
  Rng rng(21);
  for (const auto& kinds : {kAffine2, kMixed}) {
    const auto flow = random_flow(2, kinds, 7);
    for (int i = 0; i < 50; ++i) {
      const std::vector<double> z{2.0 * rng.normal(), 2.0 * rng.normal()};
      const double ld = flow.forward(z).second;
      const double ref = fd_log_det(flow, z);
      EXPECT_LT(std::abs(ld - ref) / std::max(1.0, std::abs(ref)), 1e-4) << ld << " vs " << ref;
    }
  }
}

TEST(Flow, RoundTripAndLogDetCancellation) {
  Rng rng(22);
  for (const auto& kinds : {kAffine2, kMixed}) {
    const auto flow = random_flow(2, kinds, 8, 0.8);
    double worst = 0.0, worst_ld = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const std::vector<double> z{1.5 * rng.normal(), 1.5 * rng.normal()};
      const auto [x, ld] = flow.forward(z);
      const auto [zb, ldi] = flow.inverse(x);
      for (std::size_t j = 0; j < 2; ++j) worst = std::max(worst, std::abs(zb[j] - z[j]));
      worst_ld = std::max(worst_ld, std::abs(ld + ldi));
    }
    EXPECT_LT(worst, 1e-8);
    EXPECT_LT(worst_ld, 1e-8);
  }
}

TEST(Flow, IdentityLogDensityIsStandardNormal) {
  FlowArchitecture arch;
  arch.layer_kinds = {TransformKind::rq_spline, TransformKind::rq_spline};
  const auto flow = FlowModel::create(arch, 3);
  const std::vector<double> origin{0.0, 0.0};
  EXPECT_NEAR(flow.log_density(origin), -std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(flow.log_density(origin), -1.837877, 1e-6);
}

TEST(Flow, DensityIntegratesToOne) {
  for (const auto& kinds : {kAffine2, kMixed}) {
    const auto flow = random_flow(2, kinds, 9, 0.4);
    const double h = 0.05;
    double total = 0.0;
    std::vector<double> x(2);
    for (int i = 0; i < 600; ++i) {
      x[0] = -15.0 + (i + 0.5) * h;
      for (int j = 0; j < 600; ++j) {
        x[1] = -15.0 + (j + 0.5) * h;
        total += std::exp(flow.log_density(x)) * h * h;
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-2);
  }
}

TEST(Flow, KeptCoordinatesHaveUnitJacobianRows) {
  const auto flow = random_flow(3, {TransformKind::rq_spline}, 10, 1.0);
  const auto& mask = flow.layers()[0].mask;
  const std::vector<double> z{0.2, -0.9, 1.1};
  const double h = 1e-6;
  for (std::size_t j = 0; j < 3; ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const auto xp = flow.forward(zp).first, xm = flow.forward(zm).first;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!mask[i]) continue;
      EXPECT_NEAR((xp[i] - xm[i]) / (2 * h), i == j ? 1.0 : 0.0, 1e-8);
    }
  }
}

TEST(Flow, PushedSamplesHaveFiniteDensity) {
  const auto flow = random_flow(4, kMixed, 11, 0.7);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.normal();
    EXPECT_TRUE(std::isfinite(flow.log_density(flow.forward(z).first)));
  }
}

TEST(Flow, OverflowNamesLayer) {
  const auto flow = single_affine_layer(4.0, 0.0);
  const std::vector<double> z{0.0, 1e308};
  try {
    (void)flow.forward(z);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(Flow, ValidatesStructure) {
  auto layer = single_affine_layer(0.0, 0.0).layers()[0];
  EXPECT_THROW(FlowModel(2, {layer, layer}), ContractError);  // masks do not alternate
  auto bad = layer;
  bad.mask = {true, true};
  EXPECT_THROW(FlowModel(2, {bad}), ContractError);
  bad = layer;
  bad.conditioner.weights.push_back(1.0);
  EXPECT_THROW(FlowModel(2, {bad}), ContractError);
  EXPECT_THROW(single_affine_layer(0, 0).forward(std::vector<double>{1.0}), ContractError);
}

TEST(Flow, FlatParametersRoundTrip) {
  const auto flow = random_flow(2, kMixed, 12);
  auto copy = FlowModel::create({2, kMixed, {8, 8}, Activation::tanh, 5, 3.0}, 99);
  copy.set_flat_parameters(flow.flat_parameters());
  const std::vector<double> x{0.1, 0.2};
  EXPECT_EQ(copy.log_density(x), flow.log_density(x));
}
