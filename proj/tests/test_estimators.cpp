#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "flow_test_util.hpp"
#include "nfqmc/estimators.hpp"
#include "nfqmc/qmc_sequences.hpp"

using namespace nfqmc;

namespace {

TargetDensity standard_normal_target(std::size_t d) {
  TargetDensity t;
  t.name = "normal";
  t.dim = d;
  t.log_density = [](std::span<const double> x) { return standard_normal_log_pdf<double>(x); };
  t.log_norm_const = 0.0;
  return t;
}

FlowModel identity_flow(std::size_t d) {
  FlowArchitecture arch;
  arch.dim = d;
  arch.layer_kinds = {TransformKind::affine, TransformKind::rq_spline};
  return FlowModel::create(arch, 1);
}

WeightedSample synthetic(std::vector<double> points, std::vector<double> log_weights,
                         std::size_t d = 1, bool normalized = false) {
  WeightedSample ws;
  ws.d = d;
  ws.n = log_weights.size();
  ws.points = std::move(points);
  ws.log_weights = std::move(log_weights);
  ws.normalized = normalized;
  return ws;
}

const TestFunction kFirst{"x1", [](std::span<const double> x) { return x[0]; }};
const TestFunction kOne{"one", [](std::span<const double>) { return 1.0; }};

}  // namespace

TEST(WeightedSample, IdentityFlowOnItsOwnBaseHasZeroLogWeights) {
  const auto ws = make_weighted_sample(identity_flow(3), standard_normal_target(3),
                                       sobol_points(8, 3, 4), MapKind::inverse);
  ASSERT_EQ(ws.n, 256u);
  EXPECT_TRUE(ws.normalized);
  for (double lw : ws.log_weights) EXPECT_NEAR(lw, 0.0, 1e-12);
}

TEST(WeightedSample, ShiftedTargetKeepsNormalizedWeights) {
  const auto flow = nfqmc::testing::random_flow(2, {TransformKind::affine, TransformKind::rq_spline}, 3);
  const auto target = gmm40_target();
  const auto pts = mc_points(64, 2, 5);
  const auto a = make_weighted_sample(flow, target, pts, MapKind::inverse);
  const auto b = make_weighted_sample(flow, target.shifted(-12.5), pts, MapKind::inverse);
  for (std::size_t i = 0; i < a.n; ++i) EXPECT_NEAR(a.log_weights[i], b.log_weights[i], 1e-12);
}

TEST(WeightedSample, UnnormalizedTargetIsFlagged) {
  const auto ws = make_weighted_sample(identity_flow(2), dualmoon_target(2), mc_points(16, 2, 1),
                                       MapKind::box_muller);
  EXPECT_FALSE(ws.normalized);
  EXPECT_THROW(is_estimate(ws, kFirst), ContractError);
}

TEST(WeightedSample, DimensionMismatchRejected) {
  EXPECT_THROW(make_weighted_sample(identity_flow(2), dualmoon_target(2), mc_points(16, 3, 1),
                                    MapKind::inverse),
               ContractError);
  EXPECT_THROW(make_weighted_sample(identity_flow(2), dualmoon_target(3), mc_points(16, 2, 1),
                                    MapKind::inverse),
               ContractError);
}

TEST(IsEstimate, ConstantOneOnMatchedProposal) {
  const auto ws = make_weighted_sample(identity_flow(2), standard_normal_target(2),
                                       mc_points(100, 2, 2), MapKind::inverse);
  EXPECT_NEAR(is_estimate(ws, kOne), 1.0, 1e-12);
}

TEST(IsEstimate, HandComputed) {
  // points 1, 2, 3 with weights 0.5, 1, 2: (0.5 + 2 + 6) / 3
  const auto ws = synthetic({1, 2, 3}, {std::log(0.5), 0.0, std::log(2.0)}, 1, true);
  EXPECT_NEAR(is_estimate(ws, kFirst), 8.5 / 3.0, 1e-14);
  // SNIS: 8.5 / 3.5
  EXPECT_NEAR(snis_estimate(ws, kFirst), 8.5 / 3.5, 1e-14);
}

TEST(SnisEstimate, ScaleInvariant) {
  Rng rng(3);
  std::vector<double> pts(500), lw(500);
  for (auto& p : pts) p = rng.normal();
  for (auto& w : lw) w = 40.0 * rng.normal();
  const double base = snis_estimate(synthetic(pts, lw), kFirst);
  for (double c : {-700.0, -3.0, 250.0, 900.0}) {
    auto shifted = lw;
    for (auto& w : shifted) w += c;
    EXPECT_NEAR(snis_estimate(synthetic(pts, shifted), kFirst), base, 1e-12) << c;
  }
}

TEST(SnisEstimate, SinglePointAndDegenerate) {
  EXPECT_DOUBLE_EQ(snis_estimate(synthetic({4.25}, {-1000.0}), kFirst), 4.25);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(snis_estimate(synthetic({1, 2}, {ninf, ninf}), kFirst), DegenerateError);
  EXPECT_THROW(snis_estimate(synthetic({}, {}), kFirst), ContractError);
}

TEST(Imrth, AcceptanceOfEqualStatesIsOne) {
  for (double lw : {-50.0, 0.0, 3.0}) EXPECT_EQ(imrth_acceptance(lw, lw), 1.0);
  EXPECT_NEAR(imrth_acceptance(0.0, std::log(0.25)), 0.25, 1e-15);
  EXPECT_EQ(imrth_acceptance(0.0, 2.0), 1.0);
}

TEST(Imrth, ConstantWeightsAcceptEveryProposal) {
  std::vector<double> pts(50);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = static_cast<double>(i);
  const auto chain = imrth_chain(synthetic(pts, std::vector<double>(50, -2.0)), 9);
  ASSERT_EQ(chain.length(), 50u);
  EXPECT_EQ(chain.accepted, 49u);
  for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(chain.state(t)[0], pts[t]);
}

TEST(Imrth, StartsAtFirstProposalAndRejectsHopelessMoves) {
  const auto chain = imrth_chain(synthetic({7, 8, 9}, {0.0, -800.0, -800.0}), 1);
  EXPECT_EQ(chain.source, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_THROW(imrth_chain(synthetic({1}, {0.0}), 1), ContractError);
}

TEST(Imrth, InOrderProposalsGiveOrderDependentChain) {
  // Proposals alternate heavy (w = 1, even index) and light (w = 1/4, odd
  // index). The chain can only sit in the light state at odd times, where it
  // arrives with probability 1/4, so its light fraction is 1/8 rather than
  // the stationary 1/5.
  const std::size_t n = 40000;
  std::vector<double> pts(n), lw(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = static_cast<double>(i % 2);
    lw[i] = i % 2 ? std::log(0.25) : 0.0;
  }
  const auto chain = imrth_chain(synthetic(pts, lw), 21);
  EXPECT_NEAR(chain.mean(kFirst), 0.125, 4.0 * std::sqrt(0.25 * 0.75 / (n / 2)) / 2);
}

TEST(Iimc, ConstantWeightsReproduceInput) {
  std::vector<double> pts{3, 1, 4, 1, 5, 9, 2, 6};
  const auto chain = iimc_chain(synthetic(pts, std::vector<double>(8, 17.0)), std::nullopt, 4);
  ASSERT_EQ(chain.length(), 8u);
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(chain.state(t)[0], pts[t]);
}

TEST(Iimc, IntegerExpectationIsExact) {
  const auto chain = iimc_chain(synthetic({1, 2, 3}, {0.0, 0.0, 0.0}), 2.0, 5);
  EXPECT_EQ(chain.replicas, (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(chain.length(), 6u);
}

TEST(Iimc, FractionalExpectationIsUnbiased) {
  const std::size_t n = 100000;
  const auto chain = iimc_chain(synthetic(std::vector<double>(n, 0.0),
                                          std::vector<double>(n, std::log(0.3))),
                                1.0, 77);
  double total = 0.0;
  for (auto r : chain.replicas) {
    EXPECT_LE(r, 1u);
    total += static_cast<double>(r);
  }
  EXPECT_NEAR(total / n, 0.3, 0.005);
}

TEST(Iimc, Errors) {
  EXPECT_THROW(iimc_chain(synthetic({1, 2}, {0.0, 0.0}), 0.0, 1), ContractError);
  EXPECT_THROW(iimc_chain(synthetic({1, 2}, {-800.0, -800.0}), 1.0, 1), DegenerateError);
  EXPECT_THROW(iimc_chain(synthetic({}, {}), std::nullopt, 1), ContractError);
}

TEST(Ess, IidNormalsNearN) {
  const std::size_t n = 1 << 14;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(derive_seed(s, "ess", 0));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    const double r = ess(v) / n;
    EXPECT_GE(r, 0.8) << s;
    EXPECT_LE(r, 1.2) << s;
  }
}

TEST(Ess, PairwiseRepeatedHalvesN) {
  Rng rng(8);
  std::vector<double> v;
  for (int i = 0; i < 5000; ++i) {
    const double x = rng.normal();
    v.push_back(x);
    v.push_back(x);
  }
  EXPECT_NEAR(ess(v), 5000.0, 1000.0);
}

TEST(Ess, Ar1MatchesClosedForm) {
  // AR(1) with coefficient a: n (1 - a) / (1 + a)
  const double a = 0.6;
  const std::size_t n = 200000;
  Rng rng(12);
  std::vector<double> v(n);
  double x = 0.0;
  for (auto& e : v) e = x = a * x + rng.normal();
  EXPECT_NEAR(ess(v) / n, (1 - a) / (1 + a), 0.03);
}

TEST(Ess, ConstantSequenceIsDegenerate) {
  EXPECT_THROW(ess(std::vector<double>(100, 2.5)), DegenerateError);
  EXPECT_THROW(ess(std::vector<double>(3, 1.0)), ContractError);
}

TEST(Reports, RatioOfIdenticalSetsIsOne) {
  const auto a = make_report("mc", {1.0, 2.0, 4.0}, 2.0);
  EXPECT_DOUBLE_EQ(ratio_report(a, a), 1.0);
  EXPECT_NEAR(a.sd, std::sqrt(7.0 / 3.0), 1e-15);
  EXPECT_NEAR(a.mean_abs_error(), 1.0, 1e-15);
}

TEST(Reports, RatioHandValueAndErrors) {
  const auto mc = make_report("mc", {0.0, 4.0});
  const auto rq = make_report("rq", {1.0, 2.0});
  EXPECT_NEAR(ratio_report(mc, rq), 4.0, 1e-15);
  EXPECT_THROW(ratio_report(mc, make_report("flat", {3.0, 3.0})), DegenerateError);
  EXPECT_THROW(ratio_report(mc, make_report("one", {3.0})), ContractError);
}
