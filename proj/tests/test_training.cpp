#include <gtest/gtest.h>

#include <chrono>
#include <iostream>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "flow_test_util.hpp"
#include "nfqmc/estimators.hpp"
#include "nfqmc/gaussian_map.hpp"
#include "nfqmc/qmc_sequences.hpp"
#include "nfqmc/training.hpp"

using namespace nfqmc;
using nfqmc::testing::random_flow;

namespace {

std::vector<double> normal_block(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n * d);
  for (auto& v : out) v = rng.normal();
  return out;
}

TargetDensity standard_normal_target(std::size_t d) {
  TargetDensity t;
  t.name = "normal";
  t.dim = d;
  t.log_density = [](std::span<const double> x) { return standard_normal_log_pdf<double>(x); };
  t.log_density_ad = [](std::span<const ad::Var> x) { return standard_normal_log_pdf<ad::Var>(x); };
  t.log_norm_const = 0.0;
  return t;
}

// Central differences of a scalar loss in parameter k (step 1e-6).
template <class Loss>
double fd_param(const FlowModel& flow, std::size_t k, Loss&& loss) {
  const double h = 1e-6;
  auto p = flow.flat_parameters();
  auto fp = flow, fm = flow;
  p[k] += h;
  fp.set_flat_parameters(p);
  p[k] -= 2 * h;
  fm.set_flat_parameters(p);
  return (loss(fp) - loss(fm)) / (2 * h);
}

const std::vector<TransformKind> kAffine2{TransformKind::affine, TransformKind::affine};
const std::vector<TransformKind> kSpline2{TransformKind::rq_spline, TransformKind::rq_spline};

}  // namespace

TEST(ForwardKl, IdentityFlowGivesGaussianEntropy) {
  FlowArchitecture arch;
  arch.layer_kinds = kSpline2;
  const auto flow = FlowModel::create(arch, 1);
  const auto samples = normal_block(1 << 14, 2, 3);
  const auto lg = forward_kl_loss(flow, samples);
  // -E log N(x; 0, I_2) = log(2 pi) + 1, per-sample sd 1
  EXPECT_NEAR(lg.loss, std::log(2.0 * std::numbers::pi) + 1.0, 4.0 / 128.0);
}

TEST(ForwardKl, GradientsMatchFiniteDifferences) {
  for (const auto& kinds : {kAffine2, kSpline2}) {
    const auto flow = random_flow(2, kinds, 31, 0.6);
    const auto samples = normal_block(64, 2, 5);
    const auto lg = forward_kl_loss(flow, samples);
    Rng pick(6);
    for (int c = 0; c < 12; ++c) {
      const std::size_t k = pick.below(flow.parameter_count());
      const double fd = fd_param(flow, k, [&](const FlowModel& f) {
        return forward_kl_loss(f, samples).loss;
      });
      EXPECT_LT(std::abs(lg.gradient[k] - fd) / std::max(1.0, std::abs(fd)), 1e-4)
          << "param " << k << " tape " << lg.gradient[k] << " fd " << fd;
    }
  }
}

TEST(ForwardKl, DuplicatedBatchKeepsLoss) {
  const auto flow = random_flow(2, kSpline2, 2, 0.5);
  auto samples = normal_block(100, 2, 8);
  const auto once = forward_kl_loss(flow, samples);
  samples.insert(samples.end(), samples.begin(), samples.end());
  const auto twice = forward_kl_loss(flow, samples);
  EXPECT_NEAR(once.loss, twice.loss, 1e-12);
  for (std::size_t k = 0; k < once.gradient.size(); ++k) {
    EXPECT_NEAR(once.gradient[k], twice.gradient[k], 1e-12);
  }
}

TEST(ForwardKl, NonFiniteSampleRejected) {
  const auto flow = random_flow(2, kAffine2, 2);
  std::vector<double> bad{0.0, std::nan("")};
  EXPECT_THROW(forward_kl_loss(flow, bad), ContractError);
}

TEST(ReverseKl, IdentityFlowOnNormalTargetIsStationary) {
  FlowArchitecture arch;
  arch.layer_kinds = {TransformKind::affine, TransformKind::rq_spline};
  const auto flow = FlowModel::create(arch, 4);
  const auto target = standard_normal_target(2);
  // largest component at 2^12 scrambled Sobol' points, full norm at 2^16
  const auto small = reverse_kl_loss(flow, target, inv_cdf_map(sobol_points(12, 2, 17)).values);
  EXPECT_NEAR(small.loss, std::log(2.0 * std::numbers::pi) + 1.0, 1e-3);
  double largest = 0.0;
  for (double g : small.gradient) largest = std::max(largest, std::abs(g));
  EXPECT_LT(largest, 1e-3);
  const auto big = reverse_kl_loss(flow, target, inv_cdf_map(sobol_points(16, 2, 17)).values);
  double norm = 0.0;
  for (double g : big.gradient) norm += g * g;
  EXPECT_LT(std::sqrt(norm), 1e-3);
}

TEST(ReverseKl, GradientsMatchFiniteDifferences) {
  const auto target = dualmoon_target(2);
  for (const auto& kinds : {kAffine2, kSpline2}) {
    const auto flow = random_flow(2, kinds, 41, 0.6);
    const auto base = normal_block(64, 2, 9);
    const auto lg = reverse_kl_loss(flow, target, base);
    Rng pick(10);
    for (int c = 0; c < 12; ++c) {
      const std::size_t k = pick.below(flow.parameter_count());
      const double fd = fd_param(flow, k, [&](const FlowModel& f) {
        return reverse_kl_loss(f, target, base).loss;
      });
      EXPECT_LT(std::abs(lg.gradient[k] - fd) / std::max(1.0, std::abs(fd)), 1e-4)
          << "param " << k << " tape " << lg.gradient[k] << " fd " << fd;
    }
  }
}

TEST(ReverseKl, ScalingTargetShiftsLossOnly) {
  const auto target = dualmoon_target(2);
  const double log_c = 3.7;
  const auto scaled = target.shifted(log_c);
  const auto flow = random_flow(2, kSpline2, 12, 0.5);
  const auto base = normal_block(128, 2, 13);
  const auto a = reverse_kl_loss(flow, target, base);
  const auto b = reverse_kl_loss(flow, scaled, base);
  EXPECT_NEAR(b.loss, a.loss - log_c, 1e-10);
  for (std::size_t k = 0; k < a.gradient.size(); ++k) EXPECT_NEAR(a.gradient[k], b.gradient[k], 1e-10);
}

TEST(ReverseKl, MostlyMaskedBatchDiverges) {
  auto target = dualmoon_target(2);
  target.log_density_ad = [](std::span<const ad::Var> x) {
    return x[0].v > -0.5 ? ad::Var(std::nan("")) : ad::Var(0.0) - x[0] * x[0];
  };
  const auto flow = random_flow(2, kAffine2, 1, 0.1);
  EXPECT_THROW(reverse_kl_loss(flow, target, normal_block(64, 2, 1)), TrainingDivergence);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0, 3.5};
  const std::vector<double> g(3, 0.0);
  Adam adam(3, 1e-2);
  for (int i = 0; i < 10; ++i) adam.step(p, g);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.5}));
}

TEST(Train, ForwardKlOnGmmSamplesReducesLoss) {
  FlowArchitecture arch;
  arch.layer_kinds = {TransformKind::affine, TransformKind::affine, TransformKind::affine,
                      TransformKind::affine};
  arch.hidden = {16, 16};
  const auto target = gmm40_target();
  TrainConfig cfg;
  cfg.objective = Objective::forward_kl;
  cfg.steps = 500;
  cfg.batch = 64;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const auto res = train(FlowModel::create(arch, 1), target, cfg);
  ASSERT_EQ(res.losses.size(), 500u);
  EXPECT_LT(res.losses.back(), res.losses.front());
}

TEST(Train, DeterministicGivenSeed) {
  FlowArchitecture arch;
  arch.layer_kinds = kSpline2;
  arch.hidden = {8};
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 32;
  cfg.seed = 5;
  const auto target = dualmoon_target(2);
  const auto a = train(FlowModel::create(arch, 2), target, cfg);
  const auto b = train(FlowModel::create(arch, 2), target, cfg);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.flow.flat_parameters(), b.flow.flat_parameters());
  std::ostringstream os;
  write_loss_trace(os, a.losses);
  EXPECT_EQ(os.str().substr(0, 10), "step,loss\n");
}

TEST(Train, RejectsBadConfig) {
  FlowArchitecture arch;
  arch.layer_kinds = kAffine2;
  TrainConfig cfg;
  cfg.batch = 0;
  EXPECT_THROW(train(FlowModel::create(arch, 1), dualmoon_target(2), cfg), ContractError);
  cfg.batch = 8;
  cfg.objective = Objective::forward_kl;
  auto unsampled = dualmoon_target(2);
  unsampled.sampler = nullptr;
  EXPECT_THROW(train(FlowModel::create(arch, 1), unsampled, cfg), ContractError);
}

// Reverse-KL training on the symmetric dualmoon target: the trained proposal
// must give a self-normalized estimate of E[x_1] = 0 within 3 standard errors.
TEST(Train, ReverseKlDualmoonGivesCenteredSnis) {
  FlowArchitecture arch;
  arch.layer_kinds = std::vector<TransformKind>(6, TransformKind::rq_spline);
  arch.hidden = {32, 32};
  const auto target = dualmoon_target(2);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch = 64;
  cfg.learning_rate = 3e-3;
  cfg.seed = 11;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = train(FlowModel::create(arch, 7), target, cfg);
  std::cout << "training took "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            << " s, final loss " << res.losses.back() << "\n";
  const auto ws = make_weighted_sample(res.flow, target, mc_points(1 << 14, 2, 99), MapKind::inverse);
  const auto phi1 = test_function("dualmoon:phi1");
  const double est = snis_estimate(ws, phi1);
  // delta-method standard error of the ratio estimator
  double m = ws.log_weights[0];
  for (double lw : ws.log_weights) m = std::max(m, lw);
  double sw = 0.0;
  for (double lw : ws.log_weights) sw += std::exp(lw - m);
  double var = 0.0;
  for (std::size_t i = 0; i < ws.n; ++i) {
    const double wn = std::exp(ws.log_weights[i] - m) / sw;
    var += wn * wn * std::pow(phi1(ws.point(i)) - est, 2);
  }
  EXPECT_LT(std::abs(est), 3.0 * std::sqrt(var));
}
