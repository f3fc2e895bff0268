// Benchmark target densities and test functions.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nfqmc/autodiff.hpp"
#include "nfqmc/errors.hpp"
#include "nfqmc/rng.hpp"

namespace nfqmc {

/// Unnormalized log-density log pi~ with optional normalizing constant and
/// exact sampler. pi~ = exp(log_norm_const) * pi when log_norm_const is set.
struct TargetDensity {
  std::string name;
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> log_density;
  std::function<ad::Var(std::span<const ad::Var>)> log_density_ad;
  std::optional<double> log_norm_const;
  std::function<std::vector<double>(Rng&)> sampler;  // empty when not available

  bool has_sampler() const { return static_cast<bool>(sampler); }

  double operator()(std::span<const double> x) const { return log_density(x); }
  ad::Var operator()(std::span<const ad::Var> x) const { return log_density_ad(x); }

  /// Same density with every log value shifted by `shift` (the constant
  /// moves into log_norm_const when one is known).
  TargetDensity shifted(double shift) const {
    TargetDensity out = *this;
    auto f = log_density;
    auto g = log_density_ad;
    out.log_density = [f, shift](std::span<const double> x) { return f(x) + shift; };
    out.log_density_ad = [g, shift](std::span<const ad::Var> x) { return g(x) + shift; };
    if (log_norm_const) out.log_norm_const = *log_norm_const + shift;
    return out;
  }
};

inline constexpr std::size_t kGmmComponents = 40;
inline constexpr double kGmmMeanRange = 40.0;
/// Seed of the shipped benchmark mixture.
inline constexpr std::uint64_t kGmmDefaultSeed = 0;

/// Component means of the 40-component mixture, row-major (40 x 2).
inline std::vector<double> gmm40_means(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gmm40-means", 0));
  std::vector<double> means(2 * kGmmComponents);
  for (auto& m : means) m = kGmmMeanRange * (2.0 * rng.uniform() - 1.0);
  return means;
}

namespace detail {

template <ad::Scalar S>
S gmm_log_density(const std::vector<double>& means, std::span<const S> x) {
  const std::size_t k = means.size() / 2;
  std::vector<S> terms;
  terms.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    const S dx = x[0] - means[2 * c];
    const S dy = x[1] - means[2 * c + 1];
    terms.push_back(-0.5 * (dx * dx + dy * dy));
  }
  return ad::logsumexp(std::span<const S>(terms)) -
         std::log(static_cast<double>(k) * 2.0 * std::numbers::pi);
}

template <ad::Scalar S>
S dualmoon_log_density(std::span<const S> x) {
  using std::sqrt;
  S r2(0.0);
  for (const S& v : x) r2 = r2 + v * v;
  const S ring = (sqrt(r2) - 2.0) / 0.1;
  S acc = -0.5 * ring * ring;
  for (const S& v : x) {
    const S a = (v + 3.0) / 0.6;
    const S b = (v - 3.0) / 0.6;
    const S pair[2] = {-0.5 * a * a, -0.5 * b * b};
    acc = acc + ad::logsumexp(std::span<const S>(pair, 2));
  }
  return acc;
}

/// log(exp(-1/2 ((v+3)/0.6)^2) + exp(-1/2 ((v-3)/0.6)^2)), one coordinate
/// of the dualmoon mode factor.
inline double dualmoon_coordinate_term(double v) {
  const double a = -0.5 * std::pow((v + 3.0) / 0.6, 2);
  const double b = -0.5 * std::pow((v - 3.0) / 0.6, 2);
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Exact rejection sampler for the dualmoon density in polar form x = r u.
/// Proposal: r ~ N(r0, 0.1^2), u uniform on the sphere. The log ratio is
///   -1/2 ((r-2)/0.1)^2 + 1/2 ((r-r0)/0.1)^2 + (d-1) log r + sum_i h(r u_i)
/// with h the coordinate term. h(sqrt(t)) is concave in t, so for fixed r
/// the sum is largest at u_i^2 = 1/d, which leaves a 1-d maximization over r
/// for the envelope constant.
class DualmoonSampler {
 public:
  explicit DualmoonSampler(std::size_t d) : d_(d) {
    const double dd = static_cast<double>(d);
    auto tilt = [&](double r) {
      return (dd - 1.0) * std::log(r) + dd * dualmoon_coordinate_term(r / std::sqrt(dd));
    };
    auto ring = [](double r) { return -0.5 * std::pow((r - 2.0) / kRingWidth, 2); };
    r0_ = argmax([&](double r) { return ring(r) + tilt(r); });
    const auto envelope = [&](double r) {
      return ring(r) + 0.5 * std::pow((r - r0_) / kRingWidth, 2) + tilt(r);
    };
    log_bound_ = envelope(argmax(envelope)) + 1e-9;
  }

  double radius_center() const noexcept { return r0_; }
  double log_bound() const noexcept { return log_bound_; }

  /// log of (target / proposal) at x = r u minus log_bound; never positive.
  double log_acceptance(double r, std::span<const double> u) const {
    double out = -0.5 * std::pow((r - 2.0) / kRingWidth, 2) +
                 0.5 * std::pow((r - r0_) / kRingWidth, 2) +
                 (static_cast<double>(d_) - 1.0) * std::log(r) - log_bound_;
    for (double v : u) out += dualmoon_coordinate_term(r * v);
    return out;
  }

  std::vector<double> operator()(Rng& rng) const {
    std::vector<double> x(d_);
    for (;;) {
      const double r = r0_ + kRingWidth * rng.normal();
      if (!(r > 0.0)) continue;
      double norm2 = 0.0;
      for (auto& v : x) {
        v = rng.normal();
        norm2 += v * v;
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& v : x) v *= inv;
      if (std::log(rng.uniform()) < log_acceptance(r, x)) {
        for (auto& v : x) v *= r;
        return x;
      }
    }
  }

 private:
  static constexpr double kRingWidth = 0.1;

  // Maximizer of a smooth unimodal function on (0, 10]: grid, then
  // golden-section refinement around the best node.
  template <class F>
  static double argmax(F&& f) {
    const std::size_t n = 100000;
    const double h = 10.0 / static_cast<double>(n);
    double best = h, best_v = f(h);
    for (std::size_t i = 2; i <= n; ++i) {
      const double r = h * static_cast<double>(i);
      const double v = f(r);
      if (v > best_v) {
        best_v = v;
        best = r;
      }
    }
    double lo = std::max(best - h, 0.5 * h), hi = best + h;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
      const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
      if (f(a) < f(b)) {
        lo = a;
      } else {
        hi = b;
      }
    }
    return 0.5 * (lo + hi);
  }

  std::size_t d_;
  double r0_ = 2.0;
  double log_bound_ = 0.0;
};

}  // namespace detail

/// Equal-weight mixture of 40 unit-covariance Gaussians on R^2 with means
/// uniform on [-40, 40]^2. Fully normalized (log_norm_const = 0).
inline TargetDensity gmm40_target(std::uint64_t seed = kGmmDefaultSeed) {
  auto means = gmm40_means(seed);
  TargetDensity t;
  t.name = "gmm40";
  t.dim = 2;
  t.log_density = [means](std::span<const double> x) {
    return detail::gmm_log_density<double>(means, x);
  };
  t.log_density_ad = [means](std::span<const ad::Var> x) {
    return detail::gmm_log_density<ad::Var>(means, x);
  };
  t.log_norm_const = 0.0;
  t.sampler = [means](Rng& rng) {
    const auto c = static_cast<std::size_t>(rng.below(kGmmComponents));
    return std::vector<double>{means[2 * c] + rng.normal(), means[2 * c + 1] + rng.normal()};
  };
  return t;
}

/// log pi~(x) = -1/2 ((|x| - 2) / 0.1)^2
///              + sum_i log(exp(-1/2 ((x_i + 3)/0.6)^2) + exp(-1/2 ((x_i - 3)/0.6)^2)).
inline TargetDensity dualmoon_target(std::size_t d) {
  if (d < 1) throw ContractError("dualmoon: d must be >= 1");
  TargetDensity t;
  t.name = "dualmoon";
  t.dim = d;
  t.log_density = [](std::span<const double> x) { return detail::dualmoon_log_density<double>(x); };
  t.log_density_ad = [](std::span<const ad::Var> x) {
    return detail::dualmoon_log_density<ad::Var>(x);
  };
  t.sampler = [sampler = detail::DualmoonSampler(d)](Rng& rng) { return sampler(rng); };
  return t;
}

struct TestFunction {
  std::string name;
  std::function<double(std::span<const double>)> eval;
  double operator()(std::span<const double> x) const { return eval(x); }
};

/// Registry: gmm:phi1..gmm:phi7, dualmoon:phi1, dualmoon:phi2.
inline TestFunction test_function(std::string_view name) {
  using F = std::function<double(std::span<const double>)>;
  F f;
  if (name == "gmm:phi1" || name == "dualmoon:phi1") {
    f = [](std::span<const double> x) { return x[0]; };
  } else if (name == "gmm:phi2") {
    f = [](std::span<const double> x) { return x[1]; };
  } else if (name == "gmm:phi3") {
    f = [](std::span<const double> x) { return x[0] * x[0]; };
  } else if (name == "gmm:phi4") {
    f = [](std::span<const double> x) { return std::pow(x[1], 6); };
  } else if (name == "gmm:phi5") {
    f = [](std::span<const double> x) { return x[0] * x[1]; };
  } else if (name == "gmm:phi6") {
    f = [](std::span<const double> x) { return std::sin(x[0]) * std::cos(-x[1] / 10.0); };
  } else if (name == "gmm:phi7") {
    f = [](std::span<const double> x) { return x[0] > 30.0 ? 1.0 : 0.0; };
  } else if (name == "dualmoon:phi2") {
    f = [](std::span<const double> x) { return std::sin(10.0 * x[0]) * std::pow(x[0], 4); };
  } else {
    throw LookupError("unknown test function '" + std::string(name) + "'");
  }
  return {std::string(name), std::move(f)};
}

inline std::vector<TestFunction> gmm_test_functions() {
  std::vector<TestFunction> out;
  for (int i = 1; i <= 7; ++i) out.push_back(test_function("gmm:phi" + std::to_string(i)));
  return out;
}

inline std::vector<TestFunction> dualmoon_test_functions() {
  return {test_function("dualmoon:phi1"), test_function("dualmoon:phi2")};
}

}  // namespace nfqmc
