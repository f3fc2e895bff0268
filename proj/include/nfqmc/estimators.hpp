// Importance-sampling and independent Markov-chain estimators driven by a
// flow proposal, plus replication diagnostics.
//
// All weight arithmetic is in log space: log w~ = log pi~ - log nu, with a
// single max-shift before exponentiation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfqmc/errors.hpp"
#include "nfqmc/flow.hpp"
#include "nfqmc/gaussian_map.hpp"
#include "nfqmc/point_set.hpp"
#include "nfqmc/rng.hpp"
#include "nfqmc/targets.hpp"

namespace nfqmc {

/// Points in R^d with log importance weights.
struct WeightedSample {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> points;       // row-major n x d
  std::vector<double> log_weights;  // n entries
  bool normalized = false;          // log_norm_const was subtracted

  std::span<const double> point(std::size_t i) const noexcept {
    return {points.data() + i * d, d};
  }
};

/// Pushes uniform points through the Gaussian map S and the flow T and
/// weights them by pi~ / nu. nu(T(z)) is evaluated as mu(z) / |det J_T(z)|,
/// which equals the inverse-map density without re-inverting.
inline WeightedSample make_weighted_sample(const FlowModel& flow, const TargetDensity& target,
                                           const PointSet& points, MapKind map_kind) {
  if (points.dim() != flow.dim()) {
    throw ContractError("make_weighted_sample: point dimension " + std::to_string(points.dim()) +
                        " != flow dimension " + std::to_string(flow.dim()));
  }
  if (target.dim != flow.dim()) {
    throw ContractError("make_weighted_sample: target and flow dimensions differ");
  }
  const GaussianPoints gauss = gaussian_map(points, map_kind);
  const std::size_t n = points.size(), d = points.dim();
  WeightedSample ws;
  ws.n = n;
  ws.d = d;
  ws.points.resize(n * d);
  ws.log_weights.resize(n);
  ws.normalized = target.log_norm_const.has_value();
  const double shift = target.log_norm_const.value_or(0.0);
  const auto params = flow.stored_params();
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = gauss.row(i);
    auto [x, log_det] = flow.forward_with<double>(params, z);
    const double log_nu = standard_normal_log_pdf<double>(z) - log_det;
    const double lw = target(std::span<const double>(x)) - shift - log_nu;
    if (!std::isfinite(lw)) {
      throw NumericError("make_weighted_sample: non-finite log weight at point " + std::to_string(i));
    }
    std::copy(x.begin(), x.end(), ws.points.begin() + static_cast<std::ptrdiff_t>(i * d));
    ws.log_weights[i] = lw;
  }
  return ws;
}

/// (1/n) sum f(x_i) w(x_i); requires normalized weights.
inline double is_estimate(const WeightedSample& ws, const TestFunction& f) {
  if (!ws.normalized) {
    throw ContractError("is_estimate: weights are unnormalized (target has no known "
                        "normalizing constant); use snis_estimate");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < ws.n; ++i) acc += f(ws.point(i)) * std::exp(ws.log_weights[i]);
  return acc / static_cast<double>(ws.n);
}

/// sum w~ f / sum w~ using the shift max log w~.
inline double snis_estimate(const WeightedSample& ws, const TestFunction& f) {
  if (ws.n == 0) throw ContractError("snis_estimate: empty sample");
  const double m = *std::max_element(ws.log_weights.begin(), ws.log_weights.end());
  if (!std::isfinite(m)) throw DegenerateError("snis_estimate: all weights are zero");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ws.n; ++i) {
    const double w = std::exp(ws.log_weights[i] - m);
    num += w * f(ws.point(i));
    den += w;
  }
  return num / den;
}

/// Chain of points with provenance.
struct ChainOutput {
  std::size_t d = 0;
  std::vector<double> states;          // row-major, length x d
  std::vector<std::size_t> source;     // proposal index of each state
  std::size_t accepted = 0;            // iMRTH: accepted moves
  std::vector<std::size_t> replicas;   // iIMC: N_i per proposal
  SequenceKind sequence = SequenceKind::mc;
  MapKind map = MapKind::inverse;
  std::optional<std::uint64_t> seed;

  std::size_t length() const noexcept { return source.size(); }
  std::span<const double> state(std::size_t t) const noexcept {
    return {states.data() + t * d, d};
  }
  std::vector<double> values(const TestFunction& f) const {
    std::vector<double> out(length());
    for (std::size_t t = 0; t < length(); ++t) out[t] = f(state(t));
    return out;
  }
  double mean(const TestFunction& f) const {
    const auto v = values(f);
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
};

/// MRTH acceptance probability for an independent proposal, from log weights.
inline double imrth_acceptance(double log_w_current, double log_w_proposal) {
  const double r = log_w_proposal - log_w_current;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

/// Independent MRTH chain consuming proposals strictly in order. State 0 is
/// the first proposal; acceptance uniforms come from Rng(seed).
inline ChainOutput imrth_chain(const WeightedSample& ws, std::uint64_t seed) {
  if (ws.n < 2) throw ContractError("imrth_chain: need at least 2 proposals");
  Rng rng(seed);
  ChainOutput out;
  out.d = ws.d;
  out.seed = seed;
  out.source.reserve(ws.n);
  std::size_t cur = 0;
  out.source.push_back(cur);
  for (std::size_t i = 1; i < ws.n; ++i) {
    const double a = imrth_acceptance(ws.log_weights[cur], ws.log_weights[i]);
    if (a >= 1.0 || rng.uniform() < a) {
      cur = i;
      ++out.accepted;
    }
    out.source.push_back(cur);
  }
  out.states.reserve(ws.n * ws.d);
  for (std::size_t s : out.source) {
    const auto p = ws.point(s);
    out.states.insert(out.states.end(), p.begin(), p.end());
  }
  return out;
}

/// Independent importance Markov chain: proposal i is repeated
/// N_i = floor(kappa w~_i) + Bernoulli(frac(kappa w~_i)) times. With no
/// kappa, kappa = n / sum w~ so the mean replication is 1.
inline ChainOutput iimc_chain(const WeightedSample& ws, std::optional<double> kappa,
                              std::uint64_t seed) {
  if (ws.n == 0) throw ContractError("iimc_chain: empty sample");
  if (kappa && !(*kappa > 0.0)) throw ContractError("iimc_chain: kappa must be positive");
  std::vector<double> expected(ws.n);
  if (kappa) {
    for (std::size_t i = 0; i < ws.n; ++i) expected[i] = *kappa * std::exp(ws.log_weights[i]);
  } else {
    const double m = *std::max_element(ws.log_weights.begin(), ws.log_weights.end());
    if (!std::isfinite(m)) throw DegenerateError("iimc_chain: all weights are zero");
    double total = 0.0;
    for (std::size_t i = 0; i < ws.n; ++i) {
      expected[i] = std::exp(ws.log_weights[i] - m);
      total += expected[i];
    }
    const double n = static_cast<double>(ws.n);
    for (auto& e : expected) e = n * e / total;
  }
  Rng rng(seed);
  ChainOutput out;
  out.d = ws.d;
  out.seed = seed;
  out.replicas.resize(ws.n);
  for (std::size_t i = 0; i < ws.n; ++i) {
    const double whole = std::floor(expected[i]);
    const double frac = expected[i] - whole;
    auto count = static_cast<std::size_t>(whole);
    if (frac > 0.0 && rng.uniform() < frac) ++count;
    out.replicas[i] = count;
    for (std::size_t r = 0; r < count; ++r) out.source.push_back(i);
  }
  if (out.source.empty()) throw DegenerateError("iimc_chain: every replication count is zero");
  out.states.reserve(out.source.size() * ws.d);
  for (std::size_t s : out.source) {
    const auto p = ws.point(s);
    out.states.insert(out.states.end(), p.begin(), p.end());
  }
  return out;
}

/// Effective sample size n / (1 + 2 sum_k rho_k), truncated with Geyer's
/// initial positive sequence on pairs rho_{2m} + rho_{2m+1}; clamped to (0, n].
inline double ess(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 10) throw ContractError("ess: need at least 10 values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = values[i] - mean;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) throw DegenerateError("ess: zero-variance sequence");
  // -1 + 2 sum_m Gamma_m equals 1 + 2 sum_{k>=1} rho_k
  double sum_pairs = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
    if (gamma <= 0.0) break;
    sum_pairs += gamma;
  }
  const double tau = -1.0 + 2.0 * sum_pairs;
  const double nd = static_cast<double>(n);
  if (!(tau > 0.0)) return nd;
  return std::clamp(nd / tau, std::nextafter(0.0, 1.0), nd);
}

inline double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased (n-1) sample standard deviation.
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Replication summary of one estimator.
struct EstimateReport {
  std::string name;
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> truth;
  std::vector<double> abs_errors;  // filled when truth is known
  std::optional<double> ess;

  double mean_abs_error() const {
    return abs_errors.empty() ? std::nan("") : sample_mean(abs_errors);
  }
  /// Standard error of the replication mean.
  double standard_error() const { return sd / std::sqrt(static_cast<double>(values.size())); }
};

inline EstimateReport make_report(std::string name, std::vector<double> values,
                                  std::optional<double> truth = std::nullopt) {
  if (values.empty()) throw ContractError("make_report: need at least one replication");
  EstimateReport r;
  r.name = std::move(name);
  r.mean = sample_mean(values);
  r.sd = sample_sd(values);
  r.truth = truth;
  if (truth) {
    for (double v : values) r.abs_errors.push_back(std::abs(v - *truth));
  }
  r.values = std::move(values);
  return r;
}

/// sd(MC) / sd(RQMC).
inline double ratio_report(const EstimateReport& mc, const EstimateReport& rqmc) {
  if (mc.values.size() < 2 || rqmc.values.size() < 2) {
    throw ContractError("ratio_report: both reports need at least 2 replications");
  }
  if (!(rqmc.sd > 0.0)) throw DegenerateError("ratio_report: RQMC standard deviation is zero");
  return mc.sd / rqmc.sd;
}

}  // namespace nfqmc
