// Monotone rational-quadratic splines on [-B, B] with identity tails.
//
// Knots (x_k, y_k), k = 0..K, with x_0 = y_0 = -B and x_K = y_K = B, and
// positive knot derivatives d_k with d_0 = d_K = 1 so the map is C^1 where
// it meets the identity tails. Within bin k, with w = x_{k+1} - x_k,
// h = y_{k+1} - y_k, s = h / w and xi = (u - x_k) / w:
//
//   g(u)  = y_k + h (s xi^2 + d_k xi (1 - xi)) / (s + (d_{k+1} + d_k - 2 s) xi (1 - xi))
//   g'(u) = s^2 (d_{k+1} xi^2 + 2 s xi (1 - xi) + d_k (1 - xi)^2) / denom^2
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "nfqmc/autodiff.hpp"
#include "nfqmc/errors.hpp"

namespace nfqmc {

/// Minimum bin width (and height) as a fraction of the uniform width 2B/K.
inline constexpr double kMinBinFraction = 1e-3;
/// Lower bound for interior knot derivatives.
inline constexpr double kMinDerivative = 1e-3;

/// Raw conditioner outputs per transformed coordinate: K widths, K heights,
/// K-1 interior derivatives.
constexpr std::size_t spline_raw_size(std::size_t bins) { return 3 * bins - 1; }

template <ad::Scalar S>
struct SplineParams {
  std::size_t bins = 0;
  double bound = 0.0;
  std::vector<S> knot_x;  // K + 1 entries
  std::vector<S> knot_y;  // K + 1 entries
  std::vector<S> deriv;   // K + 1 entries, ends fixed to 1
};

namespace detail {

template <ad::Scalar S>
std::vector<S> bin_sizes(std::span<const S> raw, double bound) {
  using std::exp;
  const std::size_t k = raw.size();
  const S lse = ad::logsumexp(raw);
  std::vector<S> sizes;
  sizes.reserve(k);
  const double total = 2.0 * bound;
  const double floor = total * kMinBinFraction / static_cast<double>(k);
  const double scale = total * (1.0 - kMinBinFraction);
  for (const S& r : raw) sizes.push_back(floor + scale * exp(r - lse));
  return sizes;
}

template <ad::Scalar S>
std::vector<S> knots(const std::vector<S>& sizes, double bound) {
  std::vector<S> out;
  out.reserve(sizes.size() + 1);
  out.push_back(S(-bound));
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) out.push_back(out.back() + sizes[k]);
  out.push_back(S(bound));
  return out;
}

// softplus(c) = 1 - kMinDerivative, so a zero raw derivative gives slope 1.
inline const double kDerivativeShift = std::log(std::expm1(1.0 - kMinDerivative));

template <ad::Scalar S>
std::size_t find_bin(const std::vector<S>& edges, double u) {
  // largest k with edges[k] <= u, capped to the last bin
  std::size_t lo = 0, hi = edges.size() - 2;
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    if (ad::value(edges[mid]) <= u) lo = mid; else hi = mid - 1;
  }
  return lo;
}

}  // namespace detail

/// Builds valid spline parameters from unconstrained conditioner outputs.
/// All-zero raw outputs give the identity spline.
template <ad::Scalar S>
SplineParams<S> make_spline_params(std::span<const S> raw, std::size_t bins, double bound) {
  if (bins < 1) throw ContractError("spline: need at least one bin");
  if (!(bound > 0.0)) throw ContractError("spline: tail bound must be positive");
  if (raw.size() != spline_raw_size(bins)) throw ContractError("spline: raw parameter count mismatch");
  SplineParams<S> p;
  p.bins = bins;
  p.bound = bound;
  p.knot_x = detail::knots(detail::bin_sizes(raw.subspan(0, bins), bound), bound);
  p.knot_y = detail::knots(detail::bin_sizes(raw.subspan(bins, bins), bound), bound);
  p.deriv.reserve(bins + 1);
  p.deriv.push_back(S(1.0));
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    p.deriv.push_back(kMinDerivative + ad::softplus(raw[2 * bins + k] + detail::kDerivativeShift));
  }
  p.deriv.push_back(S(1.0));
  return p;
}

/// Identity spline (uniform bins, unit derivatives).
inline SplineParams<double> identity_spline(std::size_t bins, double bound) {
  std::vector<double> raw(spline_raw_size(bins), 0.0);
  return make_spline_params<double>(raw, bins, bound);
}

/// Value and log-derivative of the spline at u.
template <ad::Scalar S>
std::pair<S, S> rq_spline_forward(const SplineParams<S>& p, const S& u) {
  using std::log;
  const double uv = ad::value(u);
  if (uv < -p.bound || uv > p.bound) return {u, S(0.0)};
  const std::size_t k = detail::find_bin(p.knot_x, uv);
  const S w = p.knot_x[k + 1] - p.knot_x[k];
  const S h = p.knot_y[k + 1] - p.knot_y[k];
  const S s = h / w;
  const S xi = (u - p.knot_x[k]) / w;
  const S om = 1.0 - xi;
  const S t = xi * om;
  const S& d0 = p.deriv[k];
  const S& d1 = p.deriv[k + 1];
  const S denom = s + (d1 + d0 - 2.0 * s) * t;
  const S y = p.knot_y[k] + h * (s * xi * xi + d0 * t) / denom;
  const S num = d1 * xi * xi + 2.0 * s * t + d0 * om * om;
  const S logd = 2.0 * log(s) + log(num) - 2.0 * log(denom);
  return {y, logd};
}

/// Inverse of rq_spline_forward: returns u with g(u) = y and log g'(u).
template <ad::Scalar S>
std::pair<S, S> rq_spline_inverse(const SplineParams<S>& p, const S& y) {
  using std::log;
  using std::sqrt;
  const double yv = ad::value(y);
  if (yv < -p.bound || yv > p.bound) return {y, S(0.0)};
  const std::size_t k = detail::find_bin(p.knot_y, yv);
  const S w = p.knot_x[k + 1] - p.knot_x[k];
  const S h = p.knot_y[k + 1] - p.knot_y[k];
  const S s = h / w;
  const S& d0 = p.deriv[k];
  const S& d1 = p.deriv[k + 1];
  const S dy = y - p.knot_y[k];
  const S c2 = d1 + d0 - 2.0 * s;
  const S a = h * (s - d0) + dy * c2;
  const S b = h * d0 - dy * c2;
  const S c = -s * dy;
  S disc = b * b - 4.0 * a * c;
  if (ad::value(disc) < 0.0) disc = S(0.0);
  // root of a xi^2 + b xi + c = 0 in [0, 1], in the cancellation-free form
  const S xi = (2.0 * c) / (-b - sqrt(disc));
  const S om = 1.0 - xi;
  const S t = xi * om;
  const S u = p.knot_x[k] + xi * w;
  const S denom = s + c2 * t;
  const S num = d1 * xi * xi + 2.0 * s * t + d0 * om * om;
  const S logd = 2.0 * log(s) + log(num) - 2.0 * log(denom);
  return {u, logd};
}

/// Value and derivative of the spline at u.
inline std::pair<double, double> rq_spline_eval(const SplineParams<double>& p, double u) {
  const auto [y, logd] = rq_spline_forward(p, u);
  return {y, std::exp(logd)};
}

}  // namespace nfqmc
