// Minimal reverse-mode automatic differentiation.
//
// A Var is a value plus an index into the calling thread's tape. Every
// primitive appends one node holding (parent index, local partial) edges,
// so nodes are stored in topological order and the backward sweep is a
// single reverse pass. Constants (id < 0) never reach the tape.
//
// Typical use:
//
//   auto& tape = ad::Tape::local();
//   tape.clear();
//   ad::Var x = tape.variable(2.0);
//   ad::Var y = x * exp(x);
//   auto adj = tape.backward(y);   // adj[x.id] == dy/dx
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

namespace nfqmc::ad {

struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are the point
  Var(double value, std::int32_t index) : v(value), id(index) {}

  bool is_constant() const noexcept { return id < 0; }
};

class Tape {
 public:
  static Tape& local() {
    thread_local Tape tape;
    return tape;
  }

  void clear() {
    begin_.assign(1, 0);
    parent_.clear();
    partial_.clear();
  }

  std::size_t size() const noexcept { return begin_.size() - 1; }
  std::size_t edge_count() const noexcept { return parent_.size(); }

  /// Tape position that rewind() can return to.
  std::size_t mark() const noexcept { return size(); }

  /// Drops every node recorded after mark.
  void rewind(std::size_t mark) {
    assert(mark <= size());
    begin_.resize(mark + 1);
    parent_.resize(begin_.back());
    partial_.resize(begin_.back());
  }

  /// New independent variable (a leaf node).
  Var variable(double value) { return {value, close_node()}; }

  /// Starts a node; add edges with edge(), then finish with close_node().
  void edge(const Var& parent, double partial) {
    if (parent.id >= 0) {
      parent_.push_back(parent.id);
      partial_.push_back(partial);
    }
  }

  /// Finishes the node begun by the preceding edge() calls. A node with no
  /// non-constant parents is still recorded when it is a leaf; callers that
  /// want constant folding check `pending()` first.
  std::int32_t close_node() {
    begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return static_cast<std::int32_t>(begin_.size() - 2);
  }

  bool pending() const noexcept { return parent_.size() != begin_.back(); }

  /// Adjoints d out / d node for every node up to and including out.
  std::vector<double> backward(const Var& out) const {
    std::vector<double> adj;
    backward(out, adj);
    return adj;
  }

  void backward(const Var& out, std::vector<double>& adj) const {
    adj.assign(out.id < 0 ? 0 : static_cast<std::size_t>(out.id) + 1, 0.0);
    if (out.id < 0) return;
    adj[out.id] = 1.0;
    for (std::int32_t i = out.id; i >= 0; --i) {
      const double a = adj[i];
      if (a == 0.0) continue;
      for (std::uint32_t e = begin_[i]; e < begin_[i + 1]; ++e) {
        adj[parent_[e]] += a * partial_[e];
      }
    }
  }

 private:
  Tape() { clear(); }

  std::vector<std::uint32_t> begin_;
  std::vector<std::int32_t> parent_;
  std::vector<double> partial_;
};

namespace detail {

inline Var unary(const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  auto& t = Tape::local();
  t.edge(a, da);
  return {value, t.close_node()};
}

inline Var binary(const Var& a, const Var& b, double value, double da, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  auto& t = Tape::local();
  t.edge(a, da);
  t.edge(b, db);
  return {value, t.close_node()};
}

}  // namespace detail

inline double value(double x) noexcept { return x; }
inline double value(const Var& x) noexcept { return x.v; }

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.v + b.v, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.v - b.v, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a, b, a.v * b.v, b.v, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(a, b, q, 1.0 / b.v, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(a, -a.v, -1.0); }

inline Var operator+(const Var& a, double b) { return detail::unary(a, a.v + b, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(b, a + b.v, 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(a, a.v - b, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(b, a - b.v, -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(a, a.v * b, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(b, a * b.v, a); }
inline Var operator/(const Var& a, double b) { return detail::unary(a, a.v / b, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.v;
  return detail::unary(b, q, -q / b.v);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons look at values only; branches are not differentiated.
inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return detail::unary(a, e, e);
}
inline Var log(const Var& a) { return detail::unary(a, std::log(a.v), 1.0 / a.v); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return detail::unary(a, s, 0.5 / s);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.v);
  return detail::unary(a, t, 1.0 - t * t);
}
inline Var sin(const Var& a) { return detail::unary(a, std::sin(a.v), std::cos(a.v)); }
inline Var cos(const Var& a) { return detail::unary(a, std::cos(a.v), -std::sin(a.v)); }
inline Var square(const Var& a) { return detail::unary(a, a.v * a.v, 2.0 * a.v); }
inline Var abs(const Var& a) { return detail::unary(a, std::abs(a.v), a.v < 0.0 ? -1.0 : 1.0); }
inline bool isfinite(const Var& a) { return std::isfinite(a.v); }

inline double square(double a) { return a * a; }

/// log(1 + e^x), overflow-safe.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline Var softplus(const Var& a) {
  const double sig = 1.0 / (1.0 + std::exp(-a.v));
  return detail::unary(a, softplus(a.v), sig);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(const Var& a) { return detail::unary(a, relu(a.v), a.v > 0.0 ? 1.0 : 0.0); }

/// bias + sum_k weights[k] * inputs[k] as one tape node.
inline double affine_sum(double bias, std::span<const double> weights,
                         std::span<const double> inputs) {
  double acc = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * inputs[k];
  return acc;
}

template <class W, class X>
  requires(std::is_same_v<W, Var> || std::is_same_v<X, Var>)
inline Var affine_sum(const W& bias, std::span<const W> weights, std::span<const X> inputs) {
  double acc = value(bias);
  for (std::size_t k = 0; k < weights.size(); ++k) acc += value(weights[k]) * value(inputs[k]);
  auto& t = Tape::local();
  if constexpr (std::is_same_v<W, Var>) t.edge(bias, 1.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if constexpr (std::is_same_v<W, Var>) t.edge(weights[k], value(inputs[k]));
    if constexpr (std::is_same_v<X, Var>) t.edge(inputs[k], value(weights[k]));
  }
  if (!t.pending()) return Var(acc);
  return {acc, t.close_node()};
}

/// log sum_k exp(x_k), shifted by the maximum.
inline double logsumexp(std::span<const double> xs) {
  double m = -HUGE_VAL;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline Var logsumexp(std::span<const Var> xs) {
  double m = -HUGE_VAL;
  for (const Var& x : xs) m = std::max(m, x.v);
  if (!std::isfinite(m)) return Var(m);
  double s = 0.0;
  for (const Var& x : xs) s += std::exp(x.v - m);
  const double out = m + std::log(s);
  auto& t = Tape::local();
  for (const Var& x : xs) t.edge(x, std::exp(x.v - out));
  if (!t.pending()) return Var(out);
  return {out, t.close_node()};
}

template <class T>
concept Scalar = std::is_same_v<T, double> || std::is_same_v<T, Var>;

}  // namespace nfqmc::ad
