#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nfqmc/errors.hpp"

namespace nfqmc {

enum class SequenceKind { mc, sobol, halton, lattice };

inline std::string_view to_string(SequenceKind k) {
  switch (k) {
    case SequenceKind::mc: return "mc";
    case SequenceKind::sobol: return "sobol";
    case SequenceKind::halton: return "halton";
    case SequenceKind::lattice: return "lattice";
  }
  return "?";
}

inline SequenceKind parse_sequence_kind(std::string_view s) {
  if (s == "mc") return SequenceKind::mc;
  if (s == "sobol") return SequenceKind::sobol;
  if (s == "halton") return SequenceKind::halton;
  if (s == "lattice") return SequenceKind::lattice;
  throw LookupError("unknown sequence kind '" + std::string(s) + "'");
}

/// Row-major n x d block of points in [0,1)^d with its provenance.
class PointSet {
 public:
  PointSet(std::size_t n, std::size_t d, std::vector<double> values,
           SequenceKind kind, std::optional<std::uint64_t> seed)
      : n_(n), d_(d), values_(std::move(values)), kind_(kind), seed_(seed) {
    if (n_ == 0 || d_ == 0) throw ContractError("PointSet: n and d must be positive");
    if (values_.size() != n_ * d_) throw ContractError("PointSet: value count != n*d");
    for (double v : values_) {
      if (!(v >= 0.0 && v < 1.0)) throw ContractError("PointSet: value outside [0,1)");
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  SequenceKind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * d_, d_};
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return values_[i * d_ + j];
  }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::size_t n_;
  std::size_t d_;
  std::vector<double> values_;
  SequenceKind kind_;
  std::optional<std::uint64_t> seed_;
};

}  // namespace nfqmc
