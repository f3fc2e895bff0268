// Plain Monte Carlo and randomized quasi-Monte Carlo point sets in [0,1)^d.
//
// Sobol' points are produced in Gray-code order (the first 2^m points in
// Gray-code order are a permutation of the first 2^m points in natural
// order, so the net is the same). Randomization is a linear matrix scramble
// followed by a digital shift. Halton points are randomized with independent
// random digit permutations per (dimension, digit position). Rank-1 lattices
// are randomized with a single Cranley-Patterson shift.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nfqmc/errors.hpp"
#include "nfqmc/point_set.hpp"
#include "nfqmc/rng.hpp"
#include "nfqmc/sobol_directions.hpp"

namespace nfqmc {

inline constexpr std::size_t kSobolBits = 32;
inline constexpr std::size_t kHaltonMaxDigits = 64;

/// Which generator and how to randomize it.
struct GeneratorConfig {
  SequenceKind kind = SequenceKind::mc;
  std::size_t dim = 1;
  bool randomize = true;
  std::uint64_t seed = 0;
  /// Lattice only: generating vector (size dim) and the fixed point count.
  std::vector<std::uint64_t> lattice_z;
  std::size_t lattice_n = 0;
};

namespace detail {

inline void require_positive(std::size_t n, std::size_t d, const char* who) {
  if (n == 0) throw ContractError(std::string(who) + ": n must be >= 1");
  if (d == 0) throw ContractError(std::string(who) + ": d must be >= 1");
}

/// Direction numbers v_1..v_32 (as 32-bit integers, v_k = m_k << (32-k)).
inline std::array<std::uint32_t, kSobolBits> sobol_directions(std::size_t dim_index) {
  const SobolInit& init = kSobolTable[dim_index];
  std::array<std::uint32_t, kSobolBits> m{};
  if (init.poly == 1) {
    m.fill(1);
  } else {
    const int s = std::bit_width(init.poly) - 1;
    for (int k = 0; k < s && k < static_cast<int>(kSobolBits); ++k) m[k] = init.m[k];
    for (int k = s; k < static_cast<int>(kSobolBits); ++k) {
      std::uint32_t mk = (m[k - s] << s) ^ m[k - s];
      for (int i = 1; i < s; ++i) {
        if ((init.poly >> (s - i)) & 1U) mk ^= m[k - i] << i;
      }
      m[k] = mk;
    }
  }
  std::array<std::uint32_t, kSobolBits> v{};
  for (std::size_t k = 0; k < kSobolBits; ++k) {
    v[k] = m[k] << (kSobolBits - 1 - k);
  }
  return v;
}

/// Multiplies a 32-bit digit vector (MSB = first digit) by a random lower
/// triangular binary matrix with unit diagonal; row r is rows[r].
inline std::uint32_t apply_lower_triangular(const std::array<std::uint32_t, kSobolBits>& rows,
                                            std::uint32_t v) {
  std::uint32_t out = 0;
  for (std::size_t r = 0; r < kSobolBits; ++r) {
    if (std::popcount(rows[r] & v) & 1) out |= 1U << (kSobolBits - 1 - r);
  }
  return out;
}

inline std::vector<double> sobol_values(std::size_t n, std::size_t d,
                                        std::optional<std::uint64_t> seed) {
  std::vector<std::array<std::uint32_t, kSobolBits>> dirs(d);
  std::vector<std::uint32_t> shift(d, 0);
  for (std::size_t j = 0; j < d; ++j) dirs[j] = sobol_directions(j);
  if (seed) {
    Rng rng(*seed);
    for (std::size_t j = 0; j < d; ++j) {
      std::array<std::uint32_t, kSobolBits> rows{};
      for (std::size_t r = 0; r < kSobolBits; ++r) {
        const std::uint32_t diag = 1U << (kSobolBits - 1 - r);
        // bits strictly more significant than the diagonal are random
        const std::uint32_t above = r == 0 ? 0U : ~((diag << 1) - 1U);
        rows[r] = (rng.next_u32() & above) | diag;
      }
      for (auto& v : dirs[j]) v = apply_lower_triangular(rows, v);
      shift[j] = rng.next_u32();
    }
  }
  std::vector<double> out(n * d);
  std::vector<std::uint32_t> state(d, 0);
  constexpr double scale = 0x1.0p-32;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const auto c = static_cast<std::size_t>(std::countr_zero(i));
      if (c >= kSobolBits) throw ContractError("sobol: more than 2^32 points requested");
      for (std::size_t j = 0; j < d; ++j) state[j] ^= dirs[j][c];
    }
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = static_cast<double>(state[j] ^ shift[j]) * scale;
    }
  }
  return out;
}

inline std::vector<std::uint64_t> first_primes(std::size_t count) {
  std::vector<std::uint64_t> primes;
  for (std::uint64_t c = 2; primes.size() < count; ++c) {
    bool prime = true;
    for (std::uint64_t p : primes) {
      if (p * p > c) break;
      if (c % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(c);
  }
  return primes;
}

/// Number of base-b digits that still matter in double precision.
inline std::size_t halton_digit_count(std::uint64_t base) {
  const auto k = static_cast<std::size_t>(
      std::ceil(53.0 / std::log2(static_cast<double>(base)))) + 1;
  return std::min(k, kHaltonMaxDigits);
}

}  // namespace detail

/// First 2^m points of the Sobol' sequence in dimension d.
inline PointSet sobol_points(unsigned m, std::size_t d,
                             std::optional<std::uint64_t> seed = std::nullopt) {
  if (d == 0) throw ContractError("sobol: d must be >= 1");
  if (d > detail::kSobolMaxDim) {
    throw DimensionError("sobol: dimension " + std::to_string(d) + " exceeds the " +
                         std::to_string(detail::kSobolMaxDim) +
                         "-dimensional direction-number table");
  }
  if (m > 31) throw ContractError("sobol: m must be <= 31");
  const std::size_t n = std::size_t{1} << m;
  return PointSet(n, d, detail::sobol_values(n, d, seed), SequenceKind::sobol, seed);
}

/// First n points of the Sobol' sequence; n need not be a power of two.
inline PointSet sobol_points_n(std::size_t n, std::size_t d,
                               std::optional<std::uint64_t> seed = std::nullopt) {
  detail::require_positive(n, d, "sobol");
  if (d > detail::kSobolMaxDim) {
    throw DimensionError("sobol: dimension " + std::to_string(d) + " exceeds the " +
                         std::to_string(detail::kSobolMaxDim) +
                         "-dimensional direction-number table");
  }
  return PointSet(n, d, detail::sobol_values(n, d, seed), SequenceKind::sobol, seed);
}

/// Points 0..n-1 of the Halton sequence with the first d primes as bases.
inline PointSet halton_points(std::size_t n, std::size_t d,
                              std::optional<std::uint64_t> seed = std::nullopt) {
  detail::require_positive(n, d, "halton");
  const auto bases = detail::first_primes(d);
  std::vector<double> out(n * d);
  std::optional<Rng> rng;
  if (seed) rng.emplace(*seed);
  std::vector<std::uint64_t> digits(kHaltonMaxDigits);
  for (std::size_t j = 0; j < d; ++j) {
    const std::uint64_t b = bases[j];
    const std::size_t ndig = detail::halton_digit_count(b);
    // perms[k] is the permutation applied to digit position k
    std::vector<std::vector<std::uint64_t>> perms(ndig, std::vector<std::uint64_t>(b));
    for (auto& p : perms) {
      std::iota(p.begin(), p.end(), std::uint64_t{0});
      if (rng) {
        for (std::uint64_t i = b - 1; i > 0; --i) std::swap(p[i], p[rng->below(i + 1)]);
      }
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t idx = i;
      for (std::size_t k = 0; k < ndig; ++k) {
        digits[k] = idx % b;
        idx /= b;
      }
      double v = 0.0;
      for (std::size_t k = ndig; k-- > 0;) {
        v = (v + static_cast<double>(perms[k][digits[k]])) * inv_b;
      }
      if (v >= 1.0) v = std::nextafter(1.0, 0.0);
      out[i * d + j] = v;
    }
  }
  return PointSet(n, d, std::move(out), SequenceKind::halton, seed);
}

/// Rank-1 lattice x_i = i z / n mod 1, i = 0..n-1, optionally shifted mod 1.
inline PointSet lattice_points(std::size_t n, std::span<const std::uint64_t> z,
                               std::optional<std::uint64_t> seed = std::nullopt) {
  detail::require_positive(n, z.size(), "lattice");
  const std::size_t d = z.size();
  std::vector<double> shift(d, 0.0);
  if (seed) {
    Rng rng(*seed);
    for (auto& u : shift) u = rng.uniform();
  }
  std::vector<double> out(n * d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto k = static_cast<std::uint64_t>(
          (static_cast<unsigned __int128>(i) * (z[j] % n)) % n);
      double v = static_cast<double>(k) * inv_n + shift[j];
      if (v >= 1.0) v -= 1.0;
      out[i * d + j] = v;
    }
  }
  return PointSet(n, d, std::move(out), SequenceKind::lattice, seed);
}

/// n i.i.d. uniform points, reproducible from seed.
inline PointSet mc_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  detail::require_positive(n, d, "mc");
  Rng rng(seed);
  std::vector<double> out(n * d);
  for (auto& v : out) v = rng.uniform();
  return PointSet(n, d, std::move(out), SequenceKind::mc, seed);
}

/// A packaged generating vector with the point count it was designed for.
struct LatticeRule {
  std::size_t n;
  std::vector<std::uint64_t> z;
};

/// Two-dimensional Fibonacci lattice: n = F_k, z = (1, F_{k-1}).
inline LatticeRule fibonacci_lattice(unsigned k) {
  if (k < 2 || k > 90) throw ContractError("fibonacci_lattice: k must be in [2, 90]");
  std::uint64_t prev = 0, cur = 1;  // F_0, F_1
  for (unsigned i = 1; i < k; ++i) {
    const std::uint64_t next = prev + cur;
    prev = cur;
    cur = next;
  }
  return {static_cast<std::size_t>(cur), {1, prev}};
}

/// Dispatches on config.kind. For lattices, n must equal config.lattice_n.
inline PointSet generate(const GeneratorConfig& config, std::size_t n) {
  const std::optional<std::uint64_t> seed =
      config.randomize ? std::optional<std::uint64_t>(config.seed) : std::nullopt;
  switch (config.kind) {
    case SequenceKind::mc:
      return mc_points(n, config.dim, config.seed);
    case SequenceKind::sobol:
      return sobol_points_n(n, config.dim, seed);
    case SequenceKind::halton:
      return halton_points(n, config.dim, seed);
    case SequenceKind::lattice:
      if (config.lattice_z.size() != config.dim) {
        throw ContractError("lattice: generating vector must have dim components");
      }
      if (config.lattice_n == 0 || n != config.lattice_n) {
        throw ContractError("lattice: requires the explicit point count it was built for");
      }
      return lattice_points(n, config.lattice_z, seed);
  }
  throw ContractError("generate: unknown sequence kind");
}

}  // namespace nfqmc
