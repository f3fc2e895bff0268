// Maps from uniform point sets on [0,1)^d to standard Gaussian point sets.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nfqmc/errors.hpp"
#include "nfqmc/point_set.hpp"

namespace nfqmc {

enum class MapKind { inverse, box_muller };

inline std::string_view to_string(MapKind k) {
  return k == MapKind::inverse ? "inverse" : "box-muller";
}

inline MapKind parse_map_kind(std::string_view s) {
  if (s == "inverse") return MapKind::inverse;
  if (s == "box-muller" || s == "box_muller") return MapKind::box_muller;
  throw LookupError("unknown map kind '" + std::string(s) + "'");
}

/// Uniform inputs are clamped to [kUniformClamp, 1 - kUniformClamp].
inline constexpr double kUniformClamp = 0x1.0p-53;

/// Row-major n x d Gaussian points.
struct GaussianPoints {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;
  MapKind map_kind = MapKind::inverse;

  std::span<const double> row(std::size_t i) const noexcept {
    return {values.data() + i * d, d};
  }
};

/// Standard normal quantile, Wichura's AS 241 (PPND16), ~1e-16 relative.
/// Returns -inf / +inf at 0 / 1.
inline double normal_quantile(double p) {
  if (p <= 0.0) return -HUGE_VAL;
  if (p >= 1.0) return HUGE_VAL;
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -x : x;
}

inline double clamp_uniform(double u) {
  if (u < kUniformClamp) return kUniformClamp;
  if (u > 1.0 - kUniformClamp) return 1.0 - kUniformClamp;
  return u;
}

/// Componentwise inverse normal CDF.
inline GaussianPoints inv_cdf_map(const PointSet& points) {
  GaussianPoints out{points.size(), points.dim(), {}, MapKind::inverse};
  out.values.reserve(points.values().size());
  for (double u : points.values()) out.values.push_back(normal_quantile(clamp_uniform(u)));
  return out;
}

/// Box-Muller on consecutive coordinate pairs (u1, u2) -> (r cos t, r sin t).
inline GaussianPoints box_muller_map(const PointSet& points) {
  const std::size_t d = points.dim();
  if (d % 2 != 0) {
    throw DimensionError("box_muller_map: dimension " + std::to_string(d) +
                         " is odd; Box-Muller needs coordinate pairs");
  }
  GaussianPoints out{points.size(), d, std::vector<double>(points.values().size()),
                     MapKind::box_muller};
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < d; j += 2) {
      const double u1 = std::max(points(i, j), kUniformClamp);
      const double theta = 2.0 * std::numbers::pi * points(i, j + 1);
      const double r = std::sqrt(-2.0 * std::log(u1));
      out.values[i * d + j] = r * std::cos(theta);
      out.values[i * d + j + 1] = r * std::sin(theta);
    }
  }
  return out;
}

inline GaussianPoints gaussian_map(const PointSet& points, MapKind kind) {
  return kind == MapKind::inverse ? inv_cdf_map(points) : box_muller_map(points);
}

}  // namespace nfqmc
