// Coupling normalizing flows T: R^d -> R^d over a standard normal base.
//
// Each coupling layer keeps the coordinates where mask[i] is true and
// transforms the others elementwise with parameters produced by a
// multilayer perceptron (the conditioner) applied to the kept block.
//
// Conditioner parameter layout. For dense layer l mapping sizes[l] inputs
// to sizes[l+1] outputs, weights are stored row-major W[out][in] and
// concatenated over l; biases are concatenated over l. Hidden layers apply
// the activation, the output layer is linear. The output vector is grouped
// per transformed coordinate (in increasing coordinate order), P entries
// each:
//   affine:    (s_raw, t), P = 2, with s = 5 tanh(s_raw / 5)
//   rq_spline: (K width logits, K height logits, K-1 derivative pre-activations),
//              P = 3K - 1
// The flat parameter vector of a flow is [W_0, b_0, W_1, b_1, ...] per layer.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nfqmc/autodiff.hpp"
#include "nfqmc/errors.hpp"
#include "nfqmc/rng.hpp"
#include "nfqmc/spline.hpp"

namespace nfqmc {

enum class Activation { tanh, relu };
enum class TransformKind { affine, rq_spline };

inline std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
inline std::string_view to_string(TransformKind k) {
  return k == TransformKind::affine ? "affine" : "rq_spline";
}

/// Bound on the affine log-scale: s = kAffineScaleBound * tanh(raw / kAffineScaleBound).
inline constexpr double kAffineScaleBound = 5.0;

struct ConditionerMLP {
  std::vector<std::size_t> sizes;  // input, hidden..., output
  Activation activation = Activation::tanh;
  std::vector<double> weights;
  std::vector<double> biases;

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1];
    return n;
  }
  std::size_t bias_count() const {
    std::size_t n = 0;
    for (std::size_t l = 1; l < sizes.size(); ++l) n += sizes[l];
    return n;
  }
  std::size_t input_size() const { return sizes.front(); }
  std::size_t output_size() const { return sizes.back(); }
};

/// Evaluates the conditioner with weights/biases supplied separately so the
/// same code runs on stored doubles and on tape variables.
template <ad::Scalar S>
std::vector<S> mlp_apply(const ConditionerMLP& shape, std::span<const S> weights,
                         std::span<const S> biases, std::span<const S> input) {
  std::vector<S> cur(input.begin(), input.end());
  std::vector<S> next;
  std::size_t woff = 0, boff = 0;
  const std::size_t nl = shape.sizes.size() - 1;
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t in = shape.sizes[l], out = shape.sizes[l + 1];
    next.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      next[o] = ad::affine_sum(biases[boff + o], weights.subspan(woff + o * in, in),
                               std::span<const S>(cur));
    }
    if (l + 1 < nl) {
      for (auto& v : next) {
        if (shape.activation == Activation::tanh) {
          using std::tanh;
          v = tanh(v);
        } else {
          v = ad::relu(v);
        }
      }
    }
    woff += in * out;
    boff += out;
    std::swap(cur, next);
  }
  return cur;
}

struct CouplingLayer {
  std::vector<bool> mask;  // true = passed through unchanged
  TransformKind kind = TransformKind::affine;
  ConditionerMLP conditioner;
  std::size_t bins = 8;       // rq_spline only
  double tail_bound = 4.0;    // rq_spline only

  std::size_t dim() const { return mask.size(); }
  std::vector<std::size_t> kept() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) if (mask[i]) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> transformed() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) if (!mask[i]) out.push_back(i);
    return out;
  }
  std::size_t params_per_coordinate() const {
    return kind == TransformKind::affine ? 2 : spline_raw_size(bins);
  }
};

template <ad::Scalar S>
struct LayerParams {
  std::span<const S> weights;
  std::span<const S> biases;
};

/// Applies one coupling layer in place; adds log|det J| (of the direction
/// applied) to log_det.
template <ad::Scalar S>
void coupling_apply(const CouplingLayer& layer, LayerParams<S> params, std::span<S> x,
                    S& log_det, bool inverse) {
  using std::exp;
  using std::tanh;
  const auto kept = layer.kept();
  const auto moved = layer.transformed();
  std::vector<S> cin;
  cin.reserve(kept.size());
  for (std::size_t i : kept) cin.push_back(x[i]);
  const std::vector<S> raw =
      mlp_apply<S>(layer.conditioner, params.weights, params.biases, std::span<const S>(cin));
  const std::size_t p = layer.params_per_coordinate();
  for (std::size_t c = 0; c < moved.size(); ++c) {
    const std::span<const S> r(raw.data() + c * p, p);
    S& xi = x[moved[c]];
    if (layer.kind == TransformKind::affine) {
      const S s = kAffineScaleBound * tanh(r[0] / kAffineScaleBound);
      if (!inverse) {
        xi = xi * exp(s) + r[1];
        log_det = log_det + s;
      } else {
        xi = (xi - r[1]) * exp(-s);
        log_det = log_det - s;
      }
    } else {
      const auto sp = make_spline_params<S>(r, layer.bins, layer.tail_bound);
      if (!inverse) {
        auto [y, ld] = rq_spline_forward(sp, xi);
        xi = y;
        log_det = log_det + ld;
      } else {
        auto [u, ld] = rq_spline_inverse(sp, xi);
        xi = u;
        log_det = log_det - ld;
      }
    }
  }
}

/// Log density of the standard normal on R^d.
template <ad::Scalar S>
S standard_normal_log_pdf(std::span<const S> z) {
  S acc(-0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi));
  for (const S& v : z) acc = acc - 0.5 * ad::square(v);
  return acc;
}

/// Architecture used to construct a fresh flow.
struct FlowArchitecture {
  std::size_t dim = 2;
  std::vector<TransformKind> layer_kinds;  // one entry per coupling layer
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::tanh;
  std::size_t bins = 8;
  double tail_bound = 4.0;
};

class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(std::size_t dim, std::vector<CouplingLayer> layers)
      : dim_(dim), layers_(std::move(layers)) {
    validate();
  }

  /// Fresh flow with alternating masks (layer l keeps coordinates i with
  /// i % 2 == l % 2), Glorot-uniform hidden weights and a zero output layer,
  /// so the initial flow is the identity.
  static FlowModel create(const FlowArchitecture& arch, std::uint64_t seed) {
    if (arch.dim < 2) throw DimensionError("flow: coupling layers need d >= 2");
    Rng rng(seed);
    std::vector<CouplingLayer> layers;
    for (std::size_t l = 0; l < arch.layer_kinds.size(); ++l) {
      CouplingLayer layer;
      layer.mask.resize(arch.dim);
      for (std::size_t i = 0; i < arch.dim; ++i) layer.mask[i] = (i % 2) == (l % 2);
      layer.kind = arch.layer_kinds[l];
      layer.bins = arch.bins;
      layer.tail_bound = arch.tail_bound;
      auto& mlp = layer.conditioner;
      mlp.activation = arch.activation;
      mlp.sizes.push_back(layer.kept().size());
      for (std::size_t h : arch.hidden) mlp.sizes.push_back(h);
      mlp.sizes.push_back(layer.transformed().size() * layer.params_per_coordinate());
      for (std::size_t k = 0; k + 1 < mlp.sizes.size(); ++k) {
        const std::size_t in = mlp.sizes[k], out = mlp.sizes[k + 1];
        const bool last = k + 2 == mlp.sizes.size();
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        for (std::size_t w = 0; w < in * out; ++w) {
          mlp.weights.push_back(last ? 0.0 : a * (2.0 * rng.uniform() - 1.0));
        }
        mlp.biases.insert(mlp.biases.end(), out, 0.0);
      }
      layers.push_back(std::move(layer));
    }
    return FlowModel(arch.dim, std::move(layers));
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<CouplingLayer>& layers() const noexcept { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.conditioner.weight_count() + l.conditioner.bias_count();
    return n;
  }

  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.conditioner.weights.begin(), l.conditioner.weights.end());
      out.insert(out.end(), l.conditioner.biases.begin(), l.conditioner.biases.end());
    }
    return out;
  }

  void set_flat_parameters(std::span<const double> params) {
    if (params.size() != parameter_count()) throw ContractError("flow: parameter count mismatch");
    std::size_t off = 0;
    for (auto& l : layers_) {
      auto& c = l.conditioner;
      std::copy_n(params.begin() + off, c.weights.size(), c.weights.begin());
      off += c.weights.size();
      std::copy_n(params.begin() + off, c.biases.size(), c.biases.begin());
      off += c.biases.size();
    }
  }

  /// Per-layer views into a flat parameter vector laid out like flat_parameters().
  template <ad::Scalar S>
  std::vector<LayerParams<S>> bind(std::span<const S> flat) const {
    std::vector<LayerParams<S>> out;
    std::size_t off = 0;
    for (const auto& l : layers_) {
      const std::size_t nw = l.conditioner.weight_count(), nb = l.conditioner.bias_count();
      out.push_back({flat.subspan(off, nw), flat.subspan(off + nw, nb)});
      off += nw + nb;
    }
    return out;
  }

  std::vector<LayerParams<double>> stored_params() const {
    std::vector<LayerParams<double>> out;
    for (const auto& l : layers_) {
      out.push_back({std::span<const double>(l.conditioner.weights),
                     std::span<const double>(l.conditioner.biases)});
    }
    return out;
  }

  /// x = T(z) and log|det J_T(z)|, generic over the scalar type.
  template <ad::Scalar S>
  std::pair<std::vector<S>, S> forward_with(const std::vector<LayerParams<S>>& params,
                                            std::span<const S> z) const {
    check_dim(z.size());
    std::vector<S> x(z.begin(), z.end());
    S log_det(0.0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      coupling_apply<S>(layers_[l], params[l], std::span<S>(x), log_det, false);
      check_finite(x, log_det, l);
    }
    return {std::move(x), log_det};
  }

  /// z = T^{-1}(x) and log|det J_{T^{-1}}(x)|, generic over the scalar type.
  template <ad::Scalar S>
  std::pair<std::vector<S>, S> inverse_with(const std::vector<LayerParams<S>>& params,
                                            std::span<const S> x) const {
    check_dim(x.size());
    std::vector<S> z(x.begin(), x.end());
    S log_det(0.0);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      coupling_apply<S>(layers_[l], params[l], std::span<S>(z), log_det, true);
      check_finite(z, log_det, l);
    }
    return {std::move(z), log_det};
  }

  template <ad::Scalar S>
  S log_density_with(const std::vector<LayerParams<S>>& params, std::span<const S> x) const {
    auto [z, log_det] = inverse_with<S>(params, x);
    return standard_normal_log_pdf<S>(z) + log_det;
  }

  std::pair<std::vector<double>, double> forward(std::span<const double> z) const {
    return forward_with<double>(stored_params(), z);
  }
  std::pair<std::vector<double>, double> inverse(std::span<const double> x) const {
    return inverse_with<double>(stored_params(), x);
  }
  /// log nu(x) = log mu(T^{-1}(x)) + log|det J_{T^{-1}}(x)|.
  double log_density(std::span<const double> x) const {
    return log_density_with<double>(stored_params(), x);
  }

 private:
  void check_dim(std::size_t n) const {
    if (n != dim_) {
      throw ContractError("flow: point has dimension " + std::to_string(n) + ", flow has " +
                          std::to_string(dim_));
    }
  }

  template <ad::Scalar S>
  static void check_finite(const std::vector<S>& x, const S& log_det, std::size_t layer) {
    for (const S& v : x) {
      if (!std::isfinite(ad::value(v))) throw NumericError("flow: non-finite coordinate", layer);
    }
    if (!std::isfinite(ad::value(log_det))) throw NumericError("flow: non-finite log-determinant", layer);
  }

  void validate() const {
    if (dim_ < 2) throw DimensionError("flow: coupling layers need d >= 2");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const std::string where = "flow layer " + std::to_string(l) + ": ";
      if (layer.mask.size() != dim_) throw ContractError(where + "mask size != d");
      const auto kept = layer.kept().size();
      if (kept == 0 || kept == dim_) {
        throw ContractError(where + "mask needs at least one kept and one transformed coordinate");
      }
      if (l > 0) {
        for (std::size_t i = 0; i < dim_; ++i) {
          if (layer.mask[i] == layers_[l - 1].mask[i]) {
            throw ContractError(where + "masks of consecutive layers must alternate");
          }
        }
      }
      if (layer.kind == TransformKind::rq_spline) {
        if (layer.bins < 1) throw ContractError(where + "spline needs K >= 1");
        if (!(layer.tail_bound > 0.0)) throw ContractError(where + "spline needs B > 0");
      }
      const auto& c = layer.conditioner;
      if (c.sizes.size() < 2) throw ContractError(where + "conditioner needs input and output sizes");
      if (c.input_size() != kept) throw ContractError(where + "conditioner input size != kept count");
      if (c.output_size() != (dim_ - kept) * layer.params_per_coordinate()) {
        throw ContractError(where + "conditioner output size does not match transform");
      }
      if (c.weights.size() != c.weight_count()) throw ContractError(where + "weight count mismatch");
      if (c.biases.size() != c.bias_count()) throw ContractError(where + "bias count mismatch");
      for (double v : c.weights) if (!std::isfinite(v)) throw ContractError(where + "non-finite weight");
      for (double v : c.biases) if (!std::isfinite(v)) throw ContractError(where + "non-finite bias");
    }
  }

  std::size_t dim_ = 0;
  std::vector<CouplingLayer> layers_;
};

}  // namespace nfqmc
