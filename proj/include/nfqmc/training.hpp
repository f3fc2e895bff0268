// Maximum-likelihood (forward KL) and reverse-KL training of coupling flows.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nfqmc/autodiff.hpp"
#include "nfqmc/errors.hpp"
#include "nfqmc/flow.hpp"
#include "nfqmc/rng.hpp"
#include "nfqmc/targets.hpp"

namespace nfqmc {

enum class Objective { forward_kl, reverse_kl };

inline std::string_view to_string(Objective o) {
  return o == Objective::forward_kl ? "forward_kl" : "reverse_kl";
}

inline Objective parse_objective(std::string_view s) {
  if (s == "forward_kl" || s == "forward-kl") return Objective::forward_kl;
  if (s == "reverse_kl" || s == "reverse-kl") return Objective::reverse_kl;
  throw LookupError("unknown objective '" + std::string(s) + "'");
}

struct TrainConfig {
  Objective objective = Objective::reverse_kl;
  std::size_t batch = 256;
  std::size_t steps = 1000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Reverse KL only: the target log-density is multiplied by an inverse
  // temperature rising linearly from anneal_start to 1 over anneal_steps.
  double anneal_start = 1.0;
  std::size_t anneal_steps = 0;

  double inverse_temperature(std::size_t step) const {
    if (anneal_steps == 0 || step >= anneal_steps) return 1.0;
    return anneal_start + (1.0 - anneal_start) * static_cast<double>(step) /
                              static_cast<double>(anneal_steps);
  }

  void validate() const {
    if (batch == 0) throw ContractError("train: batch must be positive");
    if (steps == 0) throw ContractError("train: steps must be positive");
    if (!(learning_rate > 0.0)) throw ContractError("train: learning rate must be positive");
    if (!(anneal_start > 0.0 && anneal_start <= 1.0)) {
      throw ContractError("train: anneal_start must be in (0, 1]");
    }
  }
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as FlowModel::flat_parameters()
  std::size_t masked = 0;        // reverse KL: samples dropped for non-finite target
};

namespace detail {

/// Records the flow parameters as the first nodes of a fresh tape and calls
/// per_sample(views) for each sample, accumulating value and gradient.
/// per_sample returns the per-sample loss or a constant NaN Var to mask it.
template <class PerSample>
LossAndGradient accumulate_over_batch(const FlowModel& flow, std::size_t count,
                                      PerSample&& per_sample) {
  auto& tape = ad::Tape::local();
  tape.clear();
  const auto flat = flow.flat_parameters();
  std::vector<ad::Var> leaves;
  leaves.reserve(flat.size());
  for (double p : flat) leaves.push_back(tape.variable(p));
  const auto views = flow.bind<ad::Var>(std::span<const ad::Var>(leaves));
  const std::size_t mark = tape.mark();

  LossAndGradient out;
  out.gradient.assign(flat.size(), 0.0);
  std::vector<double> adj;
  std::size_t used = 0;
  for (std::size_t i = 0; i < count; ++i) {
    tape.rewind(mark);
    const ad::Var l = per_sample(views, i);
    if (!std::isfinite(l.v)) {
      ++out.masked;
      continue;
    }
    ++used;
    out.loss += l.v;
    tape.backward(l, adj);
    const std::size_t upto = std::min(adj.size(), leaves.size());
    for (std::size_t k = 0; k < upto; ++k) out.gradient[k] += adj[k];
  }
  tape.clear();
  if (used == 0) return out;
  const double inv = 1.0 / static_cast<double>(used);
  out.loss *= inv;
  for (auto& g : out.gradient) g *= inv;
  return out;
}

}  // namespace detail

/// loss = -mean log nu(x) over the samples (row-major, n x d).
inline LossAndGradient forward_kl_loss(const FlowModel& flow, std::span<const double> samples) {
  const std::size_t d = flow.dim();
  if (samples.empty() || samples.size() % d != 0) {
    throw ContractError("forward_kl_loss: sample block is not a multiple of d");
  }
  for (double v : samples) {
    if (!std::isfinite(v)) throw ContractError("forward_kl_loss: non-finite sample");
  }
  const std::size_t n = samples.size() / d;
  std::vector<ad::Var> x(d);
  auto out = detail::accumulate_over_batch(
      flow, n, [&](const std::vector<LayerParams<ad::Var>>& views, std::size_t i) {
        for (std::size_t j = 0; j < d; ++j) x[j] = ad::Var(samples[i * d + j]);
        return -flow.log_density_with<ad::Var>(views, std::span<const ad::Var>(x));
      });
  if (out.masked > 0 || !std::isfinite(out.loss)) {
    throw TrainingDivergence("forward_kl_loss: non-finite loss");
  }
  return out;
}

/// Pathwise reverse-KL estimate: mean over base points z of
/// -log|det J_T(z)| - beta log pi~(T(z)). Points where the target
/// log-density is not finite are masked; more than half masked is a
/// divergence.
inline LossAndGradient reverse_kl_loss(const FlowModel& flow, const TargetDensity& target,
                                       std::span<const double> base_points, double beta = 1.0) {
  const std::size_t d = flow.dim();
  if (target.dim != d) throw ContractError("reverse_kl_loss: target and flow dimensions differ");
  if (!target.log_density_ad) throw ContractError("reverse_kl_loss: target is not differentiable");
  if (base_points.empty() || base_points.size() % d != 0) {
    throw ContractError("reverse_kl_loss: base block is not a multiple of d");
  }
  const std::size_t n = base_points.size() / d;
  std::vector<ad::Var> z(d);
  auto out = detail::accumulate_over_batch(
      flow, n, [&](const std::vector<LayerParams<ad::Var>>& views, std::size_t i) {
        for (std::size_t j = 0; j < d; ++j) z[j] = ad::Var(base_points[i * d + j]);
        auto [x, log_det] = flow.forward_with<ad::Var>(views, std::span<const ad::Var>(z));
        const ad::Var lp = target(std::span<const ad::Var>(x));
        if (!std::isfinite(lp.v)) return ad::Var(std::nan(""));
        return -log_det - beta * lp;
      });
  if (2 * out.masked > n) {
    throw TrainingDivergence("reverse_kl_loss: " + std::to_string(out.masked) + " of " +
                             std::to_string(n) + " samples have a non-finite target density");
  }
  if (!std::isfinite(out.loss)) throw TrainingDivergence("reverse_kl_loss: non-finite loss");
  return out;
}

struct TrainResult {
  FlowModel flow;
  std::vector<double> losses;  // one per step
};

namespace detail {

template <class BatchLoss>
TrainResult run_adam(FlowModel flow, const TrainConfig& config, BatchLoss&& batch_loss) {
  config.validate();
  Rng rng(config.seed);
  auto params = flow.flat_parameters();
  Adam adam(params.size(), config.learning_rate, config.beta1, config.beta2, config.epsilon);
  TrainResult result;
  result.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    LossAndGradient lg;
    try {
      lg = batch_loss(flow, rng, step);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence("step " + std::to_string(step) + ": " + e.what());
    } catch (const NumericError& e) {
      throw TrainingDivergence("step " + std::to_string(step) + ": " + e.what());
    }
    result.losses.push_back(lg.loss);
    adam.step(params, lg.gradient);
    for (double p : params) {
      if (!std::isfinite(p)) {
        throw TrainingDivergence("step " + std::to_string(step) + ": non-finite parameter");
      }
    }
    flow.set_flat_parameters(params);
  }
  result.flow = std::move(flow);
  return result;
}

}  // namespace detail

/// Trains against a target: reverse KL uses its log-density, forward KL its
/// exact sampler. Deterministic given config.seed.
inline TrainResult train(FlowModel flow, const TargetDensity& target, const TrainConfig& config) {
  const std::size_t d = flow.dim();
  if (config.objective == Objective::forward_kl && !target.has_sampler()) {
    throw ContractError("train: forward KL needs samples; target '" + target.name +
                        "' has no exact sampler");
  }
  std::vector<double> batch(config.batch * d);
  return detail::run_adam(std::move(flow), config, [&](const FlowModel& f, Rng& rng, std::size_t step) {
    if (config.objective == Objective::reverse_kl) {
      for (auto& v : batch) v = rng.normal();
      return reverse_kl_loss(f, target, batch, config.inverse_temperature(step));
    }
    for (std::size_t i = 0; i < config.batch; ++i) {
      const auto x = target.sampler(rng);
      std::copy(x.begin(), x.end(), batch.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return forward_kl_loss(f, batch);
  });
}

/// Forward-KL training on a fixed sample block (row-major, n x d);
/// minibatches are drawn with replacement.
inline TrainResult train(FlowModel flow, std::span<const double> samples, const TrainConfig& config) {
  const std::size_t d = flow.dim();
  if (samples.empty() || samples.size() % d != 0) {
    throw ContractError("train: sample block is not a multiple of d");
  }
  const std::size_t n = samples.size() / d;
  std::vector<double> batch(config.batch * d);
  return detail::run_adam(std::move(flow), config, [&](const FlowModel& f, Rng& rng, std::size_t) {
    for (std::size_t i = 0; i < config.batch; ++i) {
      const std::size_t k = rng.below(n);
      std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(k * d), d,
                  batch.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return forward_kl_loss(f, batch);
  });
}

/// CSV "step,loss" with 17 significant digits.
inline void write_loss_trace(std::ostream& os, std::span<const double> losses) {
  os << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", losses[i]);
    os << i << ',' << buf << '\n';
  }
}

}  // namespace nfqmc
