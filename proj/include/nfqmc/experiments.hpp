// Experiment drivers: replicated MC vs RQMC comparisons on the benchmark
// targets, written as CSV tables.
//
// Replication r of an experiment draws its point set from
// derive_seed(master, "<experiment>/<stream>", r) and any acceptance or
// rounding randomness from a separate stream, so no two replications or
// streams share randomness. Output depends only on (RunConfig, master seed).
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "nfqmc/errors.hpp"
#include "nfqmc/estimators.hpp"
#include "nfqmc/flow_io.hpp"
#include "nfqmc/gaussian_map.hpp"
#include "nfqmc/qmc_sequences.hpp"
#include "nfqmc/targets.hpp"
#include "nfqmc/training.hpp"

namespace nfqmc {

enum class ExperimentKind { gmm, dim_sweep, seq_compare, markov };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::gmm: return "gmm";
    case ExperimentKind::dim_sweep: return "dim-sweep";
    case ExperimentKind::seq_compare: return "seq-compare";
    case ExperimentKind::markov: return "markov";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "gmm") return ExperimentKind::gmm;
  if (s == "dim-sweep" || s == "dim_sweep") return ExperimentKind::dim_sweep;
  if (s == "seq-compare" || s == "seq_compare") return ExperimentKind::seq_compare;
  if (s == "markov") return ExperimentKind::markov;
  throw LookupError("unknown experiment '" + std::string(s) + "'");
}

/// A sequence kind paired with the Gaussian map applied to it.
struct Variant {
  SequenceKind seq = SequenceKind::mc;
  MapKind map = MapKind::inverse;

  std::string label() const {
    return seq == SequenceKind::mc ? "mc"
                                   : std::string(to_string(seq)) + "-" + std::string(to_string(map));
  }
  bool operator==(const Variant&) const = default;
};

/// The five proposal variants compared on dualmoon.
inline std::vector<Variant> standard_variants() {
  return {{SequenceKind::mc, MapKind::inverse},
          {SequenceKind::sobol, MapKind::inverse},
          {SequenceKind::sobol, MapKind::box_muller},
          {SequenceKind::halton, MapKind::inverse},
          {SequenceKind::halton, MapKind::box_muller}};
}

struct RunConfig {
  ExperimentKind experiment = ExperimentKind::gmm;
  SequenceKind sequence = SequenceKind::sobol;  // RQMC arm of gmm and dim-sweep
  MapKind map = MapKind::inverse;
  std::size_t n = std::size_t{1} << 14;
  std::size_t n_min = std::size_t{1} << 8;      // seq-compare ladder start
  std::size_t reps = 100;
  std::vector<std::size_t> dims{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::filesystem::path flow = "flows";         // a flow file or a directory of them
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  bool train_missing = false;                   // --train: fit and save absent flows
  unsigned threads = 0;                         // 0: hardware concurrency
  std::function<void(const std::string&)> warn = [](const std::string& m) {
    std::cerr << "warning: " << m << '\n';
  };
  std::function<void(const std::string&)> progress;

  void validate() const {
    if (n < 2) throw ContractError("n must be at least 2");
    if (reps < 2) throw ContractError("reps must be at least 2 to form a ratio");
    if (experiment == ExperimentKind::dim_sweep && dims.empty()) {
      throw ContractError("dims must not be empty");
    }
    for (auto d : dims) {
      if (d < 2) throw ContractError("dims entries must be at least 2");
    }
    if (experiment == ExperimentKind::seq_compare && (n_min < 2 || n_min > n)) {
      throw ContractError("seq-compare needs 2 <= n_min <= n");
    }
  }
};

// ---------------------------------------------------------------------------
// CSV

/// %.17g, the shortest printf form guaranteed to round-trip a double.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw ContractError("csv: row width differs from header");
    rows.push_back(std::move(row));
  }
  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
  void write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    os << str();
    if (!os) throw Error("write to '" + path.string() + "' failed");
  }
};

// ---------------------------------------------------------------------------
// Shared plumbing

namespace detail {

/// Runs body(r) for r in [0, count) on a small worker pool. Results must be
/// written to per-r slots; the first failing r (lowest index) is rethrown.
template <class Body>
void for_each_replication(std::size_t count, unsigned threads, Body&& body) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t r = 0; r < count; ++r) {
      try {
        body(r);
      } catch (...) {
        errors[r] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t r; !failed && (r = next++) < count;) {
          try {
            body(r);
          } catch (...) {
            errors[r] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

}  // namespace detail

/// Point set for one replication of a variant.
inline PointSet replication_points(SequenceKind kind, std::size_t n, std::size_t d,
                                   std::uint64_t seed) {
  switch (kind) {
    case SequenceKind::mc:
      return mc_points(n, d, seed);
    case SequenceKind::sobol:
      return sobol_points_n(n, d, seed);
    case SequenceKind::halton:
      return halton_points(n, d, seed);
    case SequenceKind::lattice: {
      if (d != 2) throw ContractError("lattice: only the 2-d Fibonacci rule is available");
      for (unsigned k = 2; k <= 90; ++k) {
        const auto rule = fibonacci_lattice(k);
        if (rule.n == n) return lattice_points(n, rule.z, seed);
        if (rule.n > n) break;
      }
      throw ContractError("lattice: n = " + std::to_string(n) + " is not a Fibonacci number");
    }
  }
  throw ContractError("unknown sequence kind");
}

inline void check_point_count(const RunConfig& config, SequenceKind kind, std::size_t n) {
  if (kind == SequenceKind::sobol && !detail::is_power_of_two(n) && config.warn) {
    config.warn("sobol with n = " + std::to_string(n) +
                " is not a power of 2; the point set is not a complete net");
  }
}

inline std::string flow_name(std::string_view target, std::size_t d) {
  return std::string(target) + "-d" + std::to_string(d);
}

/// Architecture and optimizer settings used to produce the shipped flows.
struct FlowRecipe {
  FlowArchitecture arch;
  TrainConfig train;
};

inline FlowRecipe default_recipe(std::string_view target, std::size_t d) {
  FlowRecipe r;
  r.arch.dim = d;
  if (target == "gmm") {
    if (d != 2) throw DimensionError("gmm target is 2-dimensional");
    r.arch.layer_kinds = std::vector<TransformKind>(8, TransformKind::rq_spline);
    r.arch.layer_kinds.push_back(TransformKind::affine);
    r.arch.layer_kinds.push_back(TransformKind::affine);
    r.arch.bins = 16;
    r.arch.tail_bound = 5.0;
    r.train.objective = Objective::forward_kl;
    r.train.steps = 4000;
    r.train.batch = 256;
    r.train.learning_rate = 1e-3;
  } else if (target == "dualmoon") {
    r.arch.layer_kinds = std::vector<TransformKind>(6, TransformKind::rq_spline);
    r.train.objective = Objective::forward_kl;
    r.train.steps = 6000;
    r.train.batch = 256;
    r.train.learning_rate = 1e-3;
  } else {
    throw LookupError("unknown target '" + std::string(target) + "'");
  }
  return r;
}

inline TargetDensity make_target(std::string_view target, std::size_t d) {
  if (target == "gmm") {
    if (d != 2) throw DimensionError("gmm target is 2-dimensional");
    return gmm40_target();
  }
  if (target == "dualmoon") return dualmoon_target(d);
  throw LookupError("unknown target '" + std::string(target) + "'");
}

/// Trains a flow with default_recipe; deterministic given seed.
inline TrainResult train_default_flow(std::string_view target, std::size_t d, std::uint64_t seed) {
  auto recipe = default_recipe(target, d);
  recipe.train.seed = derive_seed(seed, "train/" + flow_name(target, d), 0);
  auto flow = FlowModel::create(recipe.arch, derive_seed(seed, "init/" + flow_name(target, d), 0));
  return train(std::move(flow), make_target(target, d), recipe.train);
}

/// Loads the flow for (target, d) from config.flow (a file, or a directory
/// holding <target>-d<d>.json). With train_missing, an absent flow is
/// trained and saved there first.
inline FlowModel resolve_flow(const RunConfig& config, std::string_view target, std::size_t d) {
  namespace fs = std::filesystem;
  fs::path path = config.flow;
  if (fs::is_directory(path) || (!path.has_extension() && !fs::exists(path))) {
    path /= flow_name(target, d) + ".json";
  }
  if (!fs::exists(path) && config.train_missing) {
    if (config.progress) config.progress("training " + flow_name(target, d) + " -> " + path.string());
    auto result = train_default_flow(target, d, config.seed);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    flow_save(result.flow, path);
    return std::move(result.flow);
  }
  auto flow = flow_load(path);
  if (flow.dim() != d) {
    throw ContractError("flow '" + path.string() + "' has d = " + std::to_string(flow.dim()) +
                        ", expected " + std::to_string(d));
  }
  return flow;
}

// ---------------------------------------------------------------------------
// GMM: IS estimates of phi_1..phi_7, MC vs one RQMC variant

struct GmmResult {
  std::size_t n = 0;
  Variant rqmc;
  std::vector<std::string> functions;
  std::vector<std::vector<double>> mc;    // [phi][rep]
  std::vector<std::vector<double>> qmc;   // [phi][rep]
  std::vector<double> ratios;             // sd(MC) / sd(RQMC) per phi

  CsvTable estimates_csv() const;
  CsvTable ratios_csv() const;
  CsvTable boxplot_csv() const;
};

inline GmmResult run_gmm_experiment(const RunConfig& config, const FlowModel& flow) {
  config.validate();
  if (flow.dim() != 2) throw DimensionError("gmm experiment needs a 2-d flow");
  check_point_count(config, config.sequence, config.n);
  const auto target = gmm40_target();
  const auto fns = gmm_test_functions();
  GmmResult res;
  res.n = config.n;
  res.rqmc = {config.sequence, config.map};
  for (const auto& f : fns) res.functions.push_back(f.name.substr(f.name.find(':') + 1));
  res.mc.assign(fns.size(), std::vector<double>(config.reps));
  res.qmc.assign(fns.size(), std::vector<double>(config.reps));
  detail::for_each_replication(config.reps, config.threads, [&](std::size_t r) {
    const auto mc = make_weighted_sample(
        flow, target, mc_points(config.n, 2, derive_seed(config.seed, "gmm/mc", r)),
        MapKind::inverse);
    const auto qmc = make_weighted_sample(
        flow, target,
        replication_points(config.sequence, config.n, 2,
                           derive_seed(config.seed, "gmm/" + res.rqmc.label(), r)),
        config.map);
    for (std::size_t k = 0; k < fns.size(); ++k) {
      res.mc[k][r] = is_estimate(mc, fns[k]);
      res.qmc[k][r] = is_estimate(qmc, fns[k]);
    }
  });
  for (std::size_t k = 0; k < fns.size(); ++k) {
    try {
      res.ratios.push_back(ratio_report(make_report("mc", res.mc[k]), make_report("rqmc", res.qmc[k])));
    } catch (const DegenerateError& e) {
      if (config.warn) config.warn(res.functions[k] + ": " + e.what());
      res.ratios.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return res;
}

inline CsvTable GmmResult::estimates_csv() const {
  CsvTable t;
  t.header = {"method", "rep"};
  t.header.insert(t.header.end(), functions.begin(), functions.end());
  const std::size_t reps = mc.empty() ? 0 : mc[0].size();
  for (const auto* block : {&mc, &qmc}) {
    const std::string method = block == &mc ? "mc" : rqmc.label();
    for (std::size_t r = 0; r < reps; ++r) {
      std::vector<std::string> row{method, std::to_string(r)};
      for (const auto& col : *block) row.push_back(format_real(col[r]));
      t.add(std::move(row));
    }
  }
  return t;
}

inline CsvTable GmmResult::ratios_csv() const {
  CsvTable t;
  t.header = {"n", "reps", "method"};
  t.header.insert(t.header.end(), functions.begin(), functions.end());
  std::vector<std::string> row{std::to_string(n), std::to_string(mc.empty() ? 0 : mc[0].size()),
                               rqmc.label()};
  for (double v : ratios) row.push_back(format_real(v));
  t.add(std::move(row));
  return t;
}

/// Per function: (estimate - mean of MC estimates) / sd of MC estimates, so
/// MC boxes have unit spread and RQMC boxes shrink by the ratio.
inline CsvTable GmmResult::boxplot_csv() const {
  CsvTable t;
  t.header = {"method", "phi", "rep", "normalized"};
  for (std::size_t k = 0; k < functions.size(); ++k) {
    const double m = sample_mean(mc[k]);
    const double s = sample_sd(mc[k]);
    for (const auto* block : {&mc, &qmc}) {
      const std::string method = block == &mc ? "mc" : rqmc.label();
      for (std::size_t r = 0; r < (*block)[k].size(); ++r) {
        t.add({method, functions[k], std::to_string(r), format_real(((*block)[k][r] - m) / s)});
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Dimension sweep: dualmoon SNIS of phi_1, phi_2 (exact value 0 by symmetry)

struct DimSweepRow {
  std::size_t dim = 0;
  std::string phi;
  double std_ratio = 0.0;
  double err_ratio = 0.0;
};

struct DimSweepResult {
  std::vector<DimSweepRow> rows;
  CsvTable csv() const {
    CsvTable t;
    t.header = {"dim", "phi", "std_ratio", "err_ratio"};
    for (const auto& r : rows) {
      t.add({std::to_string(r.dim), r.phi, format_real(r.std_ratio), format_real(r.err_ratio)});
    }
    return t;
  }
};

/// One dimension of the sweep against a given flow.
inline std::vector<DimSweepRow> dimension_sweep_rows(const RunConfig& config, const FlowModel& flow) {
  const std::size_t d = flow.dim();
  const auto target = dualmoon_target(d);
  const auto fns = dualmoon_test_functions();
  const Variant rq{config.sequence, config.map};
  std::vector<std::vector<double>> mc(fns.size(), std::vector<double>(config.reps));
  auto qmc = mc;
  const std::string tag = "dim-sweep/d" + std::to_string(d) + "/";
  detail::for_each_replication(config.reps, config.threads, [&](std::size_t r) {
    const auto a = make_weighted_sample(
        flow, target, mc_points(config.n, d, derive_seed(config.seed, tag + "mc", r)),
        MapKind::inverse);
    const auto b = make_weighted_sample(
        flow, target,
        replication_points(config.sequence, config.n, d,
                           derive_seed(config.seed, tag + rq.label(), r)),
        config.map);
    for (std::size_t k = 0; k < fns.size(); ++k) {
      mc[k][r] = snis_estimate(a, fns[k]);
      qmc[k][r] = snis_estimate(b, fns[k]);
    }
  });
  std::vector<DimSweepRow> rows;
  for (std::size_t k = 0; k < fns.size(); ++k) {
    const auto rm = make_report("mc", mc[k], 0.0);
    const auto rr = make_report("rqmc", qmc[k], 0.0);
    rows.push_back({d, fns[k].name.substr(fns[k].name.find(':') + 1), ratio_report(rm, rr),
                    rm.mean_abs_error() / rr.mean_abs_error()});
  }
  return rows;
}

inline DimSweepResult run_dimension_sweep(const RunConfig& config) {
  config.validate();
  check_point_count(config, config.sequence, config.n);
  DimSweepResult res;
  for (auto d : config.dims) {
    if (config.progress) config.progress("dim-sweep d = " + std::to_string(d));
    const auto flow = resolve_flow(config, "dualmoon", d);
    for (auto& row : dimension_sweep_rows(config, flow)) res.rows.push_back(std::move(row));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sequence comparison: error decay of dualmoon SNIS of phi_1 in n

struct SeqCompareRow {
  Variant variant;
  std::size_t n = 0;
  double mean_abs_err = 0.0;
};

struct SeqCompareResult {
  std::vector<SeqCompareRow> rows;
  CsvTable csv() const {
    CsvTable t;
    t.header = {"seq", "map", "n", "mean_abs_err"};
    for (const auto& r : rows) {
      t.add({std::string(to_string(r.variant.seq)),
             r.variant.seq == SequenceKind::mc ? "-" : std::string(to_string(r.variant.map)),
             std::to_string(r.n), format_real(r.mean_abs_err)});
    }
    return t;
  }
  /// Least-squares slope of log(mean_abs_err) on log(n) for one variant.
  double slope(const Variant& v) const {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (const auto& r : rows) {
      if (!(r.variant == v)) continue;
      const double x = std::log(static_cast<double>(r.n)), y = std::log(r.mean_abs_err);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      m += 1;
    }
    if (m < 2) throw ContractError("slope: need at least two sizes");
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  double error_at(const Variant& v, std::size_t n) const {
    for (const auto& r : rows) {
      if (r.variant == v && r.n == n) return r.mean_abs_err;
    }
    throw LookupError("no row for " + v.label() + " at n = " + std::to_string(n));
  }
};

/// Sizes n_min, 2 n_min, ... up to n. Each replication draws the largest set
/// once and evaluates the estimator on its leading prefixes, which are
/// themselves valid randomized point sets of the smaller size.
inline SeqCompareResult run_sequence_comparison(const RunConfig& config, const FlowModel& flow) {
  config.validate();
  const std::size_t d = flow.dim();
  const auto target = dualmoon_target(d);
  const auto phi = test_function("dualmoon:phi1");
  std::vector<std::size_t> sizes;
  for (std::size_t m = config.n_min; m <= config.n; m *= 2) sizes.push_back(m);
  for (auto m : sizes) check_point_count(config, SequenceKind::sobol, m);
  const auto variants = standard_variants();
  // err[v][size][rep]
  std::vector<std::vector<std::vector<double>>> err(
      variants.size(), std::vector<std::vector<double>>(sizes.size(), std::vector<double>(config.reps)));
  detail::for_each_replication(config.reps, config.threads, [&](std::size_t r) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto& var = variants[v];
      const auto ws = make_weighted_sample(
          flow, target,
          replication_points(var.seq, sizes.back(), d,
                             derive_seed(config.seed, "seq-compare/" + var.label(), r)),
          var.map);
      std::vector<double> f(ws.n);
      for (std::size_t i = 0; i < ws.n; ++i) f[i] = phi(ws.point(i));
      for (std::size_t s = 0; s < sizes.size(); ++s) {
        const std::size_t m = sizes[s];
        const double mx = *std::max_element(ws.log_weights.begin(), ws.log_weights.begin() + m);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double w = std::exp(ws.log_weights[i] - mx);
          num += w * f[i];
          den += w;
        }
        err[v][s][r] = std::abs(num / den);
      }
    }
  });
  SeqCompareResult res;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      res.rows.push_back({variants[v], sizes[s], sample_mean(err[v][s])});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Markov comparison: iMRTH and iIMC chains vs SNIS on dualmoon, phi_1

struct MarkovRow {
  std::string method;  // imrth, iimc, is
  Variant variant;
  double ess = 0.0;           // mean over replications
  double mean_abs_err = 0.0;  // against the exact value 0
  double mean_err = 0.0;
  double se = 0.0;            // replication standard error of mean_err
};

struct MarkovResult {
  std::size_t n = 0;
  std::size_t reps = 0;
  std::vector<MarkovRow> rows;
  CsvTable csv() const {
    CsvTable t;
    t.header = {"method", "seq", "map", "n", "reps", "ess", "mean_abs_err", "mean_err", "se"};
    for (const auto& r : rows) {
      t.add({r.method, std::string(to_string(r.variant.seq)),
             r.variant.seq == SequenceKind::mc ? "-" : std::string(to_string(r.variant.map)),
             std::to_string(n), std::to_string(reps), format_real(r.ess),
             format_real(r.mean_abs_err), format_real(r.mean_err), format_real(r.se)});
    }
    return t;
  }
  const MarkovRow& row(std::string_view method, const Variant& v) const {
    for (const auto& r : rows) {
      if (r.method == method && r.variant == v) return r;
    }
    throw LookupError("no row for " + std::string(method) + " " + v.label());
  }
};

/// Kish effective sample size (sum w)^2 / sum w^2 of importance weights.
inline double importance_ess(std::span<const double> log_weights) {
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - m);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

inline MarkovResult run_markov_comparison(const RunConfig& config, const FlowModel& flow) {
  config.validate();
  const std::size_t d = flow.dim();
  const auto target = dualmoon_target(d);
  const auto phi = test_function("dualmoon:phi1");
  check_point_count(config, SequenceKind::sobol, config.n);
  const auto variants = standard_variants();
  const std::vector<std::string> methods{"imrth", "iimc", "is"};
  // est[method][variant][rep], ess likewise
  auto grid = [&] {
    return std::vector<std::vector<std::vector<double>>>(
        methods.size(), std::vector<std::vector<double>>(variants.size(), std::vector<double>(config.reps)));
  };
  auto est = grid();
  auto effective = grid();
  detail::for_each_replication(config.reps, config.threads, [&](std::size_t r) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto& var = variants[v];
      const auto ws = make_weighted_sample(
          flow, target,
          replication_points(var.seq, config.n, d,
                             derive_seed(config.seed, "markov/" + var.label(), r)),
          var.map);
      const auto mrth = imrth_chain(ws, derive_seed(config.seed, "markov/imrth-accept/" + var.label(), r));
      const auto imc = iimc_chain(ws, std::nullopt,
                                  derive_seed(config.seed, "markov/iimc-round/" + var.label(), r));
      const auto mv = mrth.values(phi);
      const auto iv = imc.values(phi);
      est[0][v][r] = sample_mean(mv);
      est[1][v][r] = sample_mean(iv);
      est[2][v][r] = snis_estimate(ws, phi);
      // a chain that never moves has no defined ESS; count it as one draw
      auto chain_ess = [](const std::vector<double>& vals) {
        try {
          return ess(vals);
        } catch (const DegenerateError&) {
          return 1.0;
        }
      };
      effective[0][v][r] = chain_ess(mv);
      effective[1][v][r] = chain_ess(iv);
      effective[2][v][r] = importance_ess(ws.log_weights);
    }
  });
  MarkovResult res;
  res.n = config.n;
  res.reps = config.reps;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto rep = make_report(methods[k], est[k][v], 0.0);
      res.rows.push_back({methods[k], variants[v], sample_mean(effective[k][v]),
                          rep.mean_abs_error(), rep.mean, rep.standard_error()});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Entry point shared by the CLI: runs one experiment and writes its CSVs.
// Returns the paths written.

inline std::vector<std::filesystem::path> run_experiment(const RunConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  fs::create_directories(config.out);
  std::vector<fs::path> written;
  auto emit = [&](const CsvTable& t, const std::string& name) {
    const auto p = config.out / name;
    t.write(p);
    written.push_back(p);
  };
  switch (config.experiment) {
    case ExperimentKind::gmm: {
      const auto res = run_gmm_experiment(config, resolve_flow(config, "gmm", 2));
      emit(res.estimates_csv(), "gmm_estimates.csv");
      emit(res.ratios_csv(), "gmm_ratios.csv");
      emit(res.boxplot_csv(), "gmm_boxplot.csv");
      break;
    }
    case ExperimentKind::dim_sweep:
      emit(run_dimension_sweep(config).csv(), "dim_sweep.csv");
      break;
    case ExperimentKind::seq_compare:
      emit(run_sequence_comparison(config, resolve_flow(config, "dualmoon", 2)).csv(),
           "seq_compare.csv");
      break;
    case ExperimentKind::markov:
      emit(run_markov_comparison(config, resolve_flow(config, "dualmoon", 2)).csv(), "markov.csv");
      break;
  }
  return written;
}

}  // namespace nfqmc
