// nfqmc: train flows, draw and weight samples, run the comparison experiments.
//
// Exit codes: 0 success, 1 configuration error, 2 numeric failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nfqmc/estimators.hpp"
#include "nfqmc/experiments.hpp"
#include "nfqmc/flow_io.hpp"
#include "nfqmc/training.hpp"

namespace fs = std::filesystem;
using namespace nfqmc;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

struct Common {
  std::string seq = "sobol";
  std::string map = "inverse";
  std::size_t n = std::size_t{1} << 14;
  std::size_t reps = 100;
  std::vector<std::size_t> dims{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::uint64_t seed = 0;
  std::string flow;
  std::string out;
  bool train = false;
};

void add_sampling_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--seq", c.seq, "point sequence")
      ->check(CLI::IsMember({"mc", "sobol", "halton", "lattice"}))
      ->capture_default_str();
  cmd->add_option("--map", c.map, "uniform-to-Gaussian map")
      ->check(CLI::IsMember({"inverse", "box-muller"}))
      ->capture_default_str();
  cmd->add_option("--n", c.n, "points per estimate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", c.seed, "master seed")->capture_default_str();
}

// Writes to --out DIR/name when given, stdout otherwise.
void emit(const CsvTable& t, const std::string& out, const std::string& name) {
  if (out.empty()) {
    std::cout << t.str();
    return;
  }
  fs::create_directories(out);
  t.write(fs::path(out) / name);
  std::cerr << "wrote " << (fs::path(out) / name).string() << '\n';
}

int cmd_train(const std::string& target, std::size_t d, const Common& c,
              std::optional<std::size_t> steps, std::optional<std::size_t> batch,
              std::optional<double> lr) {
  auto recipe = default_recipe(target, d);
  if (steps) recipe.train.steps = *steps;
  if (batch) recipe.train.batch = *batch;
  if (lr) recipe.train.learning_rate = *lr;
  const std::string name = flow_name(target, d);
  recipe.train.seed = derive_seed(c.seed, "train/" + name, 0);
  auto flow = FlowModel::create(recipe.arch, derive_seed(c.seed, "init/" + name, 0));
  std::cerr << "training " << name << ": " << to_string(recipe.train.objective) << ", "
            << recipe.train.steps << " steps, batch " << recipe.train.batch << ", "
            << flow.parameter_count() << " parameters\n";
  const auto result = train(std::move(flow), make_target(target, d), recipe.train);
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  const fs::path flow_path = c.flow.empty() ? dir / (name + ".json") : fs::path(c.flow);
  flow_save(result.flow, flow_path);
  std::ofstream trace(dir / (name + "_loss.csv"));
  write_loss_trace(trace, result.losses);
  std::cerr << "final loss " << result.losses.back() << "; wrote " << flow_path.string() << '\n';
  return 0;
}

WeightedSample weighted(const FlowModel& flow, const TargetDensity& target, const Common& c,
                        std::size_t r) {
  const auto kind = parse_sequence_kind(c.seq);
  if (kind == SequenceKind::sobol && (c.n & (c.n - 1)) != 0) {
    std::cerr << "warning: sobol with n = " << c.n << " is not a power of 2\n";
  }
  const auto pts = replication_points(kind, c.n, flow.dim(), derive_seed(c.seed, "cli/" + c.seq, r));
  return make_weighted_sample(flow, target, pts, parse_map_kind(c.map));
}

int cmd_sample(const std::string& target_name, std::size_t d, const Common& c) {
  std::optional<FlowModel> flow;
  if (!c.flow.empty()) flow = flow_load(c.flow);
  const std::size_t dim = flow ? flow->dim() : d;
  const auto kind = parse_sequence_kind(c.seq);
  const auto pts = replication_points(kind, c.n, dim, derive_seed(c.seed, "cli/" + c.seq, 0));
  const auto gauss = gaussian_map(pts, parse_map_kind(c.map));
  std::optional<TargetDensity> target;
  if (!target_name.empty()) target = make_target(target_name, dim);
  CsvTable t;
  for (std::size_t j = 0; j < dim; ++j) t.header.push_back("x" + std::to_string(j + 1));
  if (target && flow) t.header.push_back("log_weight");
  std::optional<WeightedSample> ws;
  if (target && flow) ws = make_weighted_sample(*flow, *target, pts, parse_map_kind(c.map));
  for (std::size_t i = 0; i < c.n; ++i) {
    std::vector<double> x;
    if (ws) {
      const auto p = ws->point(i);
      x.assign(p.begin(), p.end());
    } else if (flow) {
      x = flow->forward(gauss.row(i)).first;
    } else {
      const auto z = gauss.row(i);
      x.assign(z.begin(), z.end());
    }
    std::vector<std::string> row;
    for (double v : x) row.push_back(format_real(v));
    if (ws) row.push_back(format_real(ws->log_weights[i]));
    t.add(std::move(row));
  }
  emit(t, c.out, "samples.csv");
  return 0;
}

int cmd_estimate(const std::string& target_name, const std::string& estimator,
                 const std::vector<std::string>& phis, const Common& c) {
  if (c.flow.empty()) throw ContractError("estimate needs --flow PATH");
  const auto flow = flow_load(c.flow);
  const auto target = make_target(target_name, flow.dim());
  std::vector<TestFunction> fns;
  if (phis.empty()) {
    fns = target_name == "gmm" ? gmm_test_functions() : dualmoon_test_functions();
  } else {
    for (const auto& p : phis) fns.push_back(test_function(target_name + ":" + p));
  }
  if (estimator == "is" && !target.log_norm_const) {
    throw ContractError("target '" + target_name + "' is unnormalized; use --estimator snis");
  }
  CsvTable t;
  t.header = {"rep", "phi", "estimate"};
  for (std::size_t r = 0; r < c.reps; ++r) {
    const auto ws = weighted(flow, target, c, r);
    std::optional<ChainOutput> chain;
    if (estimator == "imrth") chain = imrth_chain(ws, derive_seed(c.seed, "cli/imrth-accept", r));
    if (estimator == "iimc") chain = iimc_chain(ws, std::nullopt, derive_seed(c.seed, "cli/iimc-round", r));
    for (const auto& f : fns) {
      double v = 0.0;
      if (chain) {
        v = chain->mean(f);
      } else if (estimator == "is") {
        v = is_estimate(ws, f);
      } else {
        v = snis_estimate(ws, f);
      }
      t.add({std::to_string(r), f.name.substr(f.name.find(':') + 1), format_real(v)});
    }
  }
  emit(t, c.out, "estimates.csv");
  return 0;
}

int cmd_experiment(const std::string& which, const Common& c, std::size_t n_min, unsigned threads) {
  RunConfig cfg;
  cfg.experiment = parse_experiment_kind(which);
  cfg.sequence = parse_sequence_kind(c.seq);
  cfg.map = parse_map_kind(c.map);
  cfg.n = c.n;
  cfg.n_min = n_min;
  cfg.reps = c.reps;
  cfg.dims = c.dims;
  cfg.seed = c.seed;
  cfg.flow = c.flow.empty() ? fs::path("flows") : fs::path(c.flow);
  cfg.out = c.out.empty() ? fs::path(".") : fs::path(c.out);
  cfg.train_missing = c.train;
  cfg.threads = threads;
  cfg.progress = [](const std::string& m) { std::cerr << m << '\n'; };
  for (const auto& p : run_experiment(cfg)) std::cerr << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalizing-flow proposals driven by randomized quasi-Monte Carlo points"};
  app.require_subcommand(1);
  Common c;

  auto* train_cmd = app.add_subcommand("train", "train a flow on a benchmark target");
  std::string train_target = "dualmoon";
  std::size_t train_dim = 2;
  std::optional<std::size_t> steps, batch;
  std::optional<double> lr;
  train_cmd->add_option("--target", train_target)->check(CLI::IsMember({"gmm", "dualmoon"}))->capture_default_str();
  train_cmd->add_option("--dim", train_dim)->check(CLI::Range(2, 256))->capture_default_str();
  train_cmd->add_option("--steps", steps, "optimizer steps (recipe default when omitted)");
  train_cmd->add_option("--batch", batch, "batch size (recipe default when omitted)");
  train_cmd->add_option("--lr", lr, "Adam learning rate (recipe default when omitted)");
  train_cmd->add_option("--seed", c.seed)->capture_default_str();
  train_cmd->add_option("--flow", c.flow, "output flow file (default OUT/<target>-d<dim>.json)");
  train_cmd->add_option("--out", c.out, "output directory for the flow and loss trace");

  auto* sample_cmd = app.add_subcommand("sample", "draw points, optionally through a flow");
  std::string sample_target;
  std::size_t sample_dim = 2;
  add_sampling_flags(sample_cmd, c);
  sample_cmd->add_option("--dim", sample_dim, "dimension when no flow is given")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--flow", c.flow, "flow file");
  sample_cmd->add_option("--target", sample_target, "add log importance weights for this target")
      ->check(CLI::IsMember({"gmm", "dualmoon"}));
  sample_cmd->add_option("--out", c.out, "output directory (stdout when omitted)");

  auto* est_cmd = app.add_subcommand("estimate", "replicated estimates of test functions");
  std::string est_target = "dualmoon", estimator = "snis";
  std::vector<std::string> phis;
  add_sampling_flags(est_cmd, c);
  est_cmd->add_option("--target", est_target)->check(CLI::IsMember({"gmm", "dualmoon"}))->capture_default_str();
  est_cmd->add_option("--estimator", estimator)
      ->check(CLI::IsMember({"is", "snis", "imrth", "iimc"}))
      ->capture_default_str();
  est_cmd->add_option("--phi", phis, "test functions, e.g. phi1 (all when omitted)");
  est_cmd->add_option("--reps", c.reps)->check(CLI::PositiveNumber)->capture_default_str();
  est_cmd->add_option("--flow", c.flow, "flow file")->required();
  est_cmd->add_option("--out", c.out, "output directory (stdout when omitted)");

  auto* exp_cmd = app.add_subcommand("experiment", "run a comparison experiment, writing CSV");
  std::string which;
  std::size_t n_min = 256;
  unsigned threads = 0;
  exp_cmd->add_option("name", which, "experiment")
      ->required()
      ->check(CLI::IsMember({"gmm", "dim-sweep", "seq-compare", "markov"}));
  add_sampling_flags(exp_cmd, c);
  exp_cmd->add_option("--reps", c.reps)->check(CLI::PositiveNumber)->capture_default_str();
  exp_cmd->add_option("--dims", c.dims, "dimensions for dim-sweep")->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--n-min", n_min, "smallest n of the seq-compare ladder")->capture_default_str();
  exp_cmd->add_option("--threads", threads, "worker threads (0: all cores)")->capture_default_str();
  exp_cmd->add_option("--flow", c.flow, "flow file or directory (default flows)");
  exp_cmd->add_option("--out", c.out, "output directory (default .)");
  exp_cmd->add_flag("--train", c.train, "train and save flows that are missing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_target, train_dim, c, steps, batch, lr);
    if (*sample_cmd) return cmd_sample(sample_target, sample_dim, c);
    if (*est_cmd) return cmd_estimate(est_target, estimator, phis, c);
    if (*exp_cmd) return cmd_experiment(which, c, n_min, threads);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
