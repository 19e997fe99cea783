#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "clustermatch/bootstrap.hpp"
#include "clustermatch/dataset.hpp"
#include "clustermatch/error.hpp"
#include "clustermatch/matching.hpp"
#include "clustermatch/parallel.hpp"
#include "clustermatch/pipeline.hpp"
#include "clustermatch/simulation.hpp"
#include "clustermatch/transforms.hpp"

namespace clustermatch::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Invalid configuration discovered after parsing; reported as a usage error.
struct UsageError : Error {
  using Error::Error;
};

struct DataOptions {
  std::string data;
  std::string outcome;
  std::string treatment;
  std::string cluster;
  std::vector<std::string> unit_covariates;
  std::vector<std::string> cluster_covariates;
  bool unit_level = false;
  std::vector<std::string> box_cox;
};

struct MatchOptions {
  std::string estimand = "ate";
  std::string match_on = "all";
  int m = 3;
  double ridge = 0.0;
  std::string ties = "lowest-id";
};

struct EstimateOptions {
  DataOptions data;
  MatchOptions match;
  std::string bias_correct = "sieve";
  int degree = 2;
  int knots = 3;
  std::string bootstrap = "cluster";
  int reps = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  unsigned threads = 0;
  std::string out;
  std::string match_out;
  std::string replicates_out;
};

struct BalanceOptions {
  DataOptions data;
  MatchOptions match;
  bool adjusted = false;
  unsigned threads = 0;
  std::string out;
};

struct SimulateOptions {
  int clusters = 50;
  int cluster_size = 50;
  std::vector<int> size_range;
  std::vector<double> beta{1, 1, 1, 1, 1, 1};
  double gamma = 2.0;
  int reps = 200;
  int bootstrap_reps = 500;
  std::uint64_t seed = 20240101;
  std::string estimand = "ate";
  std::vector<std::string> procedures{"P1", "P2", "P3", "P4"};
  std::string bias_correct = "sieve";
  int degree = 2;
  int knots = 3;
  int m = 3;
  std::string ties = "average";
  double level = 0.95;
  unsigned threads = 0;
  std::string out;
};

const CLI::Validator kOpenUnit(
    [](std::string& s) -> std::string {
      double v = 0.0;
      if (!CLI::detail::lexical_cast(s, v) || !(v > 0.0 && v < 1.0)) return "must lie strictly between 0 and 1";
      return {};
    },
    "(0,1)");

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("--data", o.data, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
  app->add_option("--outcome", o.outcome, "Outcome column")->required();
  app->add_option("--treatment", o.treatment, "Treatment column (0/1)")->required();
  app->add_option("--cluster", o.cluster, "Cluster id column")->required();
  app->add_option("--unit-covariates", o.unit_covariates, "Unit-level covariate columns")->delimiter(',');
  app->add_option("--cluster-covariates", o.cluster_covariates, "Cluster-level covariate columns")->delimiter(',');
  app->add_flag("--unit-level", o.unit_level, "Treatment is assigned per unit rather than per cluster");
  app->add_option("--box-cox", o.box_cox, "Covariates to Box-Cox transform before matching")->delimiter(',');
}

void add_match_options(CLI::App* app, MatchOptions& o) {
  app->add_option("--estimand", o.estimand, "ate or att")->check(CLI::IsMember({"ate", "att"}))->capture_default_str();
  app->add_option("--m", o.m, "Number of matches")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--ridge", o.ridge, "Ridge added to the matching covariance")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--ties", o.ties, "Tie handling: lowest-id or average")
      ->check(CLI::IsMember({"lowest-id", "average"}))
      ->capture_default_str();
}

Estimand parse_estimand(const std::string& s) { return s == "att" ? Estimand::ATT : Estimand::ATE; }
MatchScheme parse_scheme(const std::string& s) {
  return s == "cluster" ? MatchScheme::ClusterOnly : MatchScheme::ClusterAndUnit;
}
TieHandling parse_ties(const std::string& s) { return s == "average" ? TieHandling::Average : TieHandling::LowestId; }

Procedure parse_procedure(const std::string& s) {
  if (s == "P1") return Procedure::P1;
  if (s == "P2") return Procedure::P2;
  if (s == "P3") return Procedure::P3;
  return Procedure::P4;
}

unsigned resolve_threads(unsigned t) { return t == 0 ? default_threads() : t; }

MatchConfig match_config(const MatchOptions& o, unsigned threads) {
  MatchConfig c;
  c.m = o.m;
  c.scheme = parse_scheme(o.match_on);
  c.ridge = o.ridge;
  c.ties = parse_ties(o.ties);
  c.threads = threads;
  return c;
}

struct LoadedData {
  Dataset ds;
  std::vector<std::pair<std::string, BoxCoxTransform>> box_cox;
};

LoadedData load(const DataOptions& o) {
  Schema schema;
  schema.outcome = o.outcome;
  schema.treatment = o.treatment;
  schema.cluster = o.cluster;
  schema.unit_covariates = o.unit_covariates;
  schema.cluster_covariates = o.cluster_covariates;
  schema.level = o.unit_level ? TreatmentLevel::UnitLevel : TreatmentLevel::ClusterLevel;
  LoadedData out{ingest_dataset(o.data, schema), {}};
  for (const auto& col : o.box_cox) out.box_cox.emplace_back(col, box_cox_column(out.ds, col));
  require_valid(out.ds);
  return out;
}

Json data_echo(const DataOptions& o) {
  Json j;
  j["data"] = o.data;
  j["outcome"] = o.outcome;
  j["treatment"] = o.treatment;
  j["cluster"] = o.cluster;
  j["unit_covariates"] = o.unit_covariates;
  j["cluster_covariates"] = o.cluster_covariates;
  j["treatment_level"] = o.unit_level ? "unit" : "cluster";
  j["box_cox"] = o.box_cox;
  return j;
}

Json match_echo(const MatchOptions& o) {
  Json j;
  j["estimand"] = o.estimand;
  j["match_on"] = o.match_on;
  j["m"] = o.m;
  j["ridge"] = o.ridge;
  j["ties"] = o.ties;
  return j;
}

// Pending output files; nothing touches disk until commit().
class OutputSet {
 public:
  void add(const std::string& path, std::string content) {
    if (!path.empty()) files_.emplace_back(path, std::move(content));
  }

  void commit() {
    std::vector<fs::path> temps;
    try {
      for (const auto& [path, content] : files_) {
        fs::path tmp = path;
        tmp += ".tmp";
        temps.push_back(tmp);
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << content;
        f.close();
        if (!f) throw Error(fmt::format("cannot write '{}'", path));
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
      throw;
    }
    for (std::size_t k = 0; k < files_.size(); ++k) fs::rename(temps[k], files_[k].first);
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

int cmd_estimate(const EstimateOptions& o, std::ostream& out) {
  const auto threads = resolve_threads(o.threads);
  auto loaded = load(o.data);
  const Dataset& ds = loaded.ds;

  EstimationConfig cfg;
  cfg.estimand = parse_estimand(o.match.estimand);
  cfg.match = match_config(o.match, threads);
  if (o.bias_correct == "none") {
    cfg.basis.reset();
  } else {
    BasisSpec spec;
    spec.kind = o.bias_correct == "spline" ? BasisKind::LinearSpline : BasisKind::SievePoly;
    spec.degree = o.degree;
    spec.knots_per_dim = o.knots;
    cfg.basis = spec;
  }
  cfg.bootstrap.kind = o.bootstrap == "unit" ? BootstrapKind::UnitWeighted : BootstrapKind::ClusterWeighted;
  cfg.bootstrap.reps = o.reps;
  cfg.bootstrap.seed = o.seed;
  cfg.bootstrap.level = o.level;
  cfg.bootstrap.threads = threads;

  const Estimation e = estimate(ds, cfg);
  const auto& r = e.report;

  // K summary over the units that can be used as matches.
  double k_min = 0.0, k_max = 0.0, k_sum = 0.0;
  std::size_t pool = 0, unused = 0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    if (cfg.estimand == Estimand::ATT && ds.units[i].treatment == 1) continue;
    const double k = e.match.k_weight[i];
    k_min = pool == 0 ? k : std::min(k_min, k);
    k_max = pool == 0 ? k : std::max(k_max, k);
    k_sum += k;
    unused += k == 0.0;
    ++pool;
  }

  Json j;
  j["estimand"] = std::string(to_string(r.estimand));
  j["tau_mat"] = r.tau_mat;
  j["bias_term"] = r.b_hat;
  j["tau"] = r.tau;
  j["variance"] = r.variance;
  j["ci_lo"] = r.ci.first;
  j["ci_hi"] = r.ci.second;
  j["n_units"] = ds.n_units();
  j["n_clusters"] = ds.n_clusters();
  j["n_treated"] = ds.n_treated();
  j["n_control"] = ds.n_control();
  j["k_summary"] = {{"pool", pool},
                    {"min", k_min},
                    {"max", k_max},
                    {"mean", pool ? k_sum / static_cast<double>(pool) : 0.0},
                    {"unused", unused}};
  j["plugin_variance"] = {{"sigma1_sq", e.plugin.sigma1_sq}, {"sigma2_sq", e.plugin.sigma2_sq}};
  j["bootstrap_redraws"] = e.bootstrap.redraws;
  Json bc = Json::array();
  for (const auto& [col, t] : loaded.box_cox) bc.push_back({{"column", col}, {"lambda", t.lambda}, {"shift", t.shift}});
  j["box_cox"] = bc;

  Json config = data_echo(o.data);
  config.update(match_echo(o.match));
  config["bias_correct"] = o.bias_correct;
  config["degree"] = o.degree;
  config["knots"] = o.knots;
  config["bootstrap"] = o.bootstrap;
  config["reps"] = o.reps;
  config["seed"] = o.seed;
  config["level"] = o.level;
  j["config"] = config;

  OutputSet files;
  files.add(o.out, j.dump(2) + "\n");
  if (!o.match_out.empty()) {
    std::ostringstream s;
    write_match_csv(s, ds, e.match);
    files.add(o.match_out, s.str());
  }
  if (!o.replicates_out.empty()) {
    std::ostringstream s;
    write_replicates_csv(s, e.bootstrap);
    files.add(o.replicates_out, s.str());
  }
  files.commit();

  out << fmt::format("{:<12}{}\n", "estimand", to_string(r.estimand));
  out << fmt::format("{:<12}{} units, {} clusters, {} treated\n", "data", ds.n_units(), ds.n_clusters(),
                     ds.n_treated());
  out << fmt::format("{:<12}{:>14.6f}\n", "tau_mat", r.tau_mat);
  out << fmt::format("{:<12}{:>14.6f}\n", "bias_term", r.b_hat);
  out << fmt::format("{:<12}{:>14.6f}\n", "tau", r.tau);
  out << fmt::format("{:<12}{:>14.6f}\n", "variance", r.variance);
  out << fmt::format("{:<12}[{:.6f}, {:.6f}] at level {}\n", "ci", r.ci.first, r.ci.second, o.level);
  return kExitOk;
}

int cmd_balance(const BalanceOptions& o, std::ostream& out) {
  auto loaded = load(o.data);
  const Dataset& ds = loaded.ds;
  std::optional<MatchResult> match;
  if (o.adjusted) match = match_units(ds, match_config(o.match, resolve_threads(o.threads)), parse_estimand(o.match.estimand));
  const auto table = balance_table(ds, match ? &*match : nullptr);

  std::ostringstream csv;
  write_balance_csv(csv, table);
  OutputSet files;
  files.add(o.out, csv.str());
  files.commit();

  for (const auto& row : table.rows) {
    out << fmt::format("{:<16}{:>12.4f}", row.covariate, row.smd_unadjusted);
    if (row.smd_adjusted) out << fmt::format("{:>12.4f}", *row.smd_adjusted);
    out << '\n';
  }
  return kExitOk;
}

SimulationConfig simulation_config(const SimulateOptions& o) {
  SimulationConfig cfg;
  cfg.r_clusters = o.clusters;
  cfg.cluster_size = o.size_range.empty() ? ClusterSize::fixed(o.cluster_size)
                                          : ClusterSize::uniform(o.size_range[0], o.size_range[1]);
  if (o.beta.size() != 6) throw UsageError("--beta needs exactly 6 values");
  std::copy(o.beta.begin(), o.beta.end(), cfg.beta.begin());
  cfg.gamma = o.gamma;
  cfg.reps = o.reps;
  cfg.bootstrap_reps = o.bootstrap_reps;
  cfg.seed = o.seed;
  cfg.procedures.clear();
  for (const auto& p : o.procedures) cfg.procedures.push_back(parse_procedure(p));
  cfg.estimand = parse_estimand(o.estimand);
  cfg.basis.kind = o.bias_correct == "spline" ? BasisKind::LinearSpline : BasisKind::SievePoly;
  cfg.basis.degree = o.degree;
  cfg.basis.knots_per_dim = o.knots;
  cfg.m = o.m;
  cfg.ties = parse_ties(o.ties);
  cfg.level = o.level;
  cfg.threads = resolve_threads(o.threads);
  try {
    validate(cfg);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const auto cfg = simulation_config(o);
  const auto summary = monte_carlo(cfg);
  std::ostringstream csv;
  write_summary_csv(csv, summary);
  OutputSet files;
  files.add(o.out, csv.str());
  files.commit();

  out << fmt::format("{} {} {} reps={} B={} seed={}\n", to_string(cfg.estimand), to_string(cfg.basis.kind),
                     cfg.design_label(), cfg.reps, cfg.bootstrap_reps, cfg.seed);
  for (const auto& c : summary.cells)
    out << fmt::format("{}  bias {:>9.4f}  avg var {:>9.4f}  emp var {:>9.4f}  coverage {:>6.3f}\n",
                       to_string(c.procedure), c.bias, c.avg_variance, c.empirical_variance, c.coverage);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bias-corrected matching estimators for clustered observational data", "clustermatch"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  EstimateOptions est;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate ATE or ATT with a bootstrap confidence interval");
  add_data_options(estimate_cmd, est.data);
  add_match_options(estimate_cmd, est.match);
  estimate_cmd->add_option("--match-on", est.match.match_on, "Match on cluster covariates or all covariates")
      ->check(CLI::IsMember({"cluster", "all"}))
      ->capture_default_str();
  estimate_cmd->add_option("--bias-correct", est.bias_correct, "Outcome model: sieve, spline or none")
      ->check(CLI::IsMember({"sieve", "spline", "none"}))
      ->capture_default_str();
  estimate_cmd->add_option("--degree", est.degree, "Sieve polynomial degree")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  estimate_cmd->add_option("--knots", est.knots, "Spline knots per dimension")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  estimate_cmd->add_option("--bootstrap", est.bootstrap, "cluster or unit weighted bootstrap")
      ->check(CLI::IsMember({"cluster", "unit"}))
      ->capture_default_str();
  estimate_cmd->add_option("--reps", est.reps, "Bootstrap replicates")
      ->check(CLI::Range(2, 100000000))
      ->capture_default_str();
  estimate_cmd->add_option("--seed", est.seed, "Random seed")->capture_default_str();
  estimate_cmd->add_option("--level", est.level, "Confidence level")->check(kOpenUnit)->capture_default_str();
  estimate_cmd->add_option("--threads", est.threads, "Worker threads (0 = all cores)")->capture_default_str();
  estimate_cmd->add_option("--out", est.out, "JSON report path")->required();
  estimate_cmd->add_option("--match-out", est.match_out, "Optional matched-set CSV");
  estimate_cmd->add_option("--replicates-out", est.replicates_out, "Optional bootstrap replicate CSV");

  BalanceOptions bal;
  auto* balance_cmd = app.add_subcommand("balance", "Standardized mean differences before and after matching");
  add_data_options(balance_cmd, bal.data);
  add_match_options(balance_cmd, bal.match);
  balance_cmd->add_option("--match-on", bal.match.match_on, "Match on cluster or all covariates; adds the adjusted column")
      ->check(CLI::IsMember({"cluster", "all"}));
  balance_cmd->add_option("--threads", bal.threads, "Worker threads (0 = all cores)")->capture_default_str();
  balance_cmd->add_option("--out", bal.out, "Balance CSV path")->required();

  SimulateOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo study of Procedures P1-P4");
  // Values come from the [simulate] table of the file; flags override them.
  app.set_config("--config", "", "TOML file with a [simulate] table of option values");
  simulate_cmd->fallthrough();
  simulate_cmd->add_option("--clusters", sim.clusters, "Number of clusters")->capture_default_str();
  auto* size_opt =
      simulate_cmd->add_option("--cluster-size", sim.cluster_size, "Fixed cluster size")->capture_default_str();
  simulate_cmd->add_option("--size-range", sim.size_range, "Cluster sizes drawn uniformly from LO..HI")
      ->expected(2)
      ->excludes(size_opt);
  simulate_cmd->add_option("--beta", sim.beta, "Six unit-covariate coefficients")->delimiter(',')->capture_default_str();
  simulate_cmd->add_option("--gamma", sim.gamma, "True treatment effect")->capture_default_str();
  simulate_cmd->add_option("--reps", sim.reps, "Monte Carlo replications")->capture_default_str();
  simulate_cmd->add_option("--bootstrap-reps", sim.bootstrap_reps, "Bootstrap replicates")->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  simulate_cmd->add_option("--estimand", sim.estimand, "ate or att")
      ->check(CLI::IsMember({"ate", "att"}))
      ->capture_default_str();
  simulate_cmd->add_option("--procedures", sim.procedures, "Subset of P1,P2,P3,P4")
      ->delimiter(',')
      ->check(CLI::IsMember({"P1", "P2", "P3", "P4"}))
      ->capture_default_str();
  simulate_cmd->add_option("--bias-correct", sim.bias_correct, "sieve or spline")
      ->check(CLI::IsMember({"sieve", "spline"}))
      ->capture_default_str();
  simulate_cmd->add_option("--degree", sim.degree, "Sieve polynomial degree")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate_cmd->add_option("--knots", sim.knots, "Spline knots per dimension")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  simulate_cmd->add_option("--m", sim.m, "Number of matches")->capture_default_str();
  simulate_cmd->add_option("--ties", sim.ties, "lowest-id or average")
      ->check(CLI::IsMember({"lowest-id", "average"}))
      ->capture_default_str();
  simulate_cmd->add_option("--level", sim.level, "Confidence level")->check(kOpenUnit)->capture_default_str();
  simulate_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all cores)")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "Summary CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  bal.adjusted = balance_cmd->count("--match-on") > 0;
  try {
    if (estimate_cmd->parsed()) return cmd_estimate(est, out);
    if (balance_cmd->parsed()) return cmd_balance(bal, out);
    return cmd_simulate(sim, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace clustermatch::cli
