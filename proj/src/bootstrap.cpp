#include "clustermatch/bootstrap.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "clustermatch/error.hpp"
#include "clustermatch/parallel.hpp"

namespace clustermatch {

std::string_view to_string(BootstrapKind k) { return k == BootstrapKind::ClusterWeighted ? "cluster" : "unit"; }

namespace {

std::vector<int> draw_counts(std::size_t n, Rng& rng) {
  if (n == 0) throw DomainError("draw_counts: need at least one category");
  std::vector<int> counts(n, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t k = 0; k < n; ++k) ++counts[pick(rng)];
  return counts;
}

void check_sample(const LinearizedSample& s) {
  if (s.psi.empty()) throw DomainError("bootstrap: no linearized values");
  if (s.cluster_of.size() != s.psi.size() || s.denominator_weight.size() != s.psi.size())
    throw DomainError("bootstrap: per-unit inputs have different lengths");
  for (auto c : s.cluster_of)
    if (c >= s.n_clusters) throw DomainError("bootstrap: cluster index out of range");
}

void check_config(const BootstrapConfig& cfg) {
  if (cfg.reps < 1) throw DomainError("bootstrap: reps must be >= 1");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw DomainError("bootstrap: level must be in (0,1)");
}

// Sums of psi and of the denominator weight per resampling unit.
struct Totals {
  std::vector<double> psi;
  std::vector<double> weight;
  double norm = 0.0;
};

Totals cluster_totals(const LinearizedSample& s) {
  Totals t;
  t.psi.assign(s.n_clusters, 0.0);
  t.weight.assign(s.n_clusters, 0.0);
  for (std::size_t i = 0; i < s.psi.size(); ++i) {
    t.psi[s.cluster_of[i]] += s.psi[i];
    t.weight[s.cluster_of[i]] += s.denominator_weight[i];
    t.norm += s.denominator_weight[i];
  }
  return t;
}

Totals unit_totals(const LinearizedSample& s) {
  Totals t;
  t.psi.assign(s.psi.begin(), s.psi.end());
  t.weight.assign(s.denominator_weight.begin(), s.denominator_weight.end());
  for (double w : t.weight) t.norm += w;
  return t;
}

double ratio_replicate(const Totals& t, std::span<const int> counts) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    num += counts[k] * t.psi[k];
    den += counts[k] * t.weight[k];
  }
  return den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : num / den;
}

double centered_replicate(const Totals& t, std::span<const int> counts, double point) {
  double acc = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) acc += counts[k] * (t.psi[k] - point * t.weight[k]);
  return acc / std::sqrt(t.norm);
}

BootstrapResult run(const Totals& totals, const BootstrapConfig& cfg, double point) {
  if (!(totals.norm > 0.0)) throw DomainError("bootstrap: denominator weights sum to zero");
  BootstrapResult res;
  res.replicates.resize(static_cast<std::size_t>(cfg.reps));
  std::vector<std::size_t> redraws(res.replicates.size(), 0);

  parallel_for(res.replicates.size(), cfg.threads, [&](std::size_t b) {
    Rng rng = make_rng(cfg.seed, b);
    for (;;) {
      const auto counts = draw_counts(totals.psi.size(), rng);
      const double v = cfg.form == ReplicateForm::Ratio ? ratio_replicate(totals, counts)
                                                        : centered_replicate(totals, counts, point);
      if (std::isnan(v)) {
        ++redraws[b];
        continue;
      }
      res.replicates[b] = v;
      return;
    }
  });

  for (auto r : redraws) res.redraws += r;
  res.variance = sample_variance(res.replicates);
  if (cfg.form == ReplicateForm::ScaledCentered) res.variance /= totals.norm;
  res.ci = confidence_interval(point, res.variance, cfg.level);
  return res;
}

}  // namespace

std::vector<int> draw_cluster_counts(std::size_t n_clusters, Rng& rng) { return draw_counts(n_clusters, rng); }

std::vector<int> draw_unit_counts(std::size_t n_units, Rng& rng) { return draw_counts(n_units, rng); }

double cluster_replicate(const LinearizedSample& sample, std::span<const int> cluster_counts) {
  check_sample(sample);
  if (cluster_counts.size() != sample.n_clusters) throw DomainError("cluster_replicate: wrong number of counts");
  return ratio_replicate(cluster_totals(sample), cluster_counts);
}

double unit_replicate(const LinearizedSample& sample, std::span<const int> unit_counts) {
  check_sample(sample);
  if (unit_counts.size() != sample.psi.size()) throw DomainError("unit_replicate: wrong number of counts");
  return ratio_replicate(unit_totals(sample), unit_counts);
}

BootstrapResult cluster_weighted_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point) {
  check_sample(sample);
  check_config(cfg);
  if (sample.n_clusters < 2)
    throw DomainError("cluster_weighted_variance: a single cluster gives a degenerate resampling variance");
  return run(cluster_totals(sample), cfg, point);
}

BootstrapResult unit_weighted_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point) {
  check_sample(sample);
  check_config(cfg);
  return run(unit_totals(sample), cfg, point);
}

BootstrapResult bootstrap_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point) {
  return cfg.kind == BootstrapKind::ClusterWeighted ? cluster_weighted_variance(sample, cfg, point)
                                                    : unit_weighted_variance(sample, cfg, point);
}

std::pair<double, double> confidence_interval(double point, double variance, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence_interval: level must be in (0,1)");
  if (!(variance >= 0.0)) throw DomainError("confidence_interval: variance must be >= 0");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), (1.0 + level) / 2.0);
  const double half = z * std::sqrt(variance);
  return {point - half, point + half};
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

void write_replicates_csv(std::ostream& out, const BootstrapResult& result) {
  out << "replicate,value\n";
  for (std::size_t b = 0; b < result.replicates.size(); ++b)
    out << b << ',' << fmt::format("{}", result.replicates[b]) << '\n';
}

}  // namespace clustermatch
