#include <algorithm>
#include <cmath>
#include <numeric>

#include "shapdoor/dataset.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

void SynthConfig::validate() const {
  if (n_samples < 4) throw ConfigError("synthetic: n_samples must be at least 4");
  if (n_features == 0) throw ConfigError("synthetic: n_features must be positive");
  if (n_informative > n_features) throw ConfigError("synthetic: n_informative exceeds n_features");
  if (benign_subpopulations < 1) throw ConfigError("synthetic: benign_subpopulations must be >= 1");
  if (malware_subpopulations < 1) throw ConfigError("synthetic: malware_subpopulations must be >= 1");
  if (!(class_separation > 0.0)) throw ConfigError("synthetic: class_separation must be > 0");
  if (!(integer_feature_fraction >= 0.0 && integer_feature_fraction <= 1.0)) {
    throw ConfigError("synthetic: integer_feature_fraction must lie in [0, 1]");
  }
  if (!(malware_fraction > 0.0 && malware_fraction < 1.0)) {
    throw ConfigError("synthetic: malware_fraction must lie in (0, 1)");
  }
  if (!(malware_signal_rate > 0.0 && malware_signal_rate <= 1.0)) {
    throw ConfigError("synthetic: malware_signal_rate must lie in (0, 1]");
  }
}

namespace {

constexpr double kCenterSpread = 3.0;

struct Cluster {
  std::vector<double> center;
  double scale = 1.0;
  double weight = 1.0;
};

std::size_t pick_weighted(const std::vector<Cluster>& clusters, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    u -= clusters[k].weight;
    if (u < 0.0) return k;
  }
  return clusters.size() - 1;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0x5e7a);
  const std::size_t d = cfg.n_features;

  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<bool> informative(d, false);
  for (std::size_t k = 0; k < cfg.n_informative; ++k) informative[perm[k]] = true;

  rng.shuffle(perm);
  const auto n_integer = static_cast<std::size_t>(
      std::llround(cfg.integer_feature_fraction * static_cast<double>(d)));
  std::vector<bool> integer(d, false);
  for (std::size_t k = 0; k < n_integer; ++k) integer[perm[k]] = true;

  // Benign: many broad subpopulations.
  std::vector<Cluster> benign(cfg.benign_subpopulations);
  for (auto& c : benign) {
    c.center.resize(d);
    for (double& v : c.center) v = kCenterSpread * rng.normal();
    c.scale = rng.uniform(1.0, 3.0);
    c.weight = rng.uniform(0.5, 1.5);
  }
  std::vector<double> benign_mean(d, 0.0);
  for (const auto& c : benign) {
    for (std::size_t j = 0; j < d; ++j) benign_mean[j] += c.center[j] / static_cast<double>(benign.size());
  }

  // Malware: fewer, tighter clusters pushed along a per-feature direction on
  // the informative columns.
  std::vector<double> direction(d);
  for (double& s : direction) s = rng.uniform() < 0.5 ? -1.0 : 1.0;
  std::vector<Cluster> malware(cfg.malware_subpopulations);
  for (auto& c : malware) {
    c.center.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      c.center[j] = benign_mean[j] + direction[j] * cfg.class_separation * rng.uniform(0.75, 1.25);
    }
    c.scale = rng.uniform(0.3, 1.0);
    c.weight = rng.uniform(0.5, 1.5);
  }

  const double benign_total = std::accumulate(
      benign.begin(), benign.end(), 0.0, [](double a, const Cluster& c) { return a + c.weight; });
  const double malware_total = std::accumulate(
      malware.begin(), malware.end(), 0.0, [](double a, const Cluster& c) { return a + c.weight; });

  const auto n_malware = static_cast<std::size_t>(
      std::llround(cfg.malware_fraction * static_cast<double>(cfg.n_samples)));
  Matrix x(cfg.n_samples, d);
  std::vector<int> labels(cfg.n_samples, kBenign);
  std::fill(labels.end() - static_cast<std::ptrdiff_t>(n_malware), labels.end(), kMalware);
  rng.shuffle(labels);

  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    // Every row draws a benign subpopulation for its non-informative columns,
    // so those columns carry no class signal.
    const Cluster& background = benign[pick_weighted(benign, benign_total, rng)];
    const Cluster& own =
        labels[i] == kMalware ? malware[pick_weighted(malware, malware_total, rng)] : background;
    for (std::size_t j = 0; j < d; ++j) {
      // A malware row shows the malware pattern on each informative column
      // only with probability malware_signal_rate.
      const bool signal = informative[j] && (labels[i] == kBenign || rng.uniform() < cfg.malware_signal_rate);
      const Cluster& c = signal ? own : background;
      double v = c.center[j] + c.scale * rng.normal();
      if (integer[j]) v = std::round(v);
      x(i, j) = v == 0.0 ? 0.0 : v;
    }
  }

  std::vector<FeatureSpec> specs = default_specs(d);
  for (std::size_t j = 0; j < d; ++j) {
    specs[j].kind = integer[j] ? FeatureKind::integer : FeatureKind::real;
  }
  std::vector<RowId> ids(cfg.n_samples);
  std::iota(ids.begin(), ids.end(), RowId{0});
  return Dataset(std::move(x), std::move(labels), std::move(specs), std::move(ids));
}

}  // namespace shapdoor
