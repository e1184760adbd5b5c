#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "shapdoor/experiment.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

MetricSummary RunReport::summary(double TrialResult::*field) const {
  std::vector<double> values;
  for (const auto& t : trials) {
    if (!t.error) values.push_back(t.*field);
  }
  return summarize(values);
}

std::size_t RunReport::n_failed() const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [](const TrialResult& t) { return t.error.has_value(); }));
}

Dataset load_data_source(const ExperimentConfig& cfg) {
  if (cfg.data.synthetic) return generate_synthetic(*cfg.data.synthetic);
  auto resolve = [&](const std::filesystem::path& p) {
    return p.is_absolute() ? p : cfg.base_dir / p;
  };
  return load_csv(resolve(cfg.data.csv), resolve(cfg.data.spec));
}

namespace {

// Seed tags for the per-trial streams.
enum : std::uint64_t {
  kTagSplit = 1,
  kTagAttackerData,
  kTagBackground,
  kTagExplainer,
  kTagExplainRows,
  kTagTrusted,
  kTagDefenseExplainer,
  kTagFilter,
};

struct CellKey {
  double fraction;
  std::size_t size;
};

std::vector<CellKey> cell_keys(const ExperimentConfig& cfg) {
  std::vector<CellKey> keys;
  for (std::size_t size : cfg.trigger_sizes) {
    for (double f : cfg.poison_fractions) keys.push_back({f, size});
  }
  return keys;
}

double accuracy_on(const Model& m, const Dataset& ds) { return evaluate(m, ds).accuracy; }

struct DefenseOutput {
  std::vector<MitigationRow> rows;
  std::vector<FilterReport> reports;
};

// Everything one trial produces, for every cell.
struct TrialOutput {
  std::vector<TrialResult> cells;
  std::vector<DefenseOutput> defense;  // per cell
};

class TrialRunner {
 public:
  TrialRunner(const ExperimentConfig& cfg, const Dataset& source,
              const std::vector<std::string>& defenses)
      : cfg_(cfg), source_(source), defenses_(defenses), keys_(cell_keys(cfg)) {}

  TrialOutput run(std::size_t trial) const {
    const std::uint64_t seed = derive_seed(cfg_.seed, {static_cast<std::uint64_t>(trial)});
    TrialOutput out;
    out.cells.resize(keys_.size());
    out.defense.resize(keys_.size());
    for (auto& c : out.cells) {
      c.trial = trial;
      c.seed = seed;
    }
    try {
      prepare(seed);
    } catch (const std::exception& e) {
      for (auto& c : out.cells) c.error = e.what();
      return out;
    }
    for (std::size_t k = 0; k < keys_.size(); ++k) {
      try {
        run_cell(trial, seed, keys_[k], out.cells[k], out.defense[k]);
      } catch (const std::exception& e) {
        out.cells[k].error = e.what();
      }
    }
    return out;
  }

 private:
  // Per-trial state shared by every cell of the trial.
  struct State {
    Dataset train, test;
    std::optional<Model> clean;
    ConstraintProfile profile;
    Dataset attacker_view;
    ShapMatrix shap;
    Inflation inflation;
    std::optional<ShapMatrix> defender_shap;
    std::map<std::size_t, Trigger> triggers;
  };
  mutable std::optional<State> state_;

  TrainConfig victim_config(std::uint64_t seed) const {
    TrainConfig c = cfg_.victim;
    c.seed = seed;
    return c;
  }

  void prepare(std::uint64_t seed) const {
    State s;
    auto parts = split(source_, {cfg_.data.train_fraction, derive_seed(seed, {kTagSplit}), true});
    s.train = std::move(parts.train);
    s.test = std::move(parts.test);
    s.clean = train(s.train, victim_config(seed));

    const Scenario& sc = cfg_.scenario;
    s.profile = sc.has(ScenarioTag::constrained)
                    ? resolve_constraint_profile(sc.constraint_profile, cfg_.base_dir,
                                                 s.train.specs())
                    : ConstraintProfile::from_specs(s.train.specs());

    // The attacker's data and the model its explanations come from.
    const Dataset attacker_data =
        sc.has(ScenarioTag::data_limited)
            ? subsample(s.train, sc.data_fraction, derive_seed(seed, {kTagAttackerData}))
            : s.train;
    std::optional<Model> surrogate;
    if (sc.has(ScenarioTag::transfer)) {
      surrogate = train(attacker_data, TrainConfig::defaults(*sc.surrogate_kind, seed));
    } else if (sc.has(ScenarioTag::data_limited)) {
      surrogate = train(attacker_data, victim_config(seed));
    }
    const Model& explained = surrogate ? *surrogate : *s.clean;

    s.attacker_view = attacker_data;
    if (cfg_.explain_rows > 0 && cfg_.explain_rows < attacker_data.n_rows()) {
      const double f = static_cast<double>(cfg_.explain_rows) /
                       static_cast<double>(attacker_data.n_rows());
      s.attacker_view = subsample(attacker_data, f, derive_seed(seed, {kTagExplainRows}));
    }
    const Background bg = sample_background(attacker_data, cfg_.explainer.background_size,
                                            derive_seed(seed, {kTagBackground}));
    ExplainerConfig ec = cfg_.explainer;
    ec.seed = derive_seed(seed, {kTagExplainer});
    if (sc.has(ScenarioTag::black_box)) ec.method = ExplainMethod::kernel;
    s.shap = explain_dataset(explained, s.attacker_view, bg, ec);
    if (sc.has(ScenarioTag::constrained)) {
      s.inflation = additive_inflation(attacker_data, s.profile, s.shap);
    }

    if (!defenses_.empty()) {
      // The defender's trusted clean subset, its own model and explanations.
      const Dataset trusted = subsample(s.train, cfg_.defense.trusted_fraction,
                                        derive_seed(seed, {kTagTrusted}));
      const Model defender = train(trusted, victim_config(seed));
      const Background dbg = sample_background(trusted, cfg_.explainer.background_size,
                                               derive_seed(seed, {kTagTrusted, kTagBackground}));
      ExplainerConfig dec = cfg_.explainer;
      dec.method = ExplainMethod::kernel;
      dec.seed = derive_seed(seed, {kTagDefenseExplainer});
      s.defender_shap = explain_dataset(defender, trusted, dbg, dec);
    }
    state_ = std::move(s);
  }

  const Trigger& trigger_for(std::size_t size) const {
    State& s = *state_;
    auto it = s.triggers.find(size);
    if (it != s.triggers.end()) return it->second;
    SelectorConfig sel = cfg_.selector;
    sel.trigger_size = size;
    Trigger t = cfg_.strategy == Strategy::independent
                    ? build_trigger_independent(s.shap, s.attacker_view, sel, s.profile, s.inflation)
                    : build_trigger_combined(s.shap, s.attacker_view, sel, s.profile, s.inflation);
    return s.triggers.emplace(size, std::move(t)).first->second;
  }

  void run_cell(std::size_t trial, std::uint64_t seed, const CellKey& key, TrialResult& r,
                DefenseOutput& def) const {
    const State& s = *state_;
    const Model& clean = *s.clean;
    const Trigger& t = trigger_for(key.size);
    r.trigger = t;

    const auto marked = watermark_test_malware(s.test, clean, t, s.profile);
    r.n_xb = marked.xb.n_rows();
    r.n_xb_infeasible = marked.n_infeasible;
    r.acc_f_xb = accuracy_on(clean, marked.xb);
    r.acc_f_xb_clean = accuracy_on(clean, marked.original);

    const EvalMetrics clean_test = evaluate(clean, s.test);
    r.acc_f_x = clean_test.accuracy;
    r.fp_f = clean_test.fp_rate;

    // Stealth: clean model on test goodware with and without the watermark.
    {
      std::vector<std::size_t> rows;
      Matrix wm(0, s.test.n_features());
      for (std::size_t i : s.test.rows_with_label(kBenign)) {
        auto w = apply_trigger(s.test.row(i), t, s.profile);
        if (!w.applied) continue;
        rows.push_back(i);
        wm.append_row(w.x);
      }
      if (!rows.empty()) {
        const Dataset plain = s.test.subset(rows);
        std::vector<std::size_t> all(rows.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        const Dataset watermarked = plain.with_rows_replaced(all, wm);
        r.stealth_gap = accuracy_on(clean, plain) - accuracy_on(clean, watermarked);
      }
    }

    const std::uint64_t poison_seed = derive_seed(
        cfg_.seed, {seed_tag(key.fraction), static_cast<std::uint64_t>(key.size),
                    static_cast<std::uint64_t>(trial)});
    const PoisonResult poison = build_poison_set(s.train, t, s.profile, key.fraction, poison_seed);
    r.n_poison = poison.plan.selected_benign_ids.size();
    r.poison_ids = poison.plan.selected_benign_ids;

    // With nothing poisoned the retrained model would be identical.
    std::optional<Model> retrained;
    if (r.n_poison > 0) retrained = train(poison.poisoned, victim_config(seed));
    const Model& backdoored = retrained ? *retrained : clean;
    const EvalMetrics fb_test = evaluate(backdoored, s.test);
    r.acc_fb_xb = accuracy_on(backdoored, marked.xb);
    r.acc_fb_x = fb_test.accuracy;
    r.fp_b = fb_test.fp_rate;

    if (defenses_.empty()) return;
    const std::size_t k = std::min(cfg_.defense.reduced_features, s.train.n_features());
    const ReducedSpace rs = reduce_space(poison.poisoned, *s.defender_shap, k);
    const std::uint64_t filter_seed = derive_seed(poison_seed, {kTagFilter});
    for (const auto& kind : defenses_) {
      FilterReport report;
      if (kind == "spectral") {
        report = spectral_filter(rs, cfg_.defense.spectral_remove_fraction);
      } else if (kind == "hdbscan") {
        report = density_cluster_filter(rs, cfg_.defense.min_cluster_fraction,
                                        cfg_.defense.min_samples_fraction, filter_seed);
      } else if (kind == "isolation_forest") {
        report = isolation_forest_filter(
            rs, cfg_.defense.isolation_trees,
            std::min(cfg_.defense.isolation_subsample, rs.matrix.rows()), filter_seed);
      } else {
        throw ConfigError("unknown defense '" + kind + "'");
      }
      score_removals(report, r.poison_ids);
      retrain_after_filter(poison.poisoned, report, victim_config(seed), marked.xb);
      MitigationRow row;
      row.victim = std::string(to_string(cfg_.victim.kind));
      row.strategy = std::string(to_string(cfg_.strategy));
      row.value_selector = t.value_selector;
      row.defense = kind;
      row.poison_fraction = key.fraction;
      row.trigger_size = key.size;
      row.trial = trial;
      row.poisons_total = r.n_poison;
      row.poisons_removed = report.poisons_removed;
      row.goodware_removed = report.goodware_removed;
      row.acc_fb_xb_before = r.acc_fb_xb;
      row.acc_fb_xb_after = report.post_defense_acc_fb_xb.value_or(0.0);
      report.parameters["poison_fraction"] = key.fraction;
      report.parameters["trigger_size"] = static_cast<double>(key.size);
      report.parameters["trial"] = static_cast<double>(trial);
      def.rows.push_back(std::move(row));
      def.reports.push_back(std::move(report));
    }
  }

  const ExperimentConfig& cfg_;
  const Dataset& source_;
  const std::vector<std::string>& defenses_;
  std::vector<CellKey> keys_;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::vector<std::string>& defenses, std::size_t jobs) {
  cfg.validate();
  const Dataset source = load_data_source(cfg);
  const auto keys = cell_keys(cfg);

  std::vector<TrialOutput> outputs(cfg.n_seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t trial = next++; trial < cfg.n_seeds; trial = next++) {
      // Each trial owns its runner, so no state is shared between threads.
      TrialRunner runner(cfg, source, defenses);
      outputs[trial] = runner.run(trial);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, cfg.n_seeds);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    RunReport cell;
    cell.scenario = cfg.scenario.name();
    cell.victim = std::string(to_string(cfg.victim.kind));
    cell.strategy = std::string(to_string(cfg.strategy));
    if (cfg.strategy == Strategy::independent) {
      cell.feature_selector = std::string(to_string(cfg.selector.feature_selector));
      cell.value_selector = std::string(to_string(cfg.selector.value_selector));
    } else {
      cell.feature_selector = "large_shap";
      cell.value_selector = "count_shap";
    }
    cell.poison_fraction = keys[k].fraction;
    cell.trigger_size = keys[k].size;
    for (std::size_t trial = 0; trial < cfg.n_seeds; ++trial) {
      cell.trials.push_back(outputs[trial].cells[k]);
      auto& def = outputs[trial].defense[k];
      for (auto& row : def.rows) result.mitigation.push_back(row);
      for (auto& rep : def.reports) result.filter_reports.push_back(rep);
    }
    result.failures += cell.n_failed();
    result.cells.push_back(std::move(cell));
  }
  return result;
}

}  // namespace

ExperimentResult run_attack_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  return run_experiment(cfg, {}, jobs);
}

ExperimentResult run_defense_experiment(const ExperimentConfig& cfg,
                                        const std::vector<std::string>& defenses,
                                        std::size_t jobs) {
  for (const auto& d : defenses) {
    if (d != "spectral" && d != "hdbscan" && d != "isolation_forest") {
      throw ConfigError("unknown defense '" + d + "'");
    }
  }
  if (defenses.empty()) throw ConfigError("no defenses requested");
  return run_experiment(cfg, defenses, jobs);
}

}  // namespace shapdoor
