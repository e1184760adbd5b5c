#include "shapdoor/attack.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>

#include "json_util.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

std::vector<double> feature_importance(const ShapMatrix& shap, ImportanceMode mode) {
  if (shap.n_samples() == 0 || shap.n_features() == 0) {
    throw InsufficientDataError("feature_importance: empty SHAP matrix");
  }
  std::vector<double> out(shap.n_features(), 0.0);
  for (std::size_t i = 0; i < shap.n_samples(); ++i) {
    auto r = shap.values.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      out[j] += mode == ImportanceMode::absolute ? std::abs(r[j]) : r[j];
    }
  }
  return out;
}

std::vector<std::size_t> select_features(std::span<const double> importance, std::size_t k,
                                         FeatureOrder order,
                                         std::span<const std::size_t> candidates) {
  std::vector<std::size_t> pool;
  if (candidates.empty()) {
    pool.resize(importance.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    pool.assign(candidates.begin(), candidates.end());
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    for (std::size_t j : pool) {
      if (j >= importance.size()) throw DimensionError("select_features: candidate out of range");
    }
  }
  if (k > importance.size()) {
    throw ConfigError("select_features: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(importance.size()) + " features");
  }
  if (k > pool.size()) {
    throw InsufficientDataError("select_features: k = " + std::to_string(k) + " but only " +
                                std::to_string(pool.size()) + " eligible features");
  }
  std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
    if (order == FeatureOrder::most_goodware_oriented) return importance[a] < importance[b];
    return std::abs(importance[a]) > std::abs(importance[b]);
  });
  pool.resize(k);
  return pool;
}

std::string_view to_string(FeatureSelector s) {
  return s == FeatureSelector::large_shap ? "large_shap" : "large_abs_shap";
}

std::string_view to_string(ValueSelector s) {
  switch (s) {
    case ValueSelector::min_population: return "min_population";
    case ValueSelector::count_shap: return "count_shap";
    case ValueSelector::count_abs_shap: return "count_abs_shap";
  }
  return "?";
}

std::string_view to_string(Strategy s) {
  return s == Strategy::independent ? "independent" : "combined";
}

FeatureSelector parse_feature_selector(std::string_view text) {
  if (text == "large_shap" || text == "large_shap_goodware") return FeatureSelector::large_shap;
  if (text == "large_abs_shap") return FeatureSelector::large_abs_shap;
  throw ConfigError("unknown feature selector '" + std::string(text) + "'");
}

ValueSelector parse_value_selector(std::string_view text) {
  if (text == "min_population") return ValueSelector::min_population;
  if (text == "count_shap") return ValueSelector::count_shap;
  if (text == "count_abs_shap") return ValueSelector::count_abs_shap;
  throw ConfigError("unknown value selector '" + std::string(text) + "'");
}

Strategy parse_strategy(std::string_view text) {
  if (text == "independent") return Strategy::independent;
  if (text == "combined") return Strategy::combined;
  throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

void SelectorConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("selector alpha and beta must be >= 0");
  if (trigger_size == 0) throw ConfigError("trigger_size must be >= 1");
}

double select_value_min_population(std::size_t feature, const BenignValueTable& table) {
  if (feature >= table.size() || table[feature].empty()) {
    throw InsufficientDataError("select_value_min_population: no benign values for feature " +
                                std::to_string(feature));
  }
  const auto& counts = table[feature];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second < best->second) best = it;
  }
  return best->first;
}

namespace {

struct ValueStats {
  std::size_t count = 0;  // benign occurrences (c_v)
  double shap_sum = 0.0;
};

// argmin of alpha / c_v + beta * (shap_sum + penalty) over the map, which is
// ordered by value so the first strict minimum is the smallest tied value.
double argmin_count_shap(std::size_t feature, const std::map<double, ValueStats>& stats,
                         double alpha, double beta, const Inflation& inflation) {
  if (stats.empty()) {
    throw InsufficientDataError("count-SHAP selection: no candidate values for feature " +
                                std::to_string(feature));
  }
  double best_value = 0.0;
  double best_score = 0.0;
  bool first = true;
  for (const auto& [value, s] : stats) {
    const double penalty = inflation ? inflation(feature, value) : 0.0;
    const double score =
        alpha / static_cast<double>(s.count) + beta * (s.shap_sum + penalty);
    if (first || score < best_score) {
      best_score = score;
      best_value = value;
      first = false;
    }
  }
  return best_value;
}

void check_alignment(const ShapMatrix& shap, const Dataset& ds) {
  if (shap.n_samples() != ds.n_rows() || shap.n_features() != ds.n_features()) {
    throw DimensionError("SHAP matrix (" + std::to_string(shap.n_samples()) + "x" +
                         std::to_string(shap.n_features()) + ") does not align with dataset (" +
                         std::to_string(ds.n_rows()) + "x" + std::to_string(ds.n_features()) +
                         ")");
  }
}

}  // namespace

double select_value_count_shap(std::size_t feature, const BenignValueTable& table,
                               const ShapMatrix& shap, const Dataset& ds, double alpha,
                               double beta, ImportanceMode mode, const Inflation& inflation) {
  check_alignment(shap, ds);
  if (feature >= table.size() || feature >= ds.n_features()) {
    throw DimensionError("select_value_count_shap: feature out of range");
  }
  std::map<double, ValueStats> stats;
  for (const auto& [value, count] : table[feature]) stats[value].count = count;
  const FeatureKind kind = ds.specs()[feature].kind;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    auto it = stats.find(quantize_value(ds.row(r)[feature], kind));
    if (it == stats.end()) continue;
    const double s = shap.values(r, feature);
    it->second.shap_sum += mode == ImportanceMode::absolute ? std::abs(s) : s;
  }
  return argmin_count_shap(feature, stats, alpha, beta, inflation);
}

void Trigger::validate(std::size_t n_features) const {
  std::set<std::size_t> seen;
  for (const auto& e : entries) {
    if (e.feature >= n_features) {
      throw DimensionError("trigger feature " + std::to_string(e.feature) + " out of range");
    }
    if (!seen.insert(e.feature).second) {
      throw ConfigError("trigger uses feature " + std::to_string(e.feature) + " twice");
    }
    if (!std::isfinite(e.value)) throw ConfigError("trigger value is not finite");
  }
}

Trigger build_trigger_independent(const ShapMatrix& shap, const Dataset& ds,
                                  const SelectorConfig& cfg, const ConstraintProfile& profile,
                                  const Inflation& inflation) {
  cfg.validate();
  check_alignment(shap, ds);
  if (profile.size() != ds.n_features()) throw DimensionError("constraint profile size mismatch");
  const auto modifiable = profile.modifiable_features();
  if (modifiable.size() < cfg.trigger_size) {
    throw InsufficientDataError("trigger_size " + std::to_string(cfg.trigger_size) +
                                " exceeds the " + std::to_string(modifiable.size()) +
                                " modifiable features of profile '" + profile.name + "'");
  }
  const bool abs_features = cfg.feature_selector == FeatureSelector::large_abs_shap;
  const auto importance =
      feature_importance(shap, abs_features ? ImportanceMode::absolute : ImportanceMode::signed_sum);
  const auto features = select_features(
      importance, cfg.trigger_size,
      abs_features ? FeatureOrder::largest_magnitude : FeatureOrder::most_goodware_oriented,
      modifiable);

  const BenignValueTable table = benign_value_table(ds);
  Trigger t;
  t.strategy = Strategy::independent;
  t.feature_selector = std::string(to_string(cfg.feature_selector));
  t.value_selector = std::string(to_string(cfg.value_selector));
  t.constraint_profile = profile.name;
  t.requested_size = cfg.trigger_size;
  for (std::size_t f : features) {
    double v = 0.0;
    switch (cfg.value_selector) {
      case ValueSelector::min_population: v = select_value_min_population(f, table); break;
      case ValueSelector::count_shap:
        v = select_value_count_shap(f, table, shap, ds, cfg.alpha, cfg.beta,
                                    ImportanceMode::signed_sum, inflation);
        break;
      case ValueSelector::count_abs_shap:
        v = select_value_count_shap(f, table, shap, ds, cfg.alpha, cfg.beta,
                                    ImportanceMode::absolute, inflation);
        break;
    }
    t.entries.push_back({f, v});
  }
  return t;
}

Trigger build_trigger_combined(const ShapMatrix& shap, const Dataset& ds,
                               const SelectorConfig& cfg, const ConstraintProfile& profile,
                               const Inflation& inflation, std::vector<CombinedStep>* trace) {
  cfg.validate();
  check_alignment(shap, ds);
  if (profile.size() != ds.n_features()) throw DimensionError("constraint profile size mismatch");

  std::vector<std::size_t> working = ds.rows_with_label(kBenign);
  if (working.empty()) throw InsufficientDataError("combined strategy: no benign rows");
  std::vector<std::size_t> remaining = profile.modifiable_features();

  Trigger t;
  t.strategy = Strategy::combined;
  t.feature_selector = "large_shap";
  t.value_selector = "count_shap";
  t.constraint_profile = profile.name;
  t.requested_size = cfg.trigger_size;
  if (trace) trace->clear();

  std::vector<double> importance(ds.n_features());
  for (std::size_t step = 0; step < cfg.trigger_size; ++step) {
    if (remaining.empty()) {
      t.early_stop = true;
      break;
    }
    // LargeSHAP over the working set.
    std::fill(importance.begin(), importance.end(), 0.0);
    for (std::size_t r : working) {
      for (std::size_t f : remaining) importance[f] += shap.values(r, f);
    }
    const std::size_t f = select_features(importance, 1, FeatureOrder::most_goodware_oriented,
                                          remaining)
                              .front();

    // CountSHAP over the working set: every row in it is benign, so c_v and
    // the SHAP sum both range over the same rows.
    const FeatureKind kind = ds.specs()[f].kind;
    std::map<double, ValueStats> stats;
    for (std::size_t r : working) {
      auto& s = stats[quantize_value(ds.row(r)[f], kind)];
      ++s.count;
      s.shap_sum += shap.values(r, f);
    }
    const double v = argmin_count_shap(f, stats, cfg.alpha, cfg.beta, inflation);

    std::vector<std::size_t> next;
    for (std::size_t r : working) {
      if (quantize_value(ds.row(r)[f], kind) == v) next.push_back(r);
    }
    if (next.empty()) {
      t.early_stop = true;
      break;
    }
    working = std::move(next);
    t.entries.push_back({f, v});
    remaining.erase(std::find(remaining.begin(), remaining.end(), f));
    if (trace) trace->push_back({f, v, working.size()});
  }
  return t;
}

Inflation additive_inflation(const Dataset& train, const ConstraintProfile& profile,
                             const ShapMatrix& shap, double min_acceptance,
                             double penalty_scale) {
  if (profile.size() != train.n_features()) throw DimensionError("constraint profile size mismatch");
  double max_abs = 0.0;
  for (double s : shap.values.data()) max_abs = std::max(max_abs, std::abs(s));
  const double penalty = penalty_scale * max_abs;

  const auto malware = train.rows_with_label(kMalware);
  // Sorted malware column per additive feature; empty for the others.
  auto columns = std::make_shared<std::vector<std::vector<double>>>(train.n_features());
  for (std::size_t f = 0; f < train.n_features(); ++f) {
    if (profile[f].constraint != Constraint::additive_only) continue;
    auto& col = (*columns)[f];
    for (std::size_t r : malware) col.push_back(train.row(r)[f]);
    std::sort(col.begin(), col.end());
  }
  return [columns, penalty, min_acceptance](std::size_t feature, double value) {
    if (feature >= columns->size()) return 0.0;
    const auto& col = (*columns)[feature];
    if (col.empty()) return 0.0;
    const auto accept = static_cast<double>(std::upper_bound(col.begin(), col.end(), value) -
                                            col.begin()) /
                        static_cast<double>(col.size());
    return accept < min_acceptance ? penalty : 0.0;
  };
}

void check_trigger_feasible(const Trigger& t, const ConstraintProfile& profile,
                            const BenignValueTable& table, const std::vector<FeatureSpec>& specs) {
  t.validate(profile.size());
  for (const auto& e : t.entries) {
    const std::string name =
        e.feature < specs.size() ? specs[e.feature].name : std::to_string(e.feature);
    if (!profile.is_modifiable(e.feature)) {
      throw ConfigError("trigger feature '" + name + "' is not modifiable under profile '" +
                        profile.name + "'");
    }
    if (profile[e.feature].value_domain == ValueDomain::observed_benign_only &&
        !table.at(e.feature).contains(e.value)) {
      throw ConfigError("trigger value for feature '" + name +
                        "' never occurs in benign training rows");
    }
  }
}

Watermarked apply_trigger(std::span<const double> x, const Trigger& t,
                          const ConstraintProfile& profile) {
  if (profile.size() != x.size()) {
    throw DimensionError("apply_trigger: vector has " + std::to_string(x.size()) +
                         " features, profile has " + std::to_string(profile.size()));
  }
  for (const auto& e : t.entries) {
    if (e.feature >= x.size()) throw DimensionError("apply_trigger: trigger feature out of range");
    if (!profile.is_modifiable(e.feature)) {
      throw ConfigError("apply_trigger: feature " + std::to_string(e.feature) +
                        " is not modifiable under profile '" + profile.name + "'");
    }
  }
  Watermarked out{std::vector<double>(x.begin(), x.end()), false};
  for (const auto& e : t.entries) {
    if (profile[e.feature].constraint == Constraint::additive_only && e.value < x[e.feature]) {
      return out;
    }
  }
  for (const auto& e : t.entries) out.x[e.feature] = e.value;
  out.applied = true;
  return out;
}

PoisonResult build_poison_set(const Dataset& train, const Trigger& t,
                              const ConstraintProfile& profile, double fraction,
                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("poison fraction must be in [0, 1), got " + std::to_string(fraction));
  }
  t.validate(train.n_features());
  PoisonResult result;
  result.plan.poison_fraction = fraction;
  result.plan.trigger = t;
  result.plan.seed = seed;

  const auto count =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.n_rows())));
  std::vector<std::size_t> candidates;
  Matrix watermarked(0, train.n_features());
  for (std::size_t r : train.rows_with_label(kBenign)) {
    auto w = apply_trigger(train.row(r), t, profile);
    if (w.applied) {
      candidates.push_back(r);
      watermarked.append_row(w.x);
    } else {
      ++result.infeasible_benign;
    }
  }
  if (count == 0) {
    result.poisoned = train;
    return result;
  }
  if (count > candidates.size()) {
    throw InsufficientDataError("poisoning needs " + std::to_string(count) +
                                " watermarkable benign rows, only " +
                                std::to_string(candidates.size()) + " available");
  }
  Rng rng(seed, 0x9015);
  auto pick = rng.sample_without_replacement(candidates.size(), count);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> rows;
  rows.reserve(count);
  for (std::size_t k : pick) {
    rows.push_back(candidates[k]);
    result.plan.selected_benign_ids.push_back(train.id(candidates[k]));
  }
  result.poisoned = train.with_rows_replaced(rows, watermarked.select_rows(pick));
  return result;
}

WatermarkedMalware watermark_test_malware(const Dataset& test, const Model& clean,
                                          const Trigger& t, const ConstraintProfile& profile) {
  const auto malware = test.rows_with_label(kMalware);
  WatermarkedMalware out;
  out.n_malware = malware.size();
  const auto predicted = predict_labels(clean, test.features().select_rows(malware));
  std::vector<std::size_t> keep;
  Matrix marked(0, test.n_features());
  for (std::size_t k = 0; k < malware.size(); ++k) {
    if (predicted[k] != kMalware) {
      ++out.n_missed_by_clean;
      continue;
    }
    auto w = apply_trigger(test.row(malware[k]), t, profile);
    if (!w.applied) {
      ++out.n_infeasible;
      continue;
    }
    keep.push_back(malware[k]);
    marked.append_row(w.x);
  }
  if (keep.empty()) {
    throw InsufficientDataError("no test malware is both detected by the clean model and "
                                "watermarkable (" +
                                std::to_string(out.n_missed_by_clean) + " missed, " +
                                std::to_string(out.n_infeasible) + " infeasible)");
  }
  out.original = test.subset(keep);
  std::vector<std::size_t> all(keep.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  out.xb = out.original.with_rows_replaced(all, marked);
  return out;
}

// --- Persistence -----------------------------------------------------------

std::string trigger_to_json(const Trigger& t, const std::vector<FeatureSpec>& specs) {
  json entries = json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"feature_name", e.feature < specs.size() ? specs[e.feature].name
                                                                 : "f" + std::to_string(e.feature)},
                       {"feature_index", e.feature},
                       {"value", e.value}});
  }
  json doc = {{"format", "shapdoor.trigger"},
              {"version", 1},
              {"strategy", std::string(to_string(t.strategy))},
              {"feature_selector", t.feature_selector},
              {"value_selector", t.value_selector},
              {"constraint_profile", t.constraint_profile},
              {"requested_size", t.requested_size},
              {"early_stop", t.early_stop},
              {"entries", entries}};
  return doc.dump(2) + "\n";
}

Trigger trigger_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("trigger JSON: ") + e.what());
  }
  KeyChecker keys(doc, "trigger");
  if (keys.required<std::string>("format") != "shapdoor.trigger") {
    throw ConfigError("trigger JSON: unexpected format tag");
  }
  if (keys.required<int>("version") != 1) throw ConfigError("trigger JSON: unsupported version");
  Trigger t;
  t.strategy = parse_strategy(keys.required<std::string>("strategy"));
  t.feature_selector = keys.optional<std::string>("feature_selector", "");
  t.value_selector = keys.optional<std::string>("value_selector", "");
  t.constraint_profile = keys.optional<std::string>("constraint_profile", "unrestricted");
  t.early_stop = keys.optional<bool>("early_stop", false);
  const json& entries = keys.object("entries");
  if (!entries.is_array()) throw ConfigError("trigger JSON: 'entries' must be an array");
  for (const auto& item : entries) {
    KeyChecker ek(item, "trigger entry");
    TriggerEntry e;
    e.feature = ek.required<std::size_t>("feature_index");
    e.value = ek.required<double>("value");
    ek.optional<std::string>("feature_name", "");
    ek.finish();
    t.entries.push_back(e);
  }
  t.requested_size = keys.optional<std::size_t>("requested_size", t.entries.size());
  keys.finish();
  return t;
}

void save_trigger(const Trigger& t, const std::vector<FeatureSpec>& specs,
                  const std::filesystem::path& path) {
  write_text_file(trigger_to_json(t, specs), path);
}

Trigger load_trigger(const std::filesystem::path& path) {
  return trigger_from_json(read_json_file(path).dump());
}

}  // namespace shapdoor
