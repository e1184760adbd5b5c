#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shapdoor/common.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

// --- Selectors -------------------------------------------------------------

enum class ImportanceMode { signed_sum, absolute };

// Column sums of the attribution matrix (absolute values first in absolute mode).
std::vector<double> feature_importance(const ShapMatrix& shap, ImportanceMode mode);

enum class FeatureOrder {
  most_goodware_oriented,  // smallest signed importance first
  largest_magnitude,       // largest |importance| first
};

// k feature indices ordered by the rule; ties go to the lower index. When
// `candidates` is non-empty only those features are eligible.
std::vector<std::size_t> select_features(std::span<const double> importance, std::size_t k,
                                         FeatureOrder order,
                                         std::span<const std::size_t> candidates = {});

enum class FeatureSelector { large_shap, large_abs_shap };
enum class ValueSelector { min_population, count_shap, count_abs_shap };
enum class Strategy { independent, combined };

std::string_view to_string(FeatureSelector s);
std::string_view to_string(ValueSelector s);
std::string_view to_string(Strategy s);
FeatureSelector parse_feature_selector(std::string_view text);
ValueSelector parse_value_selector(std::string_view text);
Strategy parse_strategy(std::string_view text);

struct SelectorConfig {
  FeatureSelector feature_selector = FeatureSelector::large_abs_shap;
  ValueSelector value_selector = ValueSelector::count_abs_shap;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t trigger_size = 8;

  void validate() const;
};

// Extra amount added to the SHAP-sum term when scoring (feature, value).
using Inflation = std::function<double(std::size_t feature, double value)>;

// Least frequent benign value; ties go to the smaller value.
double select_value_min_population(std::size_t feature, const BenignValueTable& table);

// argmin over the benign values v of feature f of
//   alpha / c_v + beta * sum_{rows with x_f = v} S[row, f]      (signed)
//   alpha / c_v + beta * sum_{rows with x_f = v} |S[row, f]|    (absolute)
// c_v comes from the benign table; the sum covers every row of ds (both
// classes). Ties go to the smaller value.
double select_value_count_shap(std::size_t feature, const BenignValueTable& table,
                               const ShapMatrix& shap, const Dataset& ds, double alpha,
                               double beta, ImportanceMode mode,
                               const Inflation& inflation = nullptr);

// --- Triggers --------------------------------------------------------------

struct TriggerEntry {
  std::size_t feature = 0;
  double value = 0.0;

  friend bool operator==(const TriggerEntry&, const TriggerEntry&) = default;
};

struct Trigger {
  std::vector<TriggerEntry> entries;
  Strategy strategy = Strategy::independent;
  std::string feature_selector;
  std::string value_selector;
  std::string constraint_profile = "unrestricted";
  std::size_t requested_size = 0;
  // Set when the greedy loop ran out of support or features.
  bool early_stop = false;

  std::size_t size() const { return entries.size(); }
  // No duplicate features; indices below n_features.
  void validate(std::size_t n_features) const;

  friend bool operator==(const Trigger&, const Trigger&) = default;
};

Trigger build_trigger_independent(const ShapMatrix& shap, const Dataset& ds,
                                  const SelectorConfig& cfg, const ConstraintProfile& profile,
                                  const Inflation& inflation = nullptr);

struct CombinedStep {
  std::size_t feature = 0;
  double value = 0.0;
  std::size_t support = 0;  // benign rows still matching every chosen pair
};

// Greedy conditional selection: each step takes the most goodware-oriented
// remaining feature over the current working set, its CountSHAP value over
// the same set, and keeps only rows carrying that value.
// Uses cfg.trigger_size, alpha and beta; the selectors are fixed to
// LargeSHAP and signed CountSHAP.
Trigger build_trigger_combined(const ShapMatrix& shap, const Dataset& ds,
                               const SelectorConfig& cfg, const ConstraintProfile& profile,
                               const Inflation& inflation = nullptr,
                               std::vector<CombinedStep>* trace = nullptr);

// Penalises additive_only values that fewer than `min_acceptance` of the
// training malware could receive (value below the current one).
Inflation additive_inflation(const Dataset& train, const ConstraintProfile& profile,
                             const ShapMatrix& shap, double min_acceptance = 0.5,
                             double penalty_scale = 10.0);

// Throws ConfigError if a trigger feature is not modifiable or a value
// outside the benign table is used for an observed_benign_only feature.
void check_trigger_feasible(const Trigger& t, const ConstraintProfile& profile,
                            const BenignValueTable& table, const std::vector<FeatureSpec>& specs);

// --- Watermarking and poisoning --------------------------------------------

struct Watermarked {
  std::vector<double> x;
  bool applied = false;
};

// Either every entry is written or nothing is: an additive_only feature whose
// current value exceeds the trigger value makes the sample infeasible.
Watermarked apply_trigger(std::span<const double> x, const Trigger& t,
                          const ConstraintProfile& profile);

struct PoisonPlan {
  double poison_fraction = 0.0;
  std::vector<RowId> selected_benign_ids;
  Trigger trigger;
  std::uint64_t seed = 0;
};

struct PoisonResult {
  Dataset poisoned;
  PoisonPlan plan;
  std::size_t infeasible_benign = 0;
};

// Replaces round(fraction * n) uniformly chosen watermarkable benign rows
// with their watermarked version; labels stay 0. Fraction 0 is a no-op.
PoisonResult build_poison_set(const Dataset& train, const Trigger& t,
                              const ConstraintProfile& profile, double fraction,
                              std::uint64_t seed);

struct WatermarkedMalware {
  Dataset xb;        // watermarked rows
  Dataset original;  // same rows before the watermark
  std::size_t n_malware = 0;
  std::size_t n_missed_by_clean = 0;
  std::size_t n_infeasible = 0;
};

// Test malware the clean model already detects, with the trigger applied.
// Rows the trigger cannot be applied to are dropped and counted.
WatermarkedMalware watermark_test_malware(const Dataset& test, const Model& clean,
                                          const Trigger& t, const ConstraintProfile& profile);

// --- Persistence -----------------------------------------------------------

std::string trigger_to_json(const Trigger& t, const std::vector<FeatureSpec>& specs);
Trigger trigger_from_json(std::string_view text);
void save_trigger(const Trigger& t, const std::vector<FeatureSpec>& specs,
                  const std::filesystem::path& path);
Trigger load_trigger(const std::filesystem::path& path);

}  // namespace shapdoor
