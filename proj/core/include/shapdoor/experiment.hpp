#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shapdoor/attack.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/defend.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

enum class ScenarioTag { unrestricted, data_limited, transfer, black_box, constrained };

std::string_view to_string(ScenarioTag tag);
ScenarioTag parse_scenario_tag(std::string_view text);

// Attacker knowledge and capabilities. Tags compose, e.g.
// "constrained+transfer+data_limited".
struct Scenario {
  std::set<ScenarioTag> tags;
  std::optional<ModelKind> surrogate_kind;  // transfer
  double data_fraction = 0.2;               // data_limited
  std::string constraint_profile;           // constrained: file path or bundled name

  bool has(ScenarioTag tag) const { return tags.contains(tag); }
  // Tags joined with '+', "unrestricted" when none are set.
  std::string name() const;
  static Scenario parse(std::string_view spec);

  void validate(ModelKind victim) const;
};

struct DataSource {
  std::optional<SynthConfig> synthetic;
  std::filesystem::path csv;
  std::filesystem::path spec;
  double train_fraction = 0.8;
};

struct DefenseSettings {
  std::vector<std::string> kinds{"spectral", "hdbscan", "isolation_forest"};
  std::size_t reduced_features = kDefaultReducedFeatures;
  double trusted_fraction = 0.1;
  double spectral_remove_fraction = 0.15;
  double min_cluster_fraction = 0.01;
  double min_samples_fraction = 0.005;
  std::size_t isolation_trees = 100;
  std::size_t isolation_subsample = 256;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataSource data;
  TrainConfig victim;
  Scenario scenario;
  ExplainerConfig explainer;
  // Number of training rows the attacker explains (stratified sample);
  // 0 explains every row.
  std::size_t explain_rows = 0;
  SelectorConfig selector;
  Strategy strategy = Strategy::independent;
  std::vector<double> poison_fractions{0.01};
  std::vector<std::size_t> trigger_sizes{8};
  std::size_t n_seeds = 5;
  std::uint64_t seed = 0;
  DefenseSettings defense;
  std::filesystem::path output_dir = "out";
  // Directory relative paths in the config are resolved against.
  std::filesystem::path base_dir = ".";

  void validate() const;
};

ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir = ".");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// The configured dataset: generated, or loaded from csv + spec relative to
// base_dir.
Dataset load_data_source(const ExperimentConfig& cfg);

// Resolves a constraint profile reference: an existing file path (relative to
// base_dir), or a bundled profile name looked up in the profile search path.
ConstraintProfile resolve_constraint_profile(const std::string& ref,
                                             const std::filesystem::path& base_dir,
                                             const std::vector<FeatureSpec>& specs);

// --- Results ---------------------------------------------------------------

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  double acc_fb_xb = 0.0;   // backdoored model on watermarked malware
  double acc_fb_x = 0.0;    // backdoored model on the clean test set
  double fp_b = 0.0;        // backdoored model false-positive rate
  double acc_f_x = 0.0;     // clean model on the clean test set
  double fp_f = 0.0;        // clean model false-positive rate
  double acc_f_xb = 0.0;    // clean model on watermarked malware
  double acc_f_xb_clean = 0.0;  // clean model on X_b before watermarking (1 by construction)
  double stealth_gap = 0.0;     // clean model: acc on clean benign - acc on watermarked benign
  std::size_t n_xb = 0;
  std::size_t n_xb_infeasible = 0;
  std::size_t n_poison = 0;
  Trigger trigger;
  std::vector<RowId> poison_ids;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 with one value
  std::size_t n = 0;
};

MetricSummary summarize(std::span<const double> values);

struct RunReport {
  std::string scenario;
  std::string victim;
  std::string strategy;
  std::string feature_selector;
  std::string value_selector;
  double poison_fraction = 0.0;
  std::size_t trigger_size = 0;
  std::vector<TrialResult> trials;

  // Over trials without an error.
  MetricSummary summary(double TrialResult::*field) const;
  std::size_t n_failed() const;
};

struct ExperimentResult {
  std::vector<RunReport> cells;
  std::vector<MitigationRow> mitigation;
  std::vector<FilterReport> filter_reports;
  std::size_t failures = 0;
};

// Runs every (poison fraction, trigger size, trial) cell. Trials run on up to
// `jobs` threads and are merged by cell key, so results do not depend on the
// thread count.
ExperimentResult run_attack_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

// Attack sweep followed by each defense on every poisoned cell.
ExperimentResult run_defense_experiment(const ExperimentConfig& cfg,
                                        const std::vector<std::string>& defenses,
                                        std::size_t jobs = 1);

// --- Reports ---------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

enum class ReportFormat { json, csv };
ReportFormat parse_report_format(std::string_view text);

std::string report_to_json(const ExperimentConfig& cfg, const ExperimentResult& result);
// Parses a report written by report_to_json; the config block is kept verbatim.
struct LoadedReport {
  std::string config_json;
  ExperimentResult result;
};
LoadedReport report_from_json(std::string_view text);
std::string report_to_json(const LoadedReport& report);

// One row per trial per cell.
std::string report_to_csv(const ExperimentResult& result);

// Writes JSON or long-format CSV to `path`, creating parent directories.
void emit_report(const ExperimentConfig& cfg, const ExperimentResult& result, ReportFormat format,
                 const std::filesystem::path& path);

}  // namespace shapdoor
