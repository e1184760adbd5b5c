#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shapdoor/common.hpp"

namespace shapdoor {

enum class FeatureKind { real, integer, boolean };
enum class Constraint { free, additive_only, fixed };
enum class ValueDomain { any, observed_benign_only };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(Constraint constraint);
std::string_view to_string(ValueDomain domain);
FeatureKind parse_feature_kind(std::string_view text);
Constraint parse_constraint(std::string_view text);
ValueDomain parse_value_domain(std::string_view text);

struct FeatureSpec {
  std::size_t index = 0;
  std::string name;
  FeatureKind kind = FeatureKind::real;
  bool modifiable = true;
  Constraint constraint = Constraint::free;
  ValueDomain value_domain = ValueDomain::observed_benign_only;

  // Throws ConfigError when `fixed` is paired with modifiable = true.
  void validate() const;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Label convention: 0 = benign (goodware), 1 = malicious (malware).
inline constexpr int kBenign = 0;
inline constexpr int kMalware = 1;

// Labeled feature matrix. Immutable after construction; every constructor
// path validates the invariants (label domain, integral columns, unique ids).
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<int> labels, std::vector<FeatureSpec> specs,
          std::vector<RowId> ids);

  std::size_t n_rows() const { return features_.rows(); }
  std::size_t n_features() const { return features_.cols(); }
  bool empty() const { return n_rows() == 0; }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const std::vector<RowId>& ids() const { return ids_; }

  std::span<const double> row(std::size_t i) const { return features_.row(i); }
  int label(std::size_t i) const { return labels_[i]; }
  RowId id(std::size_t i) const { return ids_[i]; }

  std::size_t count_label(int label) const;
  std::vector<std::size_t> rows_with_label(int label) const;

  Dataset subset(std::span<const std::size_t> rows) const;
  // Copy of this dataset with some rows' feature vectors replaced.
  Dataset with_rows_replaced(std::span<const std::size_t> rows, const Matrix& values) const;
  Dataset without_ids(std::span<const RowId> ids) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void validate() const;

  Matrix features_;
  std::vector<int> labels_;
  std::vector<FeatureSpec> specs_;
  std::vector<RowId> ids_;
};

// Default specs for n columns: real-valued, modifiable, free, benign-observed.
std::vector<FeatureSpec> default_specs(std::size_t n_features);

// --- CSV / sidecar I/O -----------------------------------------------------

Dataset load_csv(const std::filesystem::path& csv_path,
                 const std::filesystem::path& spec_path);
// Same as load_csv but with the specs already in hand.
Dataset load_csv(const std::filesystem::path& csv_path, std::vector<FeatureSpec> specs);
void save_csv(const Dataset& ds, const std::filesystem::path& csv_path);

std::vector<FeatureSpec> load_feature_specs(const std::filesystem::path& spec_path);
void save_feature_specs(const std::vector<FeatureSpec>& specs,
                        const std::filesystem::path& spec_path);

// --- Splitting -------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const;
};

struct SplitResult {
  Dataset train;
  Dataset test;
};

SplitResult split(const Dataset& ds, const SplitSpec& spec);

// Uniform subsample of round(fraction * n) rows, stratified by label.
Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed);

// --- Synthetic data --------------------------------------------------------

struct SynthConfig {
  std::size_t n_samples = 10000;
  std::size_t n_features = 30;
  std::size_t n_informative = 20;
  std::size_t benign_subpopulations = 8;
  std::size_t malware_subpopulations = 2;
  double class_separation = 3.0;
  double integer_feature_fraction = 1.0;
  double malware_fraction = 0.5;
  // Chance that a malware row follows its cluster on a given informative
  // column (otherwise the column is drawn like benign data).
  double malware_signal_rate = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

// --- Value tables ----------------------------------------------------------

// Canonical key for value counting: reals are rounded to 6 decimals, -0 is
// folded into +0; integral kinds are kept as-is.
double quantize_value(double value, FeatureKind kind);

using ValueCounts = std::map<double, std::size_t>;
// One map per feature: value -> number of benign rows carrying it.
using BenignValueTable = std::vector<ValueCounts>;

BenignValueTable benign_value_table(const Dataset& ds);

// --- Constraint profiles ---------------------------------------------------

struct FeatureConstraint {
  bool modifiable = true;
  Constraint constraint = Constraint::free;
  ValueDomain value_domain = ValueDomain::observed_benign_only;

  friend bool operator==(const FeatureConstraint&, const FeatureConstraint&) = default;
};

// Per-feature modifiability rules describing which watermarks are feasible
// in problem space.
struct ConstraintProfile {
  std::string name = "unrestricted";
  std::vector<FeatureConstraint> features;

  static ConstraintProfile from_specs(const std::vector<FeatureSpec>& specs,
                                      std::string name = "unrestricted");

  std::size_t size() const { return features.size(); }
  const FeatureConstraint& operator[](std::size_t i) const { return features.at(i); }
  bool is_modifiable(std::size_t i) const {
    const auto& f = features.at(i);
    return f.modifiable && f.constraint != Constraint::fixed;
  }
  std::vector<std::size_t> modifiable_features() const;
};

// Profile JSON: {"name": ..., "default": {modifiable, constraint, value_domain},
// "features": [{"name" | "index", modifiable, constraint, value_domain}, ...]}.
// Features not listed take the default entry; the default itself defaults to
// the dataset's own specs.
ConstraintProfile load_constraint_profile(const std::filesystem::path& path,
                                          const std::vector<FeatureSpec>& specs);
ConstraintProfile parse_constraint_profile(std::string_view json_text,
                                           const std::vector<FeatureSpec>& specs);

}  // namespace shapdoor
