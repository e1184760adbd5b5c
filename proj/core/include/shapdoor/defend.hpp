#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shapdoor/common.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

// Benign rows projected onto the k most important features and rescaled
// to [-1, 1] per column.
struct ReducedSpace {
  std::vector<std::size_t> selected_features;
  std::vector<std::pair<double, double>> scale;  // (min, max) per selected feature
  Matrix matrix;
  std::vector<RowId> ids;  // ids of the benign rows, in matrix row order
};

inline constexpr std::size_t kDefaultReducedFeatures = 32;

// Features ranked by summed |SHAP| of the defender's clean model; only the
// benign rows of `train` are kept. Constant columns map to 0.
ReducedSpace reduce_space(const Dataset& train, const ShapMatrix& clean_shap, std::size_t k);

struct FilterReport {
  std::string defense_kind;
  std::vector<RowId> removed_ids;
  std::size_t n_inspected = 0;
  std::size_t poisons_removed = 0;
  std::size_t goodware_removed = 0;
  std::optional<double> post_defense_acc_fb_xb;
  std::map<std::string, double> parameters;
  std::vector<std::string> warnings;
};

// Splits removed ids into poisons (ids in `poison_ids`) and clean goodware.
void score_removals(FilterReport& report, std::span<const RowId> poison_ids);

// --- Spectral signatures ---------------------------------------------------

struct PowerIterationResult {
  std::vector<double> vector;  // unit norm; largest-magnitude entry positive
  double singular_value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Top right singular vector of `a` by power iteration on a^T a.
PowerIterationResult top_right_singular_vector(const Matrix& a, std::size_t max_iterations = 200,
                                               double tolerance = 1e-10);

// (r~ . u)^2 for every row, with r~ the column-centred row.
std::vector<double> spectral_scores(const Matrix& m);

FilterReport spectral_filter(const ReducedSpace& rs, double remove_fraction = 0.15);

// --- Density clustering ----------------------------------------------------

struct HdbscanResult {
  std::vector<int> labels;  // cluster index, or -1 for noise
  std::size_t n_clusters = 0;
};

// Mutual-reachability MST, single-linkage hierarchy condensed at
// min_cluster_size, leaf clusters extracted. The root is never a cluster.
HdbscanResult hdbscan_cluster(const Matrix& points, std::size_t min_cluster_size,
                              std::size_t min_samples);

// Per-point silhouette (noise excluded, reported as 0); all zeros with fewer
// than two clusters.
std::vector<double> silhouette_samples(const Matrix& points, std::span<const int> labels);

// Mean silhouette per cluster index.
std::vector<double> cluster_silhouettes(const Matrix& points, std::span<const int> labels,
                                        std::size_t n_clusters);

FilterReport density_cluster_filter(const ReducedSpace& rs, double min_cluster_fraction = 0.01,
                                    double min_samples_fraction = 0.005, std::uint64_t seed = 0);

// --- Isolation forest ------------------------------------------------------

// Average unsuccessful-search path length of a BST with n nodes.
double average_path_length(std::size_t n);

struct IsolationForestParams {
  std::size_t n_trees = 100;
  std::size_t subsample = 256;
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  static IsolationForest fit(const Matrix& x, const IsolationForestParams& params);

  double expected_path_length(std::span<const double> x) const;
  // 2^(-E[h(x)] / c(subsample)), in (0, 1].
  double score(std::span<const double> x) const;
  std::vector<double> scores(const Matrix& x) const;

  std::size_t subsample() const { return subsample_; }

 private:
  struct Node {
    int feature = -1;  // -1 marks an external node
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;
  };
  using ITree = std::vector<Node>;

  std::vector<ITree> trees_;
  std::size_t subsample_ = 0;
};

inline constexpr double kIsolationThreshold = 0.5;

FilterReport isolation_forest_filter(const ReducedSpace& rs, std::size_t n_trees = 100,
                                     std::size_t subsample = 256, std::uint64_t seed = 0,
                                     double threshold = kIsolationThreshold);

// --- Retraining ------------------------------------------------------------

struct RetrainResult {
  Model model;
  double acc_fb_xb = 0.0;
};

// Drops the removed rows, retrains and measures accuracy on the watermarked
// malware. Also stores the accuracy in report.post_defense_acc_fb_xb.
RetrainResult retrain_after_filter(const Dataset& train, FilterReport& report,
                                   const TrainConfig& cfg, const Dataset& xb);

// --- Persistence -----------------------------------------------------------

std::string filter_report_to_json(const FilterReport& report);
FilterReport filter_report_from_json(std::string_view text);
void save_filter_report(const FilterReport& report, const std::filesystem::path& path);

// One line of the mitigation matrix.
struct MitigationRow {
  std::string victim;
  std::string strategy;
  std::string value_selector;
  std::string defense;
  double poison_fraction = 0.0;
  std::size_t trigger_size = 0;
  std::size_t trial = 0;
  std::size_t poisons_total = 0;
  std::size_t poisons_removed = 0;
  std::size_t goodware_removed = 0;
  double acc_fb_xb_before = 0.0;
  double acc_fb_xb_after = 0.0;
};

void write_mitigation_csv(std::span<const MitigationRow> rows, const std::filesystem::path& path);

}  // namespace shapdoor
