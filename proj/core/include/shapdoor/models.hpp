#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shapdoor/common.hpp"
#include "shapdoor/dataset.hpp"

namespace shapdoor {

enum class ModelKind {
  logistic_regression,
  linear_svm,
  random_forest,
  gradient_boosted_trees,
  feed_forward_net,
};

inline constexpr ModelKind kAllModelKinds[] = {
    ModelKind::logistic_regression, ModelKind::linear_svm, ModelKind::random_forest,
    ModelKind::gradient_boosted_trees, ModelKind::feed_forward_net};

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct TreeParams {
  std::size_t n_trees = 50;
  std::size_t max_leaves = 31;
  double learning_rate = 0.1;
  std::size_t min_samples_leaf = 20;
  std::size_t max_bins = 255;
  double l2 = 1.0;

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct NetParams {
  std::vector<std::size_t> layer_widths{64, 32, 16};
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double dropout_rate = 0.5;

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

struct LinearParams {
  std::size_t epochs = 300;
  double learning_rate = 0.5;
  double l2 = 1e-4;

  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

// Only the parameter block matching `kind` is used.
struct TrainConfig {
  ModelKind kind = ModelKind::gradient_boosted_trees;
  std::uint64_t seed = 0;
  TreeParams trees;
  NetParams net;
  LinearParams linear;

  // Defaults per kind. Random forests use 100 fully-grown trees with
  // min_samples_leaf = 1 instead of the boosting defaults.
  static TrainConfig defaults(ModelKind kind, std::uint64_t seed = 0);

  void validate() const;
  std::uint64_t hash() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// --- Learned parameters ----------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double evaluate(std::span<const double> x) const;
  std::size_t n_leaves() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

// GBDT: margin = base_score + sum of leaf values.
// Random forest: probability = mean of leaf class-1 frequencies.
struct TreeEnsemble {
  std::vector<Tree> trees;
  double base_score = 0.0;

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Hidden layers use ReLU; the last layer outputs the logit. Inputs are
// standardized with (x - input_mean) / input_scale first.
struct NeuralNet {
  std::vector<double> input_mean;
  std::vector<double> input_scale;
  std::vector<DenseLayer> layers;

  friend bool operator==(const NeuralNet&, const NeuralNet&) = default;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::optional<TrainConfig> config;
  // Eval-mode training loss after each epoch (iterative learners only).
  std::vector<double> epoch_losses;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

// RF probabilities are clipped to [eps, 1 - eps] before taking the logit.
inline constexpr double kForestProbabilityEpsilon = 1e-6;

class Model {
 public:
  using Params = std::variant<LinearModel, TreeEnsemble, NeuralNet>;

  static Model make_linear(ModelKind kind, LinearModel params);
  static Model make_gbdt(std::size_t n_features, TreeEnsemble ensemble);
  static Model make_forest(std::size_t n_features, TreeEnsemble ensemble);
  static Model make_net(NeuralNet net);

  ModelKind kind() const { return kind_; }
  std::size_t n_features() const { return n_features_; }

  // Decision score; class 1 iff margin >= 0 at the default threshold.
  double margin(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;
  int predict_label(std::span<const double> x, double threshold = 0.5) const;
  // Margins of every row of `xs`, written to `out` (size xs.rows()).
  void margins(const Matrix& xs, std::span<double> out) const;
  std::vector<double> margins(const Matrix& xs) const;

  const Params& params() const { return params_; }
  const LinearModel* linear() const { return std::get_if<LinearModel>(&params_); }
  const TreeEnsemble* ensemble() const { return std::get_if<TreeEnsemble>(&params_); }
  const NeuralNet* net() const { return std::get_if<NeuralNet>(&params_); }

  const TrainingMeta& meta() const { return meta_; }
  TrainingMeta& meta() { return meta_; }

  friend bool operator==(const Model&, const Model&) = default;

 private:
  Model(ModelKind kind, std::size_t n_features, Params params)
      : kind_(kind), n_features_(n_features), params_(std::move(params)) {}

  void check_input(std::span<const double> x) const;
  double raw_margin(std::span<const double> x) const;

  ModelKind kind_;
  std::size_t n_features_;
  Params params_;
  TrainingMeta meta_;
};

Model train(const Dataset& ds, const TrainConfig& cfg);

struct EvalMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double fp_rate = 0.0;  // FP / (FP + TN)
  double fn_rate = 0.0;  // FN / (FN + TP)
  double threshold = 0.5;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

EvalMetrics metrics_from_predictions(std::span<const int> labels, std::span<const int> predicted,
                                     double threshold = 0.5);
EvalMetrics evaluate(const Model& m, const Dataset& ds, double threshold = 0.5);
std::vector<int> predict_labels(const Model& m, const Matrix& xs, double threshold = 0.5);

// Versioned JSON; doubles are written in shortest round-trip form so
// save/load is bit-exact.
std::string model_to_json(const Model& m);
Model model_from_json(std::string_view text);
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace shapdoor
