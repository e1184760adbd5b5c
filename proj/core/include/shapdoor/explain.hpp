#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "shapdoor/common.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

// Batch evaluator: writes f(row) into out[i] for every row of the matrix.
// Any model-like function can be explained through this interface.
using MarginFunction = std::function<void(const Matrix&, std::span<double>)>;

MarginFunction margin_function(const Model& m);

// Reference distribution for the interventional value function.
struct Background {
  Matrix rows;
  std::vector<double> weights;  // empty means uniform

  static Background uniform(Matrix rows);

  void validate(std::size_t n_features) const;
  double weight(std::size_t i) const;
  std::vector<double> mean() const;
};

// Up to `size` benign rows drawn uniformly without replacement (all benign
// rows when fewer are available).
Background sample_background(const Dataset& ds, std::size_t size, std::uint64_t seed);

enum class ExplainMethod { exact, kernel, linear };

std::string_view to_string(ExplainMethod method);
ExplainMethod parse_explain_method(std::string_view text);

inline constexpr std::size_t kMaxExactFeatures = 20;

struct ExplainerConfig {
  ExplainMethod method = ExplainMethod::kernel;
  std::size_t n_coalition_samples = 2048;
  std::uint64_t seed = 0;
  std::size_t background_size = 100;

  void validate(std::size_t n_features) const;
};

struct Attribution {
  std::vector<double> phi;
  double base = 0.0;
};

// Attributions for a whole dataset: row i explains sample i. Positive values
// push toward class 1 (malware).
struct ShapMatrix {
  Matrix values;
  double base_value = 0.0;
  std::vector<RowId> sample_ids;

  std::size_t n_samples() const { return values.rows(); }
  std::size_t n_features() const { return values.cols(); }
  ShapMatrix select_rows(std::span<const std::size_t> rows) const;
};

// Brute-force Shapley values over all 2^M coalitions with the interventional
// value function v(S) = weighted mean over background rows b of f(x_S, b_~S).
Attribution exact_shapley(const MarginFunction& f, std::span<const double> x,
                          const Background& bg);
Attribution exact_shapley(const Model& m, std::span<const double> x, const Background& bg);

// Shapley-kernel weighted least squares with the efficiency constraint.
// Coalition sizes whose full enumeration fits the budget are enumerated (in
// complementary pairs); the remainder is sampled in pairs with sizes drawn
// proportionally to the kernel mass. With a budget >= 2^M - 2 every proper
// coalition is enumerated and the result equals exact_shapley.
Attribution kernel_shap(const MarginFunction& f, std::span<const double> x, const Background& bg,
                        const ExplainerConfig& cfg);
Attribution kernel_shap(const Model& m, std::span<const double> x, const Background& bg,
                        const ExplainerConfig& cfg);

// Closed form for already-linear models: phi_j = w_j (x_j - mu_j).
Attribution linear_shap(std::span<const double> weights, double bias, std::span<const double> x,
                        const Background& bg);

ShapMatrix explain_dataset(const Model& m, const Dataset& ds, const Background& bg,
                           const ExplainerConfig& cfg);

// CSV layout: first record "base_value,<v>", then a header "id,<feature...>",
// then one row per sample.
void save_shap_csv(const ShapMatrix& shap, const std::vector<FeatureSpec>& specs,
                   const std::filesystem::path& path);
ShapMatrix load_shap_csv(const std::filesystem::path& path);

}  // namespace shapdoor
