#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shapdoor/dataset.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor::detail {

// Per-feature quantized split thresholds and the bin index of every value.
class BinnedFeatures {
 public:
  BinnedFeatures(const Matrix& x, std::size_t max_bins);

  std::size_t n_features() const { return thresholds_.size(); }
  std::size_t n_bins(std::size_t feature) const { return thresholds_[feature].size() + 1; }
  double threshold(std::size_t feature, std::size_t bin) const {
    return thresholds_[feature][bin];
  }
  // Bin of row r for feature f; rows with bin <= b satisfy x <= threshold(f, b).
  std::uint16_t bin(std::size_t feature, std::size_t row) const {
    return bins_[feature * n_rows_ + row];
  }

 private:
  std::size_t n_rows_;
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::uint16_t> bins_;
};

TreeEnsemble train_gbdt(const Dataset& ds, const TreeParams& params, std::uint64_t seed);
TreeEnsemble train_forest(const Dataset& ds, const TreeParams& params, std::uint64_t seed);
LinearModel train_linear(const Dataset& ds, ModelKind kind, const LinearParams& params,
                         std::vector<double>* epoch_losses);
NeuralNet train_net(const Dataset& ds, const NetParams& params, std::uint64_t seed,
                    std::vector<double>* epoch_losses);

double net_margin(const NeuralNet& net, std::span<const double> x);
void net_margins(const NeuralNet& net, const Matrix& xs, std::span<double> out);

}  // namespace shapdoor::detail
