#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_impl.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor::detail {

namespace {

struct Pending {
  int node;
  std::vector<std::uint32_t> rows;
};

double gini_weighted(double w0, double w1) {
  const double w = w0 + w1;
  if (w <= 0.0) return 0.0;
  const double p0 = w0 / w, p1 = w1 / w;
  return w * (1.0 - p0 * p0 - p1 * p1);
}

class ForestTreeBuilder {
 public:
  ForestTreeBuilder(const BinnedFeatures& bins, const Dataset& ds, const TreeParams& params,
                    const std::vector<double>& weight, Rng& rng)
      : bins_(bins), ds_(ds), params_(params), weight_(weight), rng_(rng) {
    mtry_ = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(ds.n_features())))));
  }

  Tree build(std::vector<std::uint32_t> rows) {
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::move(rows)});
    std::size_t leaves = 1;
    while (!stack.empty()) {
      Pending cur = std::move(stack.back());
      stack.pop_back();
      double w0 = 0.0, w1 = 0.0;
      for (auto r : cur.rows) (ds_.label(r) == kMalware ? w1 : w0) += weight_[r];
      tree.nodes[static_cast<std::size_t>(cur.node)].value = w1 / (w0 + w1);

      const bool can_grow = params_.max_leaves == 0 || leaves < params_.max_leaves;
      if (!can_grow || w0 == 0.0 || w1 == 0.0 || cur.rows.size() < 2 * params_.min_samples_leaf) {
        continue;
      }
      int feature = -1;
      std::size_t bin = 0;
      if (!find_split(cur.rows, w0, w1, feature, bin)) continue;

      const auto f = static_cast<std::size_t>(feature);
      std::vector<std::uint32_t> left_rows, right_rows;
      for (auto r : cur.rows) (bins_.bin(f, r) <= bin ? left_rows : right_rows).push_back(r);
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      const int right = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(cur.node)];
      parent.feature = feature;
      parent.threshold = bins_.threshold(f, bin);
      parent.left = left;
      parent.right = right;
      ++leaves;
      stack.push_back({right, std::move(right_rows)});
      stack.push_back({left, std::move(left_rows)});
    }
    return tree;
  }

 private:
  bool find_split(const std::vector<std::uint32_t>& rows, double w0, double w1, int& feature,
                  std::size_t& bin) {
    const double parent = gini_weighted(w0, w1);
    double best_gain = 1e-12;
    bool found = false;
    const auto candidates = rng_.sample_without_replacement(ds_.n_features(), mtry_);
    for (std::size_t f : candidates) {
      const std::size_t nb = bins_.n_bins(f);
      if (nb < 2) continue;
      h0_.assign(nb, 0.0);
      h1_.assign(nb, 0.0);
      cnt_.assign(nb, 0);
      for (auto r : rows) {
        const auto b = bins_.bin(f, r);
        (ds_.label(r) == kMalware ? h1_[b] : h0_[b]) += weight_[r];
        ++cnt_[b];
      }
      double l0 = 0.0, l1 = 0.0;
      std::size_t lc = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        l0 += h0_[b];
        l1 += h1_[b];
        lc += cnt_[b];
        if (cnt_[b] == 0) continue;
        if (lc < params_.min_samples_leaf) continue;
        if (rows.size() - lc < params_.min_samples_leaf) break;
        const double gain = parent - gini_weighted(l0, l1) - gini_weighted(w0 - l0, w1 - l1);
        if (gain > best_gain) {
          best_gain = gain;
          feature = static_cast<int>(f);
          bin = b;
          found = true;
        }
      }
    }
    return found;
  }

  const BinnedFeatures& bins_;
  const Dataset& ds_;
  const TreeParams& params_;
  const std::vector<double>& weight_;
  Rng& rng_;
  std::size_t mtry_;
  std::vector<double> h0_, h1_;
  std::vector<std::size_t> cnt_;
};

}  // namespace

TreeEnsemble train_forest(const Dataset& ds, const TreeParams& params, std::uint64_t seed) {
  const std::size_t n = ds.n_rows();
  const BinnedFeatures bins(ds.features(), params.max_bins);
  TreeEnsemble ensemble;
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(seed, 0xf0e5 + t);
    std::vector<double> weight(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) weight[rng.below(n)] += 1.0;
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (weight[i] > 0.0) rows.push_back(static_cast<std::uint32_t>(i));
    }
    ForestTreeBuilder builder(bins, ds, params, weight, rng);
    ensemble.trees.push_back(builder.build(std::move(rows)));
  }
  return ensemble;
}

}  // namespace shapdoor::detail
