#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "model_impl.hpp"

namespace shapdoor::detail {

BinnedFeatures::BinnedFeatures(const Matrix& x, std::size_t max_bins)
    : n_rows_(x.rows()), thresholds_(x.cols()), bins_(x.rows() * x.cols()) {
  std::vector<double> column(x.rows());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    for (std::size_t r = 0; r < x.rows(); ++r) column[r] = x(r, f);
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    auto& th = thresholds_[f];
    if (unique.size() <= max_bins) {
      for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
        th.push_back(unique[i] + (unique[i + 1] - unique[i]) / 2.0);
      }
    } else {
      // Quantile cut points over the sorted column, snapped to midpoints
      // between adjacent distinct values.
      for (std::size_t b = 1; b < max_bins; ++b) {
        const std::size_t pos = b * sorted.size() / max_bins;
        const double lo = sorted[pos - 1];
        auto next = std::upper_bound(unique.begin(), unique.end(), lo);
        if (next == unique.end()) break;
        const double t = lo + (*next - lo) / 2.0;
        if (th.empty() || t > th.back()) th.push_back(t);
      }
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
      bins_[f * n_rows_ + r] = static_cast<std::uint16_t>(
          std::lower_bound(th.begin(), th.end(), column[r]) - th.begin());
    }
  }
}

namespace {

struct Split {
  double gain = 0.0;
  int feature = -1;
  std::size_t bin = 0;
};

struct Leaf {
  int node = 0;
  std::vector<std::uint32_t> rows;
  double grad = 0.0;
  double hess = 0.0;
  Split best;
};

class GbdtTreeBuilder {
 public:
  GbdtTreeBuilder(const BinnedFeatures& bins, const TreeParams& params,
                  const std::vector<double>& grad, const std::vector<double>& hess)
      : bins_(bins), params_(params), grad_(grad), hess_(hess) {}

  Tree build(std::vector<std::uint32_t> all_rows) {
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves;
    leaves.push_back(make_leaf(0, std::move(all_rows)));

    while (leaves.size() < params_.max_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (leaves[i].best.feature < 0) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;

      Leaf leaf = std::move(leaves[pick]);
      leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));

      const auto f = static_cast<std::size_t>(leaf.best.feature);
      std::vector<std::uint32_t> left_rows, right_rows;
      for (std::uint32_t r : leaf.rows) {
        (bins_.bin(f, r) <= leaf.best.bin ? left_rows : right_rows).push_back(r);
      }
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      const int right = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(leaf.node)];
      parent.feature = leaf.best.feature;
      parent.threshold = bins_.threshold(f, leaf.best.bin);
      parent.left = left;
      parent.right = right;

      leaves.push_back(make_leaf(left, std::move(left_rows)));
      leaves.push_back(make_leaf(right, std::move(right_rows)));
    }

    for (const auto& leaf : leaves) {
      tree.nodes[static_cast<std::size_t>(leaf.node)].value =
          -params_.learning_rate * leaf.grad / (leaf.hess + params_.l2);
    }
    return tree;
  }

 private:
  static constexpr double kMinHessian = 1e-3;

  Leaf make_leaf(int node, std::vector<std::uint32_t> rows) {
    Leaf leaf;
    leaf.node = node;
    leaf.rows = std::move(rows);
    for (std::uint32_t r : leaf.rows) {
      leaf.grad += grad_[r];
      leaf.hess += hess_[r];
    }
    if (leaf.rows.size() >= 2 * params_.min_samples_leaf) leaf.best = find_split(leaf);
    return leaf;
  }

  Split find_split(const Leaf& leaf) {
    Split best;
    const double parent_score = leaf.grad * leaf.grad / (leaf.hess + params_.l2);
    const std::size_t n = leaf.rows.size();
    for (std::size_t f = 0; f < bins_.n_features(); ++f) {
      const std::size_t nb = bins_.n_bins(f);
      if (nb < 2) continue;
      g_.assign(nb, 0.0);
      h_.assign(nb, 0.0);
      c_.assign(nb, 0);
      for (std::uint32_t r : leaf.rows) {
        const auto b = bins_.bin(f, r);
        g_[b] += grad_[r];
        h_[b] += hess_[r];
        ++c_[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += g_[b];
        hl += h_[b];
        cl += c_[b];
        if (c_[b] == 0) continue;
        if (cl < params_.min_samples_leaf) continue;
        if (n - cl < params_.min_samples_leaf) break;
        const double gr = leaf.grad - gl;
        const double hr = leaf.hess - hl;
        if (hl < kMinHessian || hr < kMinHessian) continue;
        const double gain =
            gl * gl / (hl + params_.l2) + gr * gr / (hr + params_.l2) - parent_score;
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.bin = b;
        }
      }
    }
    return best;
  }

  const BinnedFeatures& bins_;
  const TreeParams& params_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  std::vector<double> g_, h_;
  std::vector<std::size_t> c_;
};

}  // namespace

TreeEnsemble train_gbdt(const Dataset& ds, const TreeParams& params, std::uint64_t /*seed*/) {
  // Exact greedy learning without row or column subsampling is fully
  // deterministic; the seed is recorded in the model metadata only.
  const std::size_t n = ds.n_rows();
  const BinnedFeatures bins(ds.features(), params.max_bins);

  const double positives = static_cast<double>(ds.count_label(kMalware));
  const double rate = positives / static_cast<double>(n);
  TreeEnsemble ensemble;
  ensemble.base_score = std::log(rate / (1.0 - rate));

  std::vector<double> margin(n, ensemble.base_score), grad(n), hess(n);
  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = logistic(margin[i]);
      grad[i] = p - static_cast<double>(ds.label(i));
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    GbdtTreeBuilder builder(bins, params, grad, hess);
    Tree tree = builder.build(all_rows);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.evaluate(ds.row(i));
    ensemble.trees.push_back(std::move(tree));
  }
  return ensemble;
}

}  // namespace shapdoor::detail
