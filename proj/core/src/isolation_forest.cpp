#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "shapdoor/defend.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

namespace {

constexpr std::size_t kHarmonicTable = 4096;

// H(i) = 1 + 1/2 + ... + 1/i, exact below the table size and asymptotic above.
double harmonic(std::size_t i) {
  static const std::vector<double> table = [] {
    std::vector<double> h(kHarmonicTable, 0.0);
    for (std::size_t k = 1; k < kHarmonicTable; ++k) h[k] = h[k - 1] + 1.0 / static_cast<double>(k);
    return h;
  }();
  if (i < kHarmonicTable) return table[i];
  const double x = static_cast<double>(i);
  return std::log(x) + std::numbers::egamma + 0.5 / x - 1.0 / (12.0 * x * x);
}

}  // namespace

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  const double m = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (m - 1.0) / m;
}

IsolationForest IsolationForest::fit(const Matrix& x, const IsolationForestParams& params) {
  const std::size_t n = x.rows();
  if (params.n_trees == 0) throw ConfigError("isolation forest: n_trees must be >= 1");
  if (params.subsample < 2 || params.subsample > n) {
    throw ConfigError("isolation forest: subsample " + std::to_string(params.subsample) +
                      " must be in [2, " + std::to_string(n) + "]");
  }
  IsolationForest forest;
  forest.subsample_ = params.subsample;
  const auto depth_limit = static_cast<std::size_t>(
      std::ceil(std::log2(static_cast<double>(params.subsample))));

  struct Task {
    int node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };
  std::vector<std::size_t> usable;
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(params.seed, t);
    ITree tree(1);
    std::vector<Task> stack;
    stack.push_back({0, rng.sample_without_replacement(n, params.subsample), 0});
    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();
      Node& node = tree[static_cast<std::size_t>(task.node)];
      node.size = task.rows.size();
      if (task.depth >= depth_limit || task.rows.size() <= 1) continue;

      // Split only on features that vary inside the node.
      usable.clear();
      std::vector<std::pair<double, double>> range(x.cols());
      for (std::size_t f = 0; f < x.cols(); ++f) {
        double lo = x(task.rows[0], f), hi = lo;
        for (std::size_t r : task.rows) {
          lo = std::min(lo, x(r, f));
          hi = std::max(hi, x(r, f));
        }
        range[f] = {lo, hi};
        if (hi > lo) usable.push_back(f);
      }
      if (usable.empty()) continue;
      const std::size_t f = usable[rng.below(usable.size())];
      const double threshold = rng.uniform(range[f].first, range[f].second);

      std::vector<std::size_t> left, right;
      for (std::size_t r : task.rows) (x(r, f) < threshold ? left : right).push_back(r);
      if (left.empty() || right.empty()) continue;  // uniform() hit the lower bound
      const int li = static_cast<int>(tree.size());
      tree.emplace_back();
      const int ri = static_cast<int>(tree.size());
      tree.emplace_back();
      Node& parent = tree[static_cast<std::size_t>(task.node)];
      parent.feature = static_cast<int>(f);
      parent.threshold = threshold;
      parent.left = li;
      parent.right = ri;
      stack.push_back({ri, std::move(right), task.depth + 1});
      stack.push_back({li, std::move(left), task.depth + 1});
    }
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

double IsolationForest::expected_path_length(std::span<const double> x) const {
  double total = 0.0;
  for (const auto& tree : trees_) {
    std::size_t node = 0, depth = 0;
    while (tree[node].feature >= 0) {
      const auto& nd = tree[node];
      node = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] < nd.threshold
                                          ? nd.left
                                          : nd.right);
      ++depth;
    }
    total += static_cast<double>(depth) + average_path_length(tree[node].size);
  }
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::score(std::span<const double> x) const {
  return std::exp2(-expected_path_length(x) / average_path_length(subsample_));
}

std::vector<double> IsolationForest::scores(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = score(x.row(i));
  return out;
}

FilterReport isolation_forest_filter(const ReducedSpace& rs, std::size_t n_trees,
                                     std::size_t subsample, std::uint64_t seed,
                                     double threshold) {
  FilterReport report;
  report.defense_kind = "isolation_forest";
  report.n_inspected = rs.matrix.rows();
  report.parameters["n_trees"] = static_cast<double>(n_trees);
  report.parameters["subsample"] = static_cast<double>(subsample);
  report.parameters["threshold"] = threshold;
  report.parameters["seed"] = static_cast<double>(seed);

  const auto forest = IsolationForest::fit(rs.matrix, {n_trees, subsample, seed});
  const auto s = forest.scores(rs.matrix);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] > threshold) report.removed_ids.push_back(rs.ids[i]);
  }
  std::sort(report.removed_ids.begin(), report.removed_ids.end());
  return report;
}

}  // namespace shapdoor
