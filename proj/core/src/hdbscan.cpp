#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "shapdoor/defend.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return std::sqrt(s);
}

// Distance to the min_samples-th nearest neighbour, the point itself counted.
std::vector<double> core_distances(const Matrix& x, std::size_t min_samples) {
  const std::size_t n = x.rows();
  std::vector<double> core(n), row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = distance(x.row(i), x.row(j));
    auto nth = row.begin() + static_cast<std::ptrdiff_t>(min_samples - 1);
    std::nth_element(row.begin(), nth, row.end());
    core[i] = *nth;
  }
  return core;
}

struct Edge {
  std::size_t a, b;
  double weight;
};

// Prim's algorithm on the dense mutual-reachability graph.
std::vector<Edge> mutual_reachability_mst(const Matrix& x, const std::vector<double>& core) {
  const std::size_t n = x.rows();
  std::vector<Edge> edges;
  if (n < 2) return edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double mr =
          std::max({core[current], core[j], distance(x.row(current), x.row(j))});
      if (mr < best[j]) {
        best[j] = mr;
        from[j] = current;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, best[next]});
    current = next;
  }
  return edges;
}

struct LinkageNode {
  std::size_t left = 0, right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void link(std::size_t child, std::size_t root) { parent_[child] = root; }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

HdbscanResult hdbscan_cluster(const Matrix& points, std::size_t min_cluster_size,
                              std::size_t min_samples) {
  const std::size_t n = points.rows();
  if (min_cluster_size < 2) throw ConfigError("hdbscan: min_cluster_size must be >= 2");
  if (min_samples < 1) throw ConfigError("hdbscan: min_samples must be >= 1");
  if (n < min_cluster_size) {
    throw InsufficientDataError("hdbscan: " + std::to_string(n) +
                                " rows is fewer than min_cluster_size " +
                                std::to_string(min_cluster_size));
  }
  if (min_samples > n) throw ConfigError("hdbscan: min_samples exceeds the number of rows");

  const auto core = core_distances(points, min_samples);
  auto edges = mutual_reachability_mst(points, core);
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& a, const Edge& b) { return a.weight < b.weight; });

  // Single-linkage dendrogram: ids < n are points, id n + i is merge i.
  std::vector<LinkageNode> merges;
  merges.reserve(n - 1);
  UnionFind uf(2 * n);
  std::vector<std::size_t> size(2 * n, 1);
  for (const auto& e : edges) {
    const std::size_t ra = uf.find(e.a), rb = uf.find(e.b);
    const std::size_t id = n + merges.size();
    merges.push_back({ra, rb, e.weight, size[ra] + size[rb]});
    size[id] = size[ra] + size[rb];
    uf.link(ra, id);
    uf.link(rb, id);
  }

  auto node_size = [&](std::size_t id) { return id < n ? std::size_t{1} : merges[id - n].size; };
  auto collect_points = [&](std::size_t id, std::vector<std::size_t>& out) {
    std::vector<std::size_t> stack{id};
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      if (cur < n) {
        out.push_back(cur);
      } else {
        stack.push_back(merges[cur - n].left);
        stack.push_back(merges[cur - n].right);
      }
    }
  };

  // Condensation: walk down from the root; a split only creates new clusters
  // when both sides reach min_cluster_size, otherwise the small side's
  // points leave the current cluster.
  struct Cluster {
    std::size_t n_children = 0;
  };
  std::vector<Cluster> clusters(1);  // cluster 0 is the root
  std::vector<std::size_t> owner(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{2 * n - 2, 0}};
  std::vector<std::size_t> fallen;
  while (!stack.empty()) {
    const auto [node, cluster] = stack.back();
    stack.pop_back();
    if (node < n) {
      owner[node] = cluster;
      continue;
    }
    const auto& m = merges[node - n];
    const bool big_left = node_size(m.left) >= min_cluster_size;
    const bool big_right = node_size(m.right) >= min_cluster_size;
    if (big_left && big_right) {
      for (std::size_t child : {m.right, m.left}) {
        clusters.push_back({});
        ++clusters[cluster].n_children;
        stack.emplace_back(child, clusters.size() - 1);
      }
      continue;
    }
    for (std::size_t child : {m.left, m.right}) {
      const bool big = child == m.left ? big_left : big_right;
      if (big) {
        stack.emplace_back(child, cluster);
      } else {
        fallen.clear();
        collect_points(child, fallen);
        for (std::size_t p : fallen) owner[p] = cluster;
      }
    }
  }

  // Leaf clusters, numbered by their smallest member index.
  std::vector<std::size_t> first_member(clusters.size(), n);
  for (std::size_t p = 0; p < n; ++p) first_member[owner[p]] = std::min(first_member[owner[p]], p);
  std::vector<std::size_t> leaves;
  for (std::size_t c = 1; c < clusters.size(); ++c) {
    if (clusters[c].n_children == 0 && first_member[c] < n) leaves.push_back(c);
  }
  std::sort(leaves.begin(), leaves.end(),
            [&](std::size_t a, std::size_t b) { return first_member[a] < first_member[b]; });
  std::vector<int> label_of(clusters.size(), -1);
  for (std::size_t i = 0; i < leaves.size(); ++i) label_of[leaves[i]] = static_cast<int>(i);

  HdbscanResult result;
  result.n_clusters = leaves.size();
  result.labels.resize(n);
  for (std::size_t p = 0; p < n; ++p) result.labels[p] = label_of[owner[p]];
  return result;
}

std::vector<double> silhouette_samples(const Matrix& points, std::span<const int> labels) {
  const std::size_t n = points.rows();
  if (labels.size() != n) throw DimensionError("silhouette: label count mismatch");
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  const auto n_clusters = static_cast<std::size_t>(max_label + 1);
  std::vector<double> out(n, 0.0);
  if (n_clusters < 2) return out;

  std::vector<std::size_t> counts(n_clusters, 0);
  for (int l : labels) {
    if (l >= 0) ++counts[static_cast<std::size_t>(l)];
  }
  std::vector<double> sums(n_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    const auto own = static_cast<std::size_t>(labels[i]);
    if (counts[own] < 2) continue;  // singleton clusters score 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || labels[j] < 0) continue;
      sums[static_cast<std::size_t>(labels[j])] += distance(points.row(i), points.row(j));
    }
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (c == own || counts[c] == 0) continue;
      b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    out[i] = denom > 0.0 && std::isfinite(b) ? (b - a) / denom : 0.0;
  }
  return out;
}

std::vector<double> cluster_silhouettes(const Matrix& points, std::span<const int> labels,
                                        std::size_t n_clusters) {
  const auto per_point = silhouette_samples(points, labels);
  std::vector<double> sum(n_clusters, 0.0);
  std::vector<std::size_t> count(n_clusters, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= n_clusters) throw DimensionError("cluster_silhouettes: label out of range");
    sum[c] += per_point[i];
    ++count[c];
  }
  for (std::size_t c = 0; c < n_clusters; ++c) {
    if (count[c] > 0) sum[c] /= static_cast<double>(count[c]);
  }
  return sum;
}

FilterReport density_cluster_filter(const ReducedSpace& rs, double min_cluster_fraction,
                                    double min_samples_fraction, std::uint64_t seed) {
  if (!(min_cluster_fraction > 0.0 && min_cluster_fraction <= 1.0) ||
      !(min_samples_fraction > 0.0 && min_samples_fraction <= 1.0)) {
    throw ConfigError("density_cluster_filter: fractions must be in (0, 1]");
  }
  const std::size_t n = rs.matrix.rows();
  const auto nd = static_cast<double>(n);
  const std::size_t min_cluster =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(min_cluster_fraction * nd)));
  const std::size_t min_samples =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(min_samples_fraction * nd)));

  FilterReport report;
  report.defense_kind = "hdbscan";
  report.n_inspected = n;
  report.parameters["min_cluster_size"] = static_cast<double>(min_cluster);
  report.parameters["min_samples"] = static_cast<double>(min_samples);
  report.parameters["seed"] = static_cast<double>(seed);

  const auto clustering = hdbscan_cluster(rs.matrix, min_cluster, min_samples);
  const auto sil = cluster_silhouettes(rs.matrix, clustering.labels, clustering.n_clusters);
  report.parameters["n_clusters"] = static_cast<double>(clustering.n_clusters);
  if (clustering.n_clusters < 2) {
    report.warnings.push_back("fewer than two clusters found; silhouettes are zero");
  }
  Rng rng(seed, 0xdb5);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = clustering.labels[i];
    if (label < 0) continue;
    const double p = std::clamp(sil[static_cast<std::size_t>(label)], 0.0, 1.0);
    if (rng.uniform() < p) report.removed_ids.push_back(rs.ids[i]);
  }
  std::sort(report.removed_ids.begin(), report.removed_ids.end());
  return report;
}

}  // namespace shapdoor
