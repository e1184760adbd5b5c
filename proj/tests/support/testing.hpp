#pragma once

// Generators and independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "shapdoor/dataset.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor::testing {

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(0, rows.empty() ? 0 : rows.front().size());
  for (const auto& r : rows) m.append_row(r);
  return m;
}

inline Dataset make_dataset(const std::vector<std::vector<double>>& rows, std::vector<int> labels,
                            FeatureKind kind = FeatureKind::integer) {
  Matrix x = to_matrix(rows);
  auto specs = default_specs(x.cols());
  for (auto& s : specs) s.kind = kind;
  std::vector<RowId> ids(x.rows());
  std::iota(ids.begin(), ids.end(), RowId{0});
  return Dataset(std::move(x), std::move(labels), std::move(specs), std::move(ids));
}

// Integer features in [0, n_values); the label depends on the first two
// columns plus 10% label noise, and both classes are always present.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, int n_values = 6) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : rows[i]) v = static_cast<double>(rng.below(static_cast<std::size_t>(n_values)));
    const double s = rows[i][0] + (d > 1 ? rows[i][1] : 0.0);
    labels[i] = s >= static_cast<double>(n_values - 1) ? kMalware : kBenign;
    if (rng.uniform() < 0.1) labels[i] = 1 - labels[i];
  }
  labels[0] = kBenign;
  labels[1] = kMalware;
  return make_dataset(rows, labels);
}

// Small, fast training settings for oracle tests.
inline TrainConfig quick_config(ModelKind kind, std::uint64_t seed) {
  TrainConfig c = TrainConfig::defaults(kind, seed);
  c.trees.n_trees = kind == ModelKind::random_forest ? 8 : 12;
  c.trees.max_leaves = 8;
  c.trees.min_samples_leaf = 5;
  c.net.layer_widths = {8, 4};
  c.net.epochs = 5;
  c.linear.epochs = 50;
  return c;
}

inline Model random_model(ModelKind kind, std::uint64_t seed, std::size_t d) {
  Rng rng(seed, 17);
  const Dataset ds = random_dataset(rng, 200, d);
  return train(ds, quick_config(kind, seed));
}

inline Background random_background(Rng& rng, std::size_t rows, std::size_t d, int n_values = 6) {
  Matrix m(rows, d);
  for (double& v : m.data()) v = static_cast<double>(rng.below(static_cast<std::size_t>(n_values)));
  return Background::uniform(std::move(m));
}

// Shapley values straight from the permutation definition: the average
// marginal contribution of j over all M! feature orderings. Independent of
// the subset-weight formula used by the library; only practical for M <= 7.
inline std::vector<double> shapley_by_permutations(const MarginFunction& f,
                                                   std::span<const double> x,
                                                   const Background& bg) {
  const std::size_t m = x.size();
  auto value = [&](const std::vector<bool>& in) {
    Matrix hybrid(bg.rows.rows(), m);
    for (std::size_t b = 0; b < bg.rows.rows(); ++b) {
      for (std::size_t j = 0; j < m; ++j) hybrid(b, j) = in[j] ? x[j] : bg.rows(b, j);
    }
    std::vector<double> out(bg.rows.rows());
    f(hybrid, out);
    double acc = 0.0;
    for (std::size_t b = 0; b < out.size(); ++b) acc += bg.weight(b) * out[b];
    return acc;
  };
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> phi(m, 0.0);
  double n_perm = 0.0;
  do {
    std::vector<bool> in(m, false);
    double prev = value(in);
    for (std::size_t j : order) {
      in[j] = true;
      const double cur = value(in);
      phi[j] += cur - prev;
      prev = cur;
    }
    n_perm += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= n_perm;
  return phi;
}

// Cyclic Jacobi eigen-decomposition of a small symmetric matrix. Returns
// (eigenvalues, eigenvectors as columns of a row-major matrix).
inline std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix a) {
  const std::size_t n = a.rows();
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  return {eig, v};
}

// Unit eigenvector of A^T A for its largest eigenvalue.
inline std::vector<double> dense_top_right_singular_vector(const Matrix& a) {
  const std::size_t n = a.cols();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * a(r, j);
      g(i, j) = s;
    }
  }
  auto [eig, vecs] = jacobi_eigen(g);
  const auto top = static_cast<std::size_t>(std::max_element(eig.begin(), eig.end()) - eig.begin());
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = vecs(i, top);
  return u;
}

// Four rows, three integer features: r0..r2 benign, r3 malware. SHAP rows
// are chosen so the greedy conditional trace can be followed by hand.
struct HandInstance {
  Dataset ds;
  ShapMatrix shap;
};

inline HandInstance hand_instance() {
  HandInstance h;
  h.ds = make_dataset({{1, 5, 0}, {1, 6, 1}, {2, 5, 1}, {1, 5, 1}}, {0, 0, 0, 1});
  h.shap.values = to_matrix({{-0.5, -0.2, 0.1}, {-0.4, 0.3, -0.3}, {0.2, -0.4, -0.1}, {0.9, 0.9, 0.9}});
  h.shap.sample_ids = h.ds.ids();
  return h;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace shapdoor::testing
