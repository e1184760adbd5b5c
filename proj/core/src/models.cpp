#include "shapdoor/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_impl.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic_regression: return "logistic_regression";
    case ModelKind::linear_svm: return "linear_svm";
    case ModelKind::random_forest: return "random_forest";
    case ModelKind::gradient_boosted_trees: return "gradient_boosted_trees";
    case ModelKind::feed_forward_net: return "feed_forward_net";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  for (ModelKind k : kAllModelKinds) {
    if (to_string(k) == text) return k;
  }
  if (text == "gbdt") return ModelKind::gradient_boosted_trees;
  if (text == "ffn" || text == "nn") return ModelKind::feed_forward_net;
  if (text == "rf") return ModelKind::random_forest;
  if (text == "svm") return ModelKind::linear_svm;
  if (text == "logreg") return ModelKind::logistic_regression;
  throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

TrainConfig TrainConfig::defaults(ModelKind kind, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.kind = kind;
  cfg.seed = seed;
  if (kind == ModelKind::random_forest) {
    cfg.trees.n_trees = 100;
    cfg.trees.max_leaves = 0;
    cfg.trees.min_samples_leaf = 1;
  }
  return cfg;
}

void TrainConfig::validate() const {
  switch (kind) {
    case ModelKind::gradient_boosted_trees:
    case ModelKind::random_forest:
      if (trees.n_trees == 0) throw ConfigError("trees.n_trees must be >= 1");
      if (kind == ModelKind::gradient_boosted_trees && trees.max_leaves < 2) {
        throw ConfigError("trees.max_leaves must be >= 2");
      }
      if (!(trees.learning_rate > 0.0)) throw ConfigError("trees.learning_rate must be > 0");
      if (trees.min_samples_leaf == 0) throw ConfigError("trees.min_samples_leaf must be >= 1");
      if (trees.max_bins < 2 || trees.max_bins > 65535) {
        throw ConfigError("trees.max_bins must lie in [2, 65535]");
      }
      if (!(trees.l2 >= 0.0)) throw ConfigError("trees.l2 must be >= 0");
      break;
    case ModelKind::feed_forward_net:
      if (net.layer_widths.empty()) throw ConfigError("net.layer_widths must not be empty");
      for (std::size_t w : net.layer_widths) {
        if (w == 0) throw ConfigError("net.layer_widths entries must be >= 1");
      }
      if (net.epochs == 0) throw ConfigError("net.epochs must be >= 1");
      if (net.batch_size == 0) throw ConfigError("net.batch_size must be >= 1");
      if (!(net.learning_rate > 0.0)) throw ConfigError("net.learning_rate must be > 0");
      if (!(net.dropout_rate >= 0.0 && net.dropout_rate < 1.0)) {
        throw ConfigError("net.dropout_rate must lie in [0, 1)");
      }
      break;
    case ModelKind::logistic_regression:
    case ModelKind::linear_svm:
      if (linear.epochs == 0) throw ConfigError("linear.epochs must be >= 1");
      if (!(linear.learning_rate > 0.0)) throw ConfigError("linear.learning_rate must be > 0");
      if (!(linear.l2 >= 0.0)) throw ConfigError("linear.l2 must be >= 0");
      break;
  }
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = derive_seed(static_cast<std::uint64_t>(kind), {seed});
  const auto add = [&](std::uint64_t v) { h = derive_seed(h, {v}); };
  add(trees.n_trees);
  add(trees.max_leaves);
  add(seed_tag(trees.learning_rate));
  add(trees.min_samples_leaf);
  add(trees.max_bins);
  add(seed_tag(trees.l2));
  for (std::size_t w : net.layer_widths) add(w);
  add(net.epochs);
  add(net.batch_size);
  add(seed_tag(net.learning_rate));
  add(seed_tag(net.dropout_rate));
  add(linear.epochs);
  add(seed_tag(linear.learning_rate));
  add(seed_tag(linear.l2));
  return h;
}

// --- Trees -----------------------------------------------------------------

double Tree::evaluate(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                        : n.right);
  }
  return nodes[i].value;
}

std::size_t Tree::n_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

// --- Model -----------------------------------------------------------------

namespace {

void check_tree(const Tree& tree, std::size_t n_features) {
  if (tree.nodes.empty()) throw ConfigError("tree has no nodes");
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) continue;
    const auto in_range = [&](int child) {
      return child > 0 && static_cast<std::size_t>(child) < tree.nodes.size();
    };
    if (static_cast<std::size_t>(n.feature) >= n_features || !in_range(n.left) ||
        !in_range(n.right)) {
      throw ConfigError("malformed tree node");
    }
  }
}

}  // namespace

Model Model::make_linear(ModelKind kind, LinearModel params) {
  if (kind != ModelKind::logistic_regression && kind != ModelKind::linear_svm) {
    throw ConfigError("make_linear: kind must be logistic_regression or linear_svm");
  }
  const std::size_t n = params.weights.size();
  return Model(kind, n, std::move(params));
}

Model Model::make_gbdt(std::size_t n_features, TreeEnsemble ensemble) {
  for (const auto& t : ensemble.trees) check_tree(t, n_features);
  return Model(ModelKind::gradient_boosted_trees, n_features, std::move(ensemble));
}

Model Model::make_forest(std::size_t n_features, TreeEnsemble ensemble) {
  if (ensemble.trees.empty()) throw ConfigError("random forest needs at least one tree");
  for (const auto& t : ensemble.trees) check_tree(t, n_features);
  return Model(ModelKind::random_forest, n_features, std::move(ensemble));
}

Model Model::make_net(NeuralNet net) {
  if (net.layers.empty()) throw ConfigError("neural net has no layers");
  const std::size_t n = net.layers.front().inputs;
  if (net.input_mean.size() != n || net.input_scale.size() != n) {
    throw ConfigError("neural net standardization size mismatch");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
      throw ConfigError("neural net layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (l > 0 && layer.inputs != net.layers[l - 1].outputs) {
      throw ConfigError("neural net layer " + std::to_string(l) + " input width mismatch");
    }
  }
  if (net.layers.back().outputs != 1) throw ConfigError("neural net must have one output");
  return Model(ModelKind::feed_forward_net, n, std::move(net));
}

void Model::check_input(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw DimensionError("model expects " + std::to_string(n_features_) + " features, got " +
                         std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value passed to model");
  }
}

double Model::raw_margin(std::span<const double> x) const {
  switch (kind_) {
    case ModelKind::logistic_regression:
    case ModelKind::linear_svm: {
      const auto& p = std::get<LinearModel>(params_);
      return std::inner_product(p.weights.begin(), p.weights.end(), x.begin(), p.bias);
    }
    case ModelKind::gradient_boosted_trees: {
      const auto& e = std::get<TreeEnsemble>(params_);
      double m = e.base_score;
      for (const auto& t : e.trees) m += t.evaluate(x);
      return m;
    }
    case ModelKind::random_forest: {
      const auto& e = std::get<TreeEnsemble>(params_);
      double p = 0.0;
      for (const auto& t : e.trees) p += t.evaluate(x);
      p /= static_cast<double>(e.trees.size());
      p = std::clamp(p, kForestProbabilityEpsilon, 1.0 - kForestProbabilityEpsilon);
      return std::log(p / (1.0 - p));
    }
    case ModelKind::feed_forward_net:
      return detail::net_margin(std::get<NeuralNet>(params_), x);
  }
  return 0.0;
}

double Model::margin(std::span<const double> x) const {
  check_input(x);
  return raw_margin(x);
}

double Model::predict_proba(std::span<const double> x) const { return logistic(margin(x)); }

int Model::predict_label(std::span<const double> x, double threshold) const {
  return predict_proba(x) >= threshold ? kMalware : kBenign;
}

void Model::margins(const Matrix& xs, std::span<double> out) const {
  if (xs.cols() != n_features_) {
    throw DimensionError("model expects " + std::to_string(n_features_) + " features, got " +
                         std::to_string(xs.cols()));
  }
  if (out.size() != xs.rows()) throw DimensionError("margins: output size mismatch");
  if (kind_ == ModelKind::feed_forward_net) {
    detail::net_margins(std::get<NeuralNet>(params_), xs, out);
    return;
  }
  for (std::size_t i = 0; i < xs.rows(); ++i) out[i] = raw_margin(xs.row(i));
}

std::vector<double> Model::margins(const Matrix& xs) const {
  std::vector<double> out(xs.rows());
  margins(xs, out);
  return out;
}

// --- Training --------------------------------------------------------------

namespace detail {

LinearModel train_linear(const Dataset& ds, ModelKind kind, const LinearParams& params,
                         std::vector<double>* epoch_losses) {
  const std::size_t n = ds.n_rows();
  const std::size_t d = ds.n_features();
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) scale[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  Matrix z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (r[j] - mean[j]) / scale[j];
  }

  const bool svm = kind == ModelKind::linear_svm;
  std::vector<double> w(d, 0.0), grad(d);
  double b = 0.0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = z.row(i);
      const double m = std::inner_product(w.begin(), w.end(), r.begin(), b);
      const int y = ds.label(i);
      double g = 0.0;
      if (svm) {
        const double ys = y == kMalware ? 1.0 : -1.0;
        if (ys * m < 1.0) {
          g = -ys;
          loss += 1.0 - ys * m;
        }
      } else {
        g = logistic(m) - static_cast<double>(y);
        loss += logistic_loss(m, y);
      }
      if (g != 0.0) {
        for (std::size_t j = 0; j < d; ++j) grad[j] += g * r[j];
        grad_b += g;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double penalty = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      penalty += 0.5 * params.l2 * w[j] * w[j];
      w[j] -= params.learning_rate * (grad[j] * inv_n + params.l2 * w[j]);
    }
    b -= params.learning_rate * grad_b * inv_n;
    if (epoch_losses) epoch_losses->push_back(loss * inv_n + penalty);
  }

  LinearModel out;
  out.weights.resize(d);
  out.bias = b;
  for (std::size_t j = 0; j < d; ++j) {
    out.weights[j] = w[j] / scale[j];
    out.bias -= w[j] * mean[j] / scale[j];
  }
  return out;
}

}  // namespace detail

Model train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw DataError("train: empty dataset");
  if (ds.count_label(kBenign) == 0 || ds.count_label(kMalware) == 0) {
    throw DataError("train: training data must contain both classes");
  }
  for (double v : ds.features().data()) {
    if (!std::isfinite(v)) throw DataError("train: non-finite feature value");
  }

  std::vector<double> losses;
  Model model = [&] {
    switch (cfg.kind) {
      case ModelKind::logistic_regression:
      case ModelKind::linear_svm:
        return Model::make_linear(cfg.kind,
                                  detail::train_linear(ds, cfg.kind, cfg.linear, &losses));
      case ModelKind::gradient_boosted_trees:
        return Model::make_gbdt(ds.n_features(), detail::train_gbdt(ds, cfg.trees, cfg.seed));
      case ModelKind::random_forest:
        return Model::make_forest(ds.n_features(), detail::train_forest(ds, cfg.trees, cfg.seed));
      case ModelKind::feed_forward_net:
        return Model::make_net(detail::train_net(ds, cfg.net, cfg.seed, &losses));
    }
    throw ConfigError("unknown model kind");
  }();
  model.meta().seed = cfg.seed;
  model.meta().config_hash = cfg.hash();
  model.meta().config = cfg;
  model.meta().epoch_losses = std::move(losses);
  return model;
}

// --- Evaluation ------------------------------------------------------------

EvalMetrics metrics_from_predictions(std::span<const int> labels, std::span<const int> predicted,
                                     double threshold) {
  if (labels.empty()) throw DataError("evaluate: empty dataset");
  if (labels.size() != predicted.size()) throw DimensionError("evaluate: size mismatch");
  EvalMetrics m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == kMalware;
    const bool pred = predicted[i] == kMalware;
    if (actual && pred) ++m.tp;
    else if (!actual && pred) ++m.fp;
    else if (!actual && !pred) ++m.tn;
    else ++m.fn;
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.accuracy = ratio(m.tp + m.tn, labels.size());
  m.fp_rate = ratio(m.fp, m.fp + m.tn);
  m.fn_rate = ratio(m.fn, m.fn + m.tp);
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  return m;
}

std::vector<int> predict_labels(const Model& m, const Matrix& xs, double threshold) {
  const auto margins = m.margins(xs);
  std::vector<int> out(margins.size());
  for (std::size_t i = 0; i < margins.size(); ++i) {
    out[i] = logistic(margins[i]) >= threshold ? kMalware : kBenign;
  }
  return out;
}

EvalMetrics evaluate(const Model& m, const Dataset& ds, double threshold) {
  if (ds.empty()) throw DataError("evaluate: empty dataset");
  const auto predicted = predict_labels(m, ds.features(), threshold);
  return metrics_from_predictions(ds.labels(), predicted, threshold);
}

}  // namespace shapdoor
