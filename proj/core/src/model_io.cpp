#include <sstream>

#include "serialize.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

namespace {

constexpr const char* kModelFormat = "shapdoor.model";
constexpr int kModelVersion = 1;

json tree_to_json(const Tree& tree) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array();
  for (const auto& n : tree.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left},
          {"right", right},     {"value", value}};
}

Tree tree_from_json(const json& doc) {
  KeyChecker keys(doc, "tree");
  const auto feature = keys.required<std::vector<int>>("feature");
  const auto threshold = keys.required<std::vector<double>>("threshold");
  const auto left = keys.required<std::vector<int>>("left");
  const auto right = keys.required<std::vector<int>>("right");
  const auto value = keys.required<std::vector<double>>("value");
  keys.finish();
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
    throw ConfigError("tree arrays have inconsistent lengths");
  }
  Tree tree;
  tree.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tree.nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
  }
  return tree;
}

}  // namespace

json train_config_to_json(const TrainConfig& cfg) {
  return {
      {"kind", std::string(to_string(cfg.kind))},
      {"seed", cfg.seed},
      {"trees",
       {{"n_trees", cfg.trees.n_trees},
        {"max_leaves", cfg.trees.max_leaves},
        {"learning_rate", cfg.trees.learning_rate},
        {"min_samples_leaf", cfg.trees.min_samples_leaf},
        {"max_bins", cfg.trees.max_bins},
        {"l2", cfg.trees.l2}}},
      {"net",
       {{"layer_widths", cfg.net.layer_widths},
        {"epochs", cfg.net.epochs},
        {"batch_size", cfg.net.batch_size},
        {"learning_rate", cfg.net.learning_rate},
        {"dropout_rate", cfg.net.dropout_rate}}},
      {"linear",
       {{"epochs", cfg.linear.epochs},
        {"learning_rate", cfg.linear.learning_rate},
        {"l2", cfg.linear.l2}}},
  };
}

TrainConfig train_config_from_json(const json& doc, const std::string& context) {
  KeyChecker keys(doc, context);
  TrainConfig cfg =
      TrainConfig::defaults(parse_model_kind(keys.required<std::string>("kind")));
  cfg.seed = keys.optional<std::uint64_t>("seed", cfg.seed);
  if (keys.has("trees")) {
    KeyChecker t(keys.object("trees"), context + ".trees");
    cfg.trees.n_trees = t.optional("n_trees", cfg.trees.n_trees);
    cfg.trees.max_leaves = t.optional("max_leaves", cfg.trees.max_leaves);
    cfg.trees.learning_rate = t.optional("learning_rate", cfg.trees.learning_rate);
    cfg.trees.min_samples_leaf = t.optional("min_samples_leaf", cfg.trees.min_samples_leaf);
    cfg.trees.max_bins = t.optional("max_bins", cfg.trees.max_bins);
    cfg.trees.l2 = t.optional("l2", cfg.trees.l2);
    t.finish();
  }
  if (keys.has("net")) {
    KeyChecker t(keys.object("net"), context + ".net");
    cfg.net.layer_widths = t.optional("layer_widths", cfg.net.layer_widths);
    cfg.net.epochs = t.optional("epochs", cfg.net.epochs);
    cfg.net.batch_size = t.optional("batch_size", cfg.net.batch_size);
    cfg.net.learning_rate = t.optional("learning_rate", cfg.net.learning_rate);
    cfg.net.dropout_rate = t.optional("dropout_rate", cfg.net.dropout_rate);
    t.finish();
  }
  if (keys.has("linear")) {
    KeyChecker t(keys.object("linear"), context + ".linear");
    cfg.linear.epochs = t.optional("epochs", cfg.linear.epochs);
    cfg.linear.learning_rate = t.optional("learning_rate", cfg.linear.learning_rate);
    cfg.linear.l2 = t.optional("l2", cfg.linear.l2);
    t.finish();
  }
  keys.finish();
  cfg.validate();
  return cfg;
}

std::string model_to_json(const Model& m) {
  json params;
  if (const auto* lin = m.linear()) {
    params = {{"weights", lin->weights}, {"bias", lin->bias}};
  } else if (const auto* ens = m.ensemble()) {
    json trees = json::array();
    for (const auto& t : ens->trees) trees.push_back(tree_to_json(t));
    params = {{"base_score", ens->base_score}, {"trees", trees}};
  } else if (const auto* net = m.net()) {
    json layers = json::array();
    for (const auto& l : net->layers) {
      layers.push_back({{"inputs", l.inputs},
                        {"outputs", l.outputs},
                        {"weights", l.weights},
                        {"bias", l.bias}});
    }
    params = {{"input_mean", net->input_mean},
              {"input_scale", net->input_scale},
              {"layers", layers}};
  }
  const auto& meta = m.meta();
  json doc = {
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"kind", std::string(to_string(m.kind()))},
      {"n_features", m.n_features()},
      {"meta",
       {{"seed", meta.seed},
        {"config_hash", meta.config_hash},
        {"config", meta.config ? train_config_to_json(*meta.config) : json(nullptr)},
        {"epoch_losses", meta.epoch_losses}}},
      {"params", params},
  };
  return doc.dump();
}

Model model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
  KeyChecker keys(doc, "model");
  if (keys.required<std::string>("format") != kModelFormat) {
    throw ConfigError("model JSON: unexpected format tag");
  }
  const int version = keys.required<int>("version");
  if (version != kModelVersion) {
    throw ConfigError("model JSON: unsupported version " + std::to_string(version));
  }
  const ModelKind kind = parse_model_kind(keys.required<std::string>("kind"));
  const auto n_features = keys.required<std::size_t>("n_features");
  const json& p = keys.object("params");

  Model model = [&] {
    switch (kind) {
      case ModelKind::logistic_regression:
      case ModelKind::linear_svm: {
        KeyChecker pk(p, "model.params");
        LinearModel lin;
        lin.weights = pk.required<std::vector<double>>("weights");
        lin.bias = pk.required<double>("bias");
        pk.finish();
        if (lin.weights.size() != n_features) throw ConfigError("model JSON: weight count mismatch");
        return Model::make_linear(kind, std::move(lin));
      }
      case ModelKind::gradient_boosted_trees:
      case ModelKind::random_forest: {
        KeyChecker pk(p, "model.params");
        TreeEnsemble ens;
        ens.base_score = pk.required<double>("base_score");
        for (const auto& t : pk.object("trees")) ens.trees.push_back(tree_from_json(t));
        pk.finish();
        return kind == ModelKind::random_forest ? Model::make_forest(n_features, std::move(ens))
                                                : Model::make_gbdt(n_features, std::move(ens));
      }
      case ModelKind::feed_forward_net: {
        KeyChecker pk(p, "model.params");
        NeuralNet net;
        net.input_mean = pk.required<std::vector<double>>("input_mean");
        net.input_scale = pk.required<std::vector<double>>("input_scale");
        for (const auto& l : pk.object("layers")) {
          KeyChecker lk(l, "model.params.layers[]");
          DenseLayer layer;
          layer.inputs = lk.required<std::size_t>("inputs");
          layer.outputs = lk.required<std::size_t>("outputs");
          layer.weights = lk.required<std::vector<double>>("weights");
          layer.bias = lk.required<std::vector<double>>("bias");
          lk.finish();
          net.layers.push_back(std::move(layer));
        }
        pk.finish();
        Model m = Model::make_net(std::move(net));
        if (m.n_features() != n_features) throw ConfigError("model JSON: input width mismatch");
        return m;
      }
    }
    throw ConfigError("model JSON: unknown kind");
  }();

  KeyChecker mk(keys.object("meta"), "model.meta");
  model.meta().seed = mk.required<std::uint64_t>("seed");
  model.meta().config_hash = mk.required<std::uint64_t>("config_hash");
  const json& cfg = mk.object("config");
  if (!cfg.is_null()) model.meta().config = train_config_from_json(cfg, "model.meta.config");
  model.meta().epoch_losses = mk.required<std::vector<double>>("epoch_losses");
  mk.finish();
  keys.finish();
  return model;
}

void save_model(const Model& m, const std::filesystem::path& path) {
  write_text_file(model_to_json(m) + "\n", path);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace shapdoor
