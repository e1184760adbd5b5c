#include <cstdlib>
#include <sstream>

#include "json_util.hpp"
#include "serialize.hpp"
#include "shapdoor/experiment.hpp"

#ifndef SHAPDOOR_PROFILE_DIR
#define SHAPDOOR_PROFILE_DIR ""
#endif

namespace shapdoor {

std::string_view to_string(ScenarioTag tag) {
  switch (tag) {
    case ScenarioTag::unrestricted: return "unrestricted";
    case ScenarioTag::data_limited: return "data_limited";
    case ScenarioTag::transfer: return "transfer";
    case ScenarioTag::black_box: return "black_box";
    case ScenarioTag::constrained: return "constrained";
  }
  return "?";
}

ScenarioTag parse_scenario_tag(std::string_view text) {
  for (auto tag : {ScenarioTag::unrestricted, ScenarioTag::data_limited, ScenarioTag::transfer,
                   ScenarioTag::black_box, ScenarioTag::constrained}) {
    if (text == to_string(tag)) return tag;
  }
  throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

std::string Scenario::name() const {
  if (tags.empty()) return "unrestricted";
  std::string out;
  for (auto tag : tags) {
    if (!out.empty()) out += '+';
    out += to_string(tag);
  }
  return out;
}

Scenario Scenario::parse(std::string_view spec) {
  Scenario s;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('+', start), spec.size());
    const auto tag = parse_scenario_tag(spec.substr(start, end - start));
    if (tag != ScenarioTag::unrestricted) s.tags.insert(tag);
    start = end + 1;
  }
  return s;
}

void Scenario::validate(ModelKind victim) const {
  if (has(ScenarioTag::transfer)) {
    if (!surrogate_kind) throw ConfigError("scenario 'transfer' requires surrogate_kind");
    if (*surrogate_kind == victim) {
      throw ConfigError("scenario 'transfer': surrogate_kind must differ from the victim kind");
    }
  } else if (surrogate_kind) {
    throw ConfigError("surrogate_kind is only meaningful for the 'transfer' scenario");
  }
  if (has(ScenarioTag::data_limited) && !(data_fraction > 0.0 && data_fraction < 1.0)) {
    throw ConfigError("scenario 'data_limited' requires data_fraction in (0, 1)");
  }
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw ConfigError("data_fraction must be in (0, 1]");
  }
  if (has(ScenarioTag::constrained) && constraint_profile.empty()) {
    throw ConfigError("scenario 'constrained' requires constraint_profile");
  }
}

void ExperimentConfig::validate() const {
  if (data.synthetic) {
    data.synthetic->validate();
  } else if (data.csv.empty() || data.spec.empty()) {
    throw ConfigError("data: give either 'synthetic' or both 'csv' and 'spec'");
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("data.train_fraction must be in (0, 1)");
  }
  victim.validate();
  scenario.validate(victim.kind);
  if (scenario.has(ScenarioTag::black_box) && explainer.method != ExplainMethod::kernel) {
    throw ConfigError("scenario 'black_box' requires explainer method 'kernel'");
  }
  selector.validate();
  if (poison_fractions.empty()) throw ConfigError("poison_fractions must not be empty");
  if (trigger_sizes.empty()) throw ConfigError("trigger_sizes must not be empty");
  for (double f : poison_fractions) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("poison fractions must be in [0, 1)");
  }
  for (std::size_t n : trigger_sizes) {
    if (n == 0) throw ConfigError("trigger sizes must be >= 1");
  }
  if (n_seeds == 0) throw ConfigError("n_seeds must be >= 1");
  if (explainer.background_size == 0) throw ConfigError("explainer.background_size must be >= 1");
  if (!(defense.trusted_fraction > 0.0 && defense.trusted_fraction <= 1.0)) {
    throw ConfigError("defense.trusted_fraction must be in (0, 1]");
  }
  if (defense.reduced_features == 0) throw ConfigError("defense.reduced_features must be >= 1");
  for (const auto& kind : defense.kinds) {
    if (kind != "spectral" && kind != "hdbscan" && kind != "isolation_forest") {
      throw ConfigError("unknown defense '" + kind + "'");
    }
  }
}

namespace {

SynthConfig parse_synth(const json& doc) {
  KeyChecker k(doc, "data.synthetic");
  SynthConfig c;
  c.n_samples = k.optional("n_samples", c.n_samples);
  c.n_features = k.optional("n_features", c.n_features);
  c.n_informative = k.optional("n_informative", c.n_informative);
  c.benign_subpopulations = k.optional("benign_subpopulations", c.benign_subpopulations);
  c.malware_subpopulations = k.optional("malware_subpopulations", c.malware_subpopulations);
  c.class_separation = k.optional("class_separation", c.class_separation);
  c.integer_feature_fraction = k.optional("integer_feature_fraction", c.integer_feature_fraction);
  c.malware_fraction = k.optional("malware_fraction", c.malware_fraction);
  c.malware_signal_rate = k.optional("malware_signal_rate", c.malware_signal_rate);
  c.seed = k.optional("seed", c.seed);
  k.finish();
  return c;
}

json synth_to_json(const SynthConfig& c) {
  return {{"n_samples", c.n_samples},
          {"n_features", c.n_features},
          {"n_informative", c.n_informative},
          {"benign_subpopulations", c.benign_subpopulations},
          {"malware_subpopulations", c.malware_subpopulations},
          {"class_separation", c.class_separation},
          {"integer_feature_fraction", c.integer_feature_fraction},
          {"malware_fraction", c.malware_fraction},
          {"malware_signal_rate", c.malware_signal_rate},
          {"seed", c.seed}};
}

Scenario parse_scenario(const json& doc) {
  if (doc.is_string()) return Scenario::parse(doc.get<std::string>());
  KeyChecker k(doc, "scenario");
  Scenario s;
  if (k.has("tags")) {
    const json& tags = k.object("tags");
    if (tags.is_string()) {
      s = Scenario::parse(tags.get<std::string>());
    } else {
      for (const auto& t : tags) {
        const auto tag = parse_scenario_tag(t.get<std::string>());
        if (tag != ScenarioTag::unrestricted) s.tags.insert(tag);
      }
    }
  }
  if (k.has("surrogate_kind") && !k.object("surrogate_kind").is_null()) {
    s.surrogate_kind = parse_model_kind(k.required<std::string>("surrogate_kind"));
  }
  s.data_fraction = k.optional("data_fraction", s.data_fraction);
  s.constraint_profile = k.optional<std::string>("constraint_profile", "");
  k.finish();
  return s;
}

json scenario_to_json(const Scenario& s) {
  json tags = json::array();
  for (auto t : s.tags) tags.push_back(std::string(to_string(t)));
  return {{"tags", tags},
          {"surrogate_kind",
           s.surrogate_kind ? json(std::string(to_string(*s.surrogate_kind))) : json(nullptr)},
          {"data_fraction", s.data_fraction},
          {"constraint_profile", s.constraint_profile}};
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  KeyChecker keys(doc, "config");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  cfg.name = keys.optional<std::string>("name", cfg.name);

  {
    KeyChecker d(keys.object("data"), "data");
    if (d.has("synthetic")) cfg.data.synthetic = parse_synth(d.object("synthetic"));
    cfg.data.csv = d.optional<std::string>("csv", "");
    cfg.data.spec = d.optional<std::string>("spec", "");
    cfg.data.train_fraction = d.optional("train_fraction", cfg.data.train_fraction);
    d.finish();
    if (cfg.data.synthetic && (!cfg.data.csv.empty() || !cfg.data.spec.empty())) {
      throw ConfigError("data: 'synthetic' and 'csv' are mutually exclusive");
    }
  }
  if (keys.has("victim")) {
    cfg.victim = train_config_from_json(keys.object("victim"), "victim");
  } else {
    cfg.victim = TrainConfig::defaults(ModelKind::gradient_boosted_trees);
  }
  if (keys.has("scenario")) cfg.scenario = parse_scenario(keys.object("scenario"));
  if (keys.has("explainer")) {
    KeyChecker e(keys.object("explainer"), "explainer");
    if (e.has("method")) cfg.explainer.method = parse_explain_method(e.required<std::string>("method"));
    cfg.explainer.n_coalition_samples =
        e.optional("n_coalition_samples", cfg.explainer.n_coalition_samples);
    cfg.explainer.background_size = e.optional("background_size", cfg.explainer.background_size);
    cfg.explain_rows = e.optional("explain_rows", cfg.explain_rows);
    e.finish();
  }
  if (keys.has("selector")) {
    KeyChecker s(keys.object("selector"), "selector");
    if (s.has("feature_selector")) {
      cfg.selector.feature_selector =
          parse_feature_selector(s.required<std::string>("feature_selector"));
    }
    if (s.has("value_selector")) {
      cfg.selector.value_selector = parse_value_selector(s.required<std::string>("value_selector"));
    }
    cfg.selector.alpha = s.optional("alpha", cfg.selector.alpha);
    cfg.selector.beta = s.optional("beta", cfg.selector.beta);
    s.finish();
  }
  if (keys.has("strategy")) cfg.strategy = parse_strategy(keys.required<std::string>("strategy"));
  cfg.poison_fractions = keys.optional("poison_fractions", cfg.poison_fractions);
  cfg.trigger_sizes = keys.optional("trigger_sizes", cfg.trigger_sizes);
  cfg.n_seeds = keys.optional("n_seeds", cfg.n_seeds);
  cfg.seed = keys.optional("seed", cfg.seed);
  if (keys.has("defense")) {
    KeyChecker d(keys.object("defense"), "defense");
    auto& def = cfg.defense;
    def.kinds = d.optional("kinds", def.kinds);
    def.reduced_features = d.optional("reduced_features", def.reduced_features);
    def.trusted_fraction = d.optional("trusted_fraction", def.trusted_fraction);
    def.spectral_remove_fraction = d.optional("spectral_remove_fraction", def.spectral_remove_fraction);
    def.min_cluster_fraction = d.optional("min_cluster_fraction", def.min_cluster_fraction);
    def.min_samples_fraction = d.optional("min_samples_fraction", def.min_samples_fraction);
    def.isolation_trees = d.optional("isolation_trees", def.isolation_trees);
    def.isolation_subsample = d.optional("isolation_subsample", def.isolation_subsample);
    d.finish();
  }
  cfg.output_dir = keys.optional<std::string>("output_dir", cfg.output_dir.string());
  keys.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_experiment_config(doc.dump(), base);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json data = {{"train_fraction", cfg.data.train_fraction}};
  if (cfg.data.synthetic) {
    data["synthetic"] = synth_to_json(*cfg.data.synthetic);
  } else {
    data["csv"] = cfg.data.csv.string();
    data["spec"] = cfg.data.spec.string();
  }
  const auto& d = cfg.defense;
  json doc = {
      {"name", cfg.name},
      {"data", data},
      {"victim", train_config_to_json(cfg.victim)},
      {"scenario", scenario_to_json(cfg.scenario)},
      {"explainer",
       {{"method", std::string(to_string(cfg.explainer.method))},
        {"n_coalition_samples", cfg.explainer.n_coalition_samples},
        {"background_size", cfg.explainer.background_size},
        {"explain_rows", cfg.explain_rows}}},
      {"selector",
       {{"feature_selector", std::string(to_string(cfg.selector.feature_selector))},
        {"value_selector", std::string(to_string(cfg.selector.value_selector))},
        {"alpha", cfg.selector.alpha},
        {"beta", cfg.selector.beta}}},
      {"strategy", std::string(to_string(cfg.strategy))},
      {"poison_fractions", cfg.poison_fractions},
      {"trigger_sizes", cfg.trigger_sizes},
      {"n_seeds", cfg.n_seeds},
      {"seed", cfg.seed},
      {"defense",
       {{"kinds", d.kinds},
        {"reduced_features", d.reduced_features},
        {"trusted_fraction", d.trusted_fraction},
        {"spectral_remove_fraction", d.spectral_remove_fraction},
        {"min_cluster_fraction", d.min_cluster_fraction},
        {"min_samples_fraction", d.min_samples_fraction},
        {"isolation_trees", d.isolation_trees},
        {"isolation_subsample", d.isolation_subsample}}},
      {"output_dir", cfg.output_dir.string()},
  };
  return doc.dump(2) + "\n";
}

ConstraintProfile resolve_constraint_profile(const std::string& ref,
                                             const std::filesystem::path& base_dir,
                                             const std::vector<FeatureSpec>& specs) {
  namespace fs = std::filesystem;
  std::vector<fs::path> candidates;
  const fs::path direct(ref);
  candidates.push_back(direct.is_absolute() ? direct : base_dir / direct);
  if (direct.extension() != ".json") {
    const std::string file = ref + ".json";
    auto add_search_path = [&](const std::string& list) {
      std::stringstream dirs(list);
      std::string dir;
      while (std::getline(dirs, dir, ':')) {
        if (!dir.empty()) candidates.push_back(fs::path(dir) / file);
      }
    };
    if (const char* env = std::getenv("SHAPDOOR_PROFILE_PATH")) add_search_path(env);
    candidates.push_back(base_dir / file);
    candidates.push_back(base_dir / "profiles" / file);
    candidates.push_back(base_dir / ".." / "profiles" / file);
    add_search_path(SHAPDOOR_PROFILE_DIR);
  }
  for (const auto& p : candidates) {
    if (fs::is_regular_file(p)) return load_constraint_profile(p, specs);
  }
  throw ConfigError("constraint profile '" + ref + "' not found");
}

}  // namespace shapdoor
