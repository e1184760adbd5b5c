// shapdoor command-line tool. Every stage of the attack/defense pipeline is a
// subcommand; `experiment` and `defend` run whole sweeps from one config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "shapdoor/attack.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/defend.hpp"
#include "shapdoor/experiment.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace shapdoor;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCellFailures = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string scenario;
  std::string strategy;
  std::vector<std::string> defenses;
  // Stage inputs.
  std::string data;
  std::string spec;
  std::string model;
  std::string clean_model;
  std::string shap;
  std::string trigger;
  std::string input;
  std::string format = "json";
};

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig cfg;
  if (o.config.empty()) {
    cfg.data.synthetic = SynthConfig{};
  } else {
    cfg = load_experiment_config(o.config);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.scenario.empty()) {
    Scenario s = Scenario::parse(o.scenario);
    s.surrogate_kind = cfg.scenario.surrogate_kind;
    s.data_fraction = cfg.scenario.data_fraction;
    s.constraint_profile = cfg.scenario.constraint_profile;
    if (!s.has(ScenarioTag::transfer)) s.surrogate_kind.reset();
    cfg.scenario = s;
  }
  if (!o.strategy.empty()) cfg.strategy = parse_strategy(o.strategy);
  cfg.validate();
  return cfg;
}

Dataset load_input(const Options& o, const ExperimentConfig& cfg) {
  if (o.data.empty()) return load_data_source(cfg);
  if (o.spec.empty()) throw ConfigError("--data requires --spec");
  return load_csv(o.data, o.spec);
}

ConstraintProfile profile_for(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.scenario.has(ScenarioTag::constrained)) {
    return resolve_constraint_profile(cfg.scenario.constraint_profile, cfg.base_dir, ds.specs());
  }
  return ConstraintProfile::from_specs(ds.specs());
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  return o.out;
}

int cmd_gen_data(const Options& o) {
  ExperimentConfig cfg = load_config(o);
  if (!cfg.data.synthetic) throw ConfigError("gen-data needs a 'data.synthetic' section");
  SynthConfig sc = *cfg.data.synthetic;
  if (o.seed) sc.seed = *o.seed;
  const Dataset ds = generate_synthetic(sc);
  const fs::path dir = require_out(o);
  fs::create_directories(dir);
  save_feature_specs(ds.specs(), dir / "spec.json");
  save_csv(ds, dir / "data.csv");
  const auto parts = split(ds, {cfg.data.train_fraction, sc.seed, true});
  save_csv(parts.train, dir / "train.csv");
  save_csv(parts.test, dir / "test.csv");
  std::cout << "wrote " << ds.n_rows() << " rows (" << parts.train.n_rows() << " train, "
            << parts.test.n_rows() << " test) to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  const Dataset ds = load_input(o, cfg);
  TrainConfig tc = cfg.victim;
  if (o.seed) tc.seed = *o.seed;
  const Model m = train(ds, tc);
  save_model(m, require_out(o));
  const EvalMetrics e = evaluate(m, ds);
  std::cout << to_string(m.kind()) << ": training accuracy " << e.accuracy << "\n";
  return kExitOk;
}

int cmd_explain(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  if (o.model.empty()) throw ConfigError("--model is required");
  const Dataset ds = load_input(o, cfg);
  const Model m = load_model(o.model);
  ExplainerConfig ec = cfg.explainer;
  ec.seed = cfg.seed;
  const Background bg = sample_background(ds, ec.background_size, cfg.seed);
  const ShapMatrix shap = explain_dataset(m, ds, bg, ec);
  save_shap_csv(shap, ds.specs(), require_out(o));
  std::cout << "explained " << shap.n_samples() << " rows, base value " << shap.base_value
            << "\n";
  return kExitOk;
}

int cmd_attack(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  if (o.shap.empty()) throw ConfigError("--shap is required");
  const Dataset ds = load_input(o, cfg);
  const ShapMatrix shap = load_shap_csv(o.shap);
  const ConstraintProfile profile = profile_for(cfg, ds);
  Inflation inflation;
  if (cfg.scenario.has(ScenarioTag::constrained)) inflation = additive_inflation(ds, profile, shap);
  SelectorConfig sel = cfg.selector;
  sel.trigger_size = cfg.trigger_sizes.front();
  const Trigger t = cfg.strategy == Strategy::independent
                        ? build_trigger_independent(shap, ds, sel, profile, inflation)
                        : build_trigger_combined(shap, ds, sel, profile, inflation);
  save_trigger(t, ds.specs(), require_out(o));
  std::cout << "trigger with " << t.size() << " entries"
            << (t.early_stop ? " (stopped early: support exhausted)" : "") << "\n";
  return kExitOk;
}

int cmd_poison(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  if (o.trigger.empty()) throw ConfigError("--trigger is required");
  const Dataset ds = load_input(o, cfg);
  const Trigger t = load_trigger(o.trigger);
  const ConstraintProfile profile = profile_for(cfg, ds);
  const double fraction = cfg.poison_fractions.front();
  const PoisonResult r = build_poison_set(ds, t, profile, fraction, cfg.seed);
  const fs::path dir = require_out(o);
  fs::create_directories(dir);
  save_csv(r.poisoned, dir / "poisoned.csv");
  save_feature_specs(r.poisoned.specs(), dir / "spec.json");
  json plan = {{"poison_fraction", r.plan.poison_fraction},
               {"seed", r.plan.seed},
               {"selected_benign_ids", r.plan.selected_benign_ids},
               {"infeasible_benign", r.infeasible_benign},
               {"trigger", json::parse(trigger_to_json(t, ds.specs()))}};
  write_text(plan.dump(2) + "\n", dir / "plan.json");
  std::cout << "poisoned " << r.plan.selected_benign_ids.size() << " benign rows\n";
  return kExitOk;
}

json metrics_json(const EvalMetrics& e) {
  return {{"accuracy", e.accuracy}, {"f1", e.f1},         {"fp_rate", e.fp_rate},
          {"fn_rate", e.fn_rate},   {"threshold", e.threshold}, {"tp", e.tp},
          {"fp", e.fp},             {"tn", e.tn},         {"fn", e.fn}};
}

int cmd_evaluate(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  if (o.model.empty()) throw ConfigError("--model is required");
  const Dataset ds = load_input(o, cfg);
  const Model m = load_model(o.model);
  json doc = {{"model", std::string(to_string(m.kind()))}, {"test", metrics_json(evaluate(m, ds))}};
  if (!o.trigger.empty()) {
    if (o.clean_model.empty()) throw ConfigError("--trigger requires --clean-model");
    const Model clean = load_model(o.clean_model);
    const auto marked = watermark_test_malware(ds, clean, load_trigger(o.trigger), profile_for(cfg, ds));
    doc["acc_fb_xb"] = evaluate(m, marked.xb).accuracy;
    doc["n_xb"] = marked.xb.n_rows();
    doc["n_xb_infeasible"] = marked.n_infeasible;
  }
  const std::string text = doc.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(text, o.out);
  }
  return kExitOk;
}

std::string fraction_label(double f) {
  std::ostringstream s;
  s << f;
  return s.str();
}

void write_defense_outputs(const ExperimentResult& r, const fs::path& dir) {
  write_mitigation_csv(r.mitigation, dir / "mitigation.csv");
  for (const auto& rep : r.filter_reports) {
    auto param = [&](const char* key) {
      auto it = rep.parameters.find(key);
      return it == rep.parameters.end() ? 0.0 : it->second;
    };
    const std::string name = rep.defense_kind + "_f" + fraction_label(param("poison_fraction")) +
                             "_n" + std::to_string(static_cast<long>(param("trigger_size"))) +
                             "_t" + std::to_string(static_cast<long>(param("trial"))) + ".json";
    save_filter_report(rep, dir / "filter_reports" / name);
  }
}

int finish_sweep(const ExperimentConfig& cfg, const ExperimentResult& r, const fs::path& dir) {
  emit_report(cfg, r, ReportFormat::json, dir / "report.json");
  emit_report(cfg, r, ReportFormat::csv, dir / "cells.csv");
  for (const auto& c : r.cells) {
    const auto acc = c.summary(&TrialResult::acc_fb_xb);
    const auto base = c.summary(&TrialResult::acc_f_xb);
    std::cout << c.strategy << " " << c.value_selector << " fraction=" << c.poison_fraction
              << " size=" << c.trigger_size << ": acc_fb_xb " << acc.mean << " (clean "
              << base.mean << "), " << c.n_failed() << " failed\n";
  }
  if (r.failures > 0) {
    std::cerr << r.failures << " trial cell(s) failed; partial results written to "
              << dir.string() << "\n";
    return kExitCellFailures;
  }
  return kExitOk;
}

fs::path sweep_dir(const Options& o, const ExperimentConfig& cfg) {
  return o.out.empty() ? cfg.output_dir : fs::path(o.out);
}

int cmd_experiment(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = sweep_dir(o, cfg);
  if (o.defenses.empty()) return finish_sweep(cfg, run_attack_experiment(cfg, o.jobs), dir);
  const ExperimentResult r = run_defense_experiment(cfg, o.defenses, o.jobs);
  write_defense_outputs(r, dir);
  return finish_sweep(cfg, r, dir);
}

int cmd_defend(const Options& o) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = sweep_dir(o, cfg);
  const auto& kinds = o.defenses.empty() ? cfg.defense.kinds : o.defenses;
  const ExperimentResult r = run_defense_experiment(cfg, kinds, o.jobs);
  write_defense_outputs(r, dir);
  const int code = finish_sweep(cfg, r, dir);
  for (const auto& m : r.mitigation) {
    std::cout << m.defense << " trial " << m.trial << ": removed " << m.poisons_removed << "/"
              << m.poisons_total << " poisons, " << m.goodware_removed << " goodware, acc_fb_xb "
              << m.acc_fb_xb_before << " -> " << m.acc_fb_xb_after << "\n";
  }
  return code;
}

int cmd_report(const Options& o) {
  if (o.input.empty()) throw ConfigError("--input is required");
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw IoError("cannot open " + o.input);
  std::stringstream buf;
  buf << in.rdbuf();
  const LoadedReport report = report_from_json(buf.str());
  const std::string text = parse_report_format(o.format) == ReportFormat::json
                               ? report_to_json(report)
                               : report_to_csv(report.result);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(text, o.out);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-guided backdoor poisoning and defenses"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output file or directory");
    sub->add_option("--seed", o.seed, "Override the base seed");
  };
  auto data_inputs = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Input CSV (defaults to the config's data source)");
    sub->add_option("--spec", o.spec, "Feature spec sidecar for --data");
  };
  auto sweep = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--scenario", o.scenario, "Scenario tags, e.g. transfer+data_limited");
    sub->add_option("--strategy", o.strategy, "independent | combined");
    sub->add_option("--defense", o.defenses, "spectral, hdbscan, isolation_forest")
        ->delimiter(',');
  };

  struct Command {
    CLI::App* app;
    int (*run)(const Options&);
  };
  std::vector<Command> commands;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  common(gen);
  commands.push_back({gen, cmd_gen_data});

  auto* tr = app.add_subcommand("train", "Train the configured victim model");
  common(tr);
  data_inputs(tr);
  commands.push_back({tr, cmd_train});

  auto* ex = app.add_subcommand("explain", "Compute a SHAP matrix for a model");
  common(ex);
  data_inputs(ex);
  ex->add_option("--model", o.model, "Model JSON");
  commands.push_back({ex, cmd_explain});

  auto* at = app.add_subcommand("attack", "Build a trigger from a SHAP matrix");
  common(at);
  data_inputs(at);
  at->add_option("--shap", o.shap, "SHAP matrix CSV");
  at->add_option("--scenario", o.scenario, "Scenario tags");
  at->add_option("--strategy", o.strategy, "independent | combined");
  commands.push_back({at, cmd_attack});

  auto* po = app.add_subcommand("poison", "Watermark benign training rows");
  common(po);
  data_inputs(po);
  po->add_option("--trigger", o.trigger, "Trigger JSON");
  po->add_option("--scenario", o.scenario, "Scenario tags");
  commands.push_back({po, cmd_poison});

  auto* ev = app.add_subcommand("evaluate", "Evaluate a model, optionally on watermarked malware");
  common(ev);
  data_inputs(ev);
  ev->add_option("--model", o.model, "Model JSON");
  ev->add_option("--clean-model", o.clean_model, "Clean model used to select X_b");
  ev->add_option("--trigger", o.trigger, "Trigger JSON");
  ev->add_option("--scenario", o.scenario, "Scenario tags");
  commands.push_back({ev, cmd_evaluate});

  auto* de = app.add_subcommand("defend", "Attack sweep followed by the defensive filters");
  common(de);
  sweep(de);
  commands.push_back({de, cmd_defend});

  auto* xp = app.add_subcommand("experiment", "Run the configured attack sweep");
  common(xp);
  sweep(xp);
  commands.push_back({xp, cmd_experiment});

  auto* rp = app.add_subcommand("report", "Re-emit a saved report as JSON or CSV");
  rp->add_option("--input", o.input, "report.json written by experiment");
  rp->add_option("--out", o.out, "Output path (stdout when omitted)");
  rp->add_option("--format", o.format, "json | csv");
  commands.push_back({rp, cmd_report});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& c : commands) {
      if (c.app->parsed()) return c.run(o);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
