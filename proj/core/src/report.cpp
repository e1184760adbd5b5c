#include <sstream>

#include "json_util.hpp"
#include "shapdoor/experiment.hpp"

namespace shapdoor {

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(text) + "'");
}

namespace {

struct MetricField {
  const char* name;
  double TrialResult::*field;
};

constexpr MetricField kMetrics[] = {
    {"acc_fb_xb", &TrialResult::acc_fb_xb},
    {"acc_fb_x", &TrialResult::acc_fb_x},
    {"fp_b", &TrialResult::fp_b},
    {"acc_f_x", &TrialResult::acc_f_x},
    {"fp_f", &TrialResult::fp_f},
    {"acc_f_xb", &TrialResult::acc_f_xb},
    {"acc_f_xb_clean", &TrialResult::acc_f_xb_clean},
    {"clean_on_backdoored_goodware_gap", &TrialResult::stealth_gap},
};

json trigger_json(const Trigger& t) {
  json entries = json::array();
  for (const auto& e : t.entries) entries.push_back({{"feature_index", e.feature}, {"value", e.value}});
  return {{"strategy", std::string(to_string(t.strategy))},
          {"feature_selector", t.feature_selector},
          {"value_selector", t.value_selector},
          {"constraint_profile", t.constraint_profile},
          {"requested_size", t.requested_size},
          {"early_stop", t.early_stop},
          {"entries", entries}};
}

Trigger trigger_from(const json& j) {
  KeyChecker k(j, "report trigger");
  Trigger t;
  t.strategy = parse_strategy(k.required<std::string>("strategy"));
  t.feature_selector = k.required<std::string>("feature_selector");
  t.value_selector = k.required<std::string>("value_selector");
  t.constraint_profile = k.required<std::string>("constraint_profile");
  t.requested_size = k.required<std::size_t>("requested_size");
  t.early_stop = k.required<bool>("early_stop");
  for (const auto& e : k.object("entries")) {
    KeyChecker ek(e, "report trigger entry");
    t.entries.push_back({ek.required<std::size_t>("feature_index"), ek.required<double>("value")});
    ek.finish();
  }
  k.finish();
  return t;
}

json trial_json(const TrialResult& t) {
  json j = {{"trial", t.trial},
            {"seed", t.seed},
            {"error", t.error ? json(*t.error) : json(nullptr)},
            {"n_xb", t.n_xb},
            {"n_xb_infeasible", t.n_xb_infeasible},
            {"n_poison", t.n_poison},
            {"trigger", trigger_json(t.trigger)},
            {"poison_ids", t.poison_ids}};
  for (const auto& m : kMetrics) j[m.name] = t.*(m.field);
  return j;
}

TrialResult trial_from(const json& j) {
  KeyChecker k(j, "report trial");
  TrialResult t;
  t.trial = k.required<std::size_t>("trial");
  t.seed = k.required<std::uint64_t>("seed");
  const json& err = k.object("error");
  if (!err.is_null()) t.error = err.get<std::string>();
  t.n_xb = k.required<std::size_t>("n_xb");
  t.n_xb_infeasible = k.required<std::size_t>("n_xb_infeasible");
  t.n_poison = k.required<std::size_t>("n_poison");
  t.trigger = trigger_from(k.object("trigger"));
  t.poison_ids = k.required<std::vector<RowId>>("poison_ids");
  for (const auto& m : kMetrics) t.*(m.field) = k.required<double>(m.name);
  k.finish();
  return t;
}

json summary_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"n", s.n}};
}

json cell_json(const RunReport& c) {
  json means = json::object();
  for (const auto& m : kMetrics) means[m.name] = summary_json(c.summary(m.field));
  json trials = json::array();
  for (const auto& t : c.trials) trials.push_back(trial_json(t));
  return {{"scenario", c.scenario},
          {"victim", c.victim},
          {"strategy", c.strategy},
          {"feature_selector", c.feature_selector},
          {"value_selector", c.value_selector},
          {"poison_fraction", c.poison_fraction},
          {"trigger_size", c.trigger_size},
          {"n_failed", c.n_failed()},
          {"summary", means},
          {"trials", trials}};
}

RunReport cell_from(const json& j) {
  KeyChecker k(j, "report cell");
  RunReport c;
  c.scenario = k.required<std::string>("scenario");
  c.victim = k.required<std::string>("victim");
  c.strategy = k.required<std::string>("strategy");
  c.feature_selector = k.required<std::string>("feature_selector");
  c.value_selector = k.required<std::string>("value_selector");
  c.poison_fraction = k.required<double>("poison_fraction");
  c.trigger_size = k.required<std::size_t>("trigger_size");
  k.object("n_failed");
  k.object("summary");  // derived from the trials
  for (const auto& t : k.object("trials")) c.trials.push_back(trial_from(t));
  k.finish();
  return c;
}

json mitigation_json(const MitigationRow& r) {
  return {{"victim", r.victim},
          {"strategy", r.strategy},
          {"value_selector", r.value_selector},
          {"defense", r.defense},
          {"poison_fraction", r.poison_fraction},
          {"trigger_size", r.trigger_size},
          {"trial", r.trial},
          {"poisons_total", r.poisons_total},
          {"poisons_removed", r.poisons_removed},
          {"goodware_removed", r.goodware_removed},
          {"acc_fb_xb_before", r.acc_fb_xb_before},
          {"acc_fb_xb_after", r.acc_fb_xb_after}};
}

MitigationRow mitigation_from(const json& j) {
  KeyChecker k(j, "report mitigation row");
  MitigationRow r;
  r.victim = k.required<std::string>("victim");
  r.strategy = k.required<std::string>("strategy");
  r.value_selector = k.required<std::string>("value_selector");
  r.defense = k.required<std::string>("defense");
  r.poison_fraction = k.required<double>("poison_fraction");
  r.trigger_size = k.required<std::size_t>("trigger_size");
  r.trial = k.required<std::size_t>("trial");
  r.poisons_total = k.required<std::size_t>("poisons_total");
  r.poisons_removed = k.required<std::size_t>("poisons_removed");
  r.goodware_removed = k.required<std::size_t>("goodware_removed");
  r.acc_fb_xb_before = k.required<double>("acc_fb_xb_before");
  r.acc_fb_xb_after = k.required<double>("acc_fb_xb_after");
  k.finish();
  return r;
}

std::string render(const json& config, const ExperimentResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) cells.push_back(cell_json(c));
  json mitigation = json::array();
  for (const auto& r : result.mitigation) mitigation.push_back(mitigation_json(r));
  json filters = json::array();
  for (const auto& f : result.filter_reports) filters.push_back(json::parse(filter_report_to_json(f)));
  json doc = {{"schema_version", kReportSchemaVersion},
              {"config", config},
              {"failures", result.failures},
              {"cells", cells},
              {"mitigation", mitigation},
              {"filter_reports", filters}};
  return doc.dump(2) + "\n";
}

}  // namespace

std::string report_to_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  return render(json::parse(experiment_config_to_json(cfg)), result);
}

std::string report_to_json(const LoadedReport& report) {
  return render(json::parse(report.config_json), report.result);
}

LoadedReport report_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("report JSON: ") + e.what());
  }
  KeyChecker k(doc, "report");
  const int version = k.required<int>("schema_version");
  if (version != kReportSchemaVersion) {
    throw ConfigError("report JSON: unsupported schema_version " + std::to_string(version));
  }
  LoadedReport out;
  out.config_json = k.object("config").dump();
  out.result.failures = k.required<std::size_t>("failures");
  for (const auto& c : k.object("cells")) out.result.cells.push_back(cell_from(c));
  for (const auto& r : k.object("mitigation")) out.result.mitigation.push_back(mitigation_from(r));
  for (const auto& f : k.object("filter_reports")) {
    out.result.filter_reports.push_back(filter_report_from_json(f.dump()));
  }
  k.finish();
  return out;
}

std::string report_to_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "scenario,victim,strategy,feature_selector,value_selector,poison_fraction,trigger_size,"
         "trial,seed,status";
  for (const auto& m : kMetrics) out << ',' << m.name;
  out << ",n_xb,n_xb_infeasible,n_poison,trigger_entries,trigger_early_stop\n";
  for (const auto& c : result.cells) {
    for (const auto& t : c.trials) {
      out << c.scenario << ',' << c.victim << ',' << c.strategy << ',' << c.feature_selector << ','
          << c.value_selector << ',' << json(c.poison_fraction).dump() << ',' << c.trigger_size
          << ',' << t.trial << ',' << t.seed << ',' << (t.error ? "failed" : "ok");
      for (const auto& m : kMetrics) out << ',' << json(t.*(m.field)).dump();
      out << ',' << t.n_xb << ',' << t.n_xb_infeasible << ',' << t.n_poison << ','
          << t.trigger.size() << ',' << (t.trigger.early_stop ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

void emit_report(const ExperimentConfig& cfg, const ExperimentResult& result, ReportFormat format,
                 const std::filesystem::path& path) {
  write_text_file(format == ReportFormat::json ? report_to_json(cfg, result) : report_to_csv(result),
                  path);
}

}  // namespace shapdoor
