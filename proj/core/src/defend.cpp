#include "shapdoor/defend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json_util.hpp"
#include "shapdoor/attack.hpp"

namespace shapdoor {

ReducedSpace reduce_space(const Dataset& train, const ShapMatrix& clean_shap, std::size_t k) {
  if (clean_shap.n_features() != train.n_features()) {
    throw DimensionError("reduce_space: SHAP matrix has " +
                         std::to_string(clean_shap.n_features()) + " features, data has " +
                         std::to_string(train.n_features()));
  }
  if (k == 0 || k > train.n_features()) {
    throw ConfigError("reduce_space: k = " + std::to_string(k) + " must be in [1, " +
                      std::to_string(train.n_features()) + "]");
  }
  const auto importance = feature_importance(clean_shap, ImportanceMode::absolute);
  ReducedSpace rs;
  rs.selected_features = select_features(importance, k, FeatureOrder::largest_magnitude);

  const auto benign = train.rows_with_label(kBenign);
  rs.matrix = train.features().select_rows(benign).select_cols(rs.selected_features);
  for (std::size_t r : benign) rs.ids.push_back(train.id(r));

  for (std::size_t c = 0; c < k; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < rs.matrix.rows(); ++r) {
      lo = std::min(lo, rs.matrix(r, c));
      hi = std::max(hi, rs.matrix(r, c));
    }
    if (rs.matrix.rows() == 0) lo = hi = 0.0;
    rs.scale.emplace_back(lo, hi);
    for (std::size_t r = 0; r < rs.matrix.rows(); ++r) {
      double& v = rs.matrix(r, c);
      v = hi > lo ? std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0) : 0.0;
    }
  }
  return rs;
}

void score_removals(FilterReport& report, std::span<const RowId> poison_ids) {
  const std::set<RowId> poisons(poison_ids.begin(), poison_ids.end());
  report.poisons_removed = 0;
  report.goodware_removed = 0;
  for (RowId id : report.removed_ids) {
    (poisons.contains(id) ? report.poisons_removed : report.goodware_removed) += 1;
  }
}

// --- Spectral signatures ---------------------------------------------------

PowerIterationResult top_right_singular_vector(const Matrix& a, std::size_t max_iterations,
                                               double tolerance) {
  const std::size_t k = a.cols();
  if (k == 0) throw DimensionError("top_right_singular_vector: matrix has no columns");
  // Gram matrix G = A^T A, k x k.
  std::vector<double> g(k * k, 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t i = 0; i < k; ++i) {
      if (row[i] == 0.0) continue;
      for (std::size_t j = i; j < k; ++j) g[i * k + j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) g[i * k + j] = g[j * k + i];
  }

  PowerIterationResult out;
  // Start from the Gram row with the largest norm; it has a nonzero
  // component along the top eigenvector unless G is zero.
  std::size_t start = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += g[i * k + j] * g[i * k + j];
    if (s > best) {
      best = s;
      start = i;
    }
  }
  std::vector<double> v(g.begin() + static_cast<std::ptrdiff_t>(start * k),
                        g.begin() + static_cast<std::ptrdiff_t>(start * k + k));
  auto normalize = [](std::vector<double>& x) {
    double n = 0.0;
    for (double e : x) n += e * e;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (double& e : x) e /= n;
    }
    return n;
  };
  if (normalize(v) == 0.0) {
    out.vector.assign(k, 0.0);
    out.vector[0] = 1.0;
    out.converged = true;
    return out;
  }
  std::vector<double> w(k);
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += g[i * k + j] * v[j];
      w[i] = s;
    }
    lambda = normalize(w);
    out.iterations = it + 1;
    double diff = 0.0;
    for (std::size_t i = 0; i < k; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
    v.swap(w);
    if (diff < tolerance) {
      out.converged = true;
      break;
    }
  }
  std::size_t pivot = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (std::abs(v[i]) > std::abs(v[pivot])) pivot = i;
  }
  if (v[pivot] < 0.0) {
    for (double& e : v) e = -e;
  }
  out.vector = std::move(v);
  out.singular_value = std::sqrt(std::max(lambda, 0.0));
  return out;
}

std::vector<double> spectral_scores(const Matrix& m) {
  const std::size_t n = m.rows(), k = m.cols();
  std::vector<double> mean(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) mean[c] += m(r, c);
  }
  for (double& x : mean) x /= static_cast<double>(n);
  Matrix centered(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) centered(r, c) = m(r, c) - mean[c];
  }
  const auto u = top_right_singular_vector(centered).vector;
  std::vector<double> scores(n);
  for (std::size_t r = 0; r < n; ++r) {
    double p = 0.0;
    for (std::size_t c = 0; c < k; ++c) p += centered(r, c) * u[c];
    scores[r] = p * p;
  }
  return scores;
}

FilterReport spectral_filter(const ReducedSpace& rs, double remove_fraction) {
  const std::size_t n = rs.matrix.rows();
  if (n < 2) throw InsufficientDataError("spectral_filter: needs at least 2 rows");
  if (!(remove_fraction >= 0.0 && remove_fraction <= 1.0)) {
    throw ConfigError("spectral_filter: remove_fraction must be in [0, 1]");
  }
  FilterReport report;
  report.defense_kind = "spectral";
  report.n_inspected = n;
  report.parameters["remove_fraction"] = remove_fraction;

  const auto scores = spectral_scores(rs.matrix);
  if (std::all_of(scores.begin(), scores.end(), [](double s) { return s == 0.0; })) {
    report.warnings.push_back(
        "all spectral scores are zero (identical rows); removing rows in index order");
  }
  // Guard against 0.15 * n landing a hair above an integer.
  const auto n_remove = static_cast<std::size_t>(
      std::ceil(remove_fraction * static_cast<double>(n) - 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t i = 0; i < std::min(n_remove, n); ++i) report.removed_ids.push_back(rs.ids[order[i]]);
  std::sort(report.removed_ids.begin(), report.removed_ids.end());
  return report;
}

// --- Retraining ------------------------------------------------------------

RetrainResult retrain_after_filter(const Dataset& train, FilterReport& report,
                                   const TrainConfig& cfg, const Dataset& xb) {
  const Dataset kept = train.without_ids(report.removed_ids);
  if (kept.count_label(kBenign) == 0 || kept.count_label(kMalware) == 0) {
    throw InsufficientDataError("filtering removed every row of one class (" +
                                std::to_string(kept.count_label(kBenign)) + " benign, " +
                                std::to_string(kept.count_label(kMalware)) + " malware left)");
  }
  RetrainResult out{shapdoor::train(kept, cfg), 0.0};
  out.acc_fb_xb = evaluate(out.model, xb).accuracy;
  report.post_defense_acc_fb_xb = out.acc_fb_xb;
  return out;
}

// --- Persistence -----------------------------------------------------------

std::string filter_report_to_json(const FilterReport& report) {
  json params = json::object();
  for (const auto& [k, v] : report.parameters) params[k] = v;
  json doc = {{"format", "shapdoor.filter_report"},
              {"version", 1},
              {"defense_kind", report.defense_kind},
              {"n_inspected", report.n_inspected},
              {"poisons_removed", report.poisons_removed},
              {"goodware_removed", report.goodware_removed},
              {"post_defense_acc_fb_xb", report.post_defense_acc_fb_xb
                                             ? json(*report.post_defense_acc_fb_xb)
                                             : json(nullptr)},
              {"parameters", params},
              {"warnings", report.warnings},
              {"removed_ids", report.removed_ids}};
  return doc.dump(2) + "\n";
}

FilterReport filter_report_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("filter report JSON: ") + e.what());
  }
  KeyChecker keys(doc, "filter report");
  if (keys.required<std::string>("format") != "shapdoor.filter_report") {
    throw ConfigError("filter report JSON: unexpected format tag");
  }
  if (keys.required<int>("version") != 1) throw ConfigError("filter report JSON: unsupported version");
  FilterReport r;
  r.defense_kind = keys.required<std::string>("defense_kind");
  r.n_inspected = keys.required<std::size_t>("n_inspected");
  r.poisons_removed = keys.required<std::size_t>("poisons_removed");
  r.goodware_removed = keys.required<std::size_t>("goodware_removed");
  const json& acc = keys.object("post_defense_acc_fb_xb");
  if (!acc.is_null()) r.post_defense_acc_fb_xb = acc.get<double>();
  r.parameters = keys.required<std::map<std::string, double>>("parameters");
  r.warnings = keys.required<std::vector<std::string>>("warnings");
  r.removed_ids = keys.required<std::vector<RowId>>("removed_ids");
  keys.finish();
  return r;
}

void save_filter_report(const FilterReport& report, const std::filesystem::path& path) {
  write_text_file(filter_report_to_json(report), path);
}

void write_mitigation_csv(std::span<const MitigationRow> rows, const std::filesystem::path& path) {
  std::string out =
      "victim,strategy,value_selector,defense,poison_fraction,trigger_size,trial,poisons_total,"
      "poisons_removed,"
      "goodware_removed,acc_fb_xb_before,acc_fb_xb_after\n";
  for (const auto& r : rows) {
    out += r.victim + ',' + r.strategy + ',' + r.value_selector + ',' + r.defense + ',' +
           json(r.poison_fraction).dump() + ',' + std::to_string(r.trigger_size) + ',' +
           std::to_string(r.trial) + ',' + std::to_string(r.poisons_total) + ',' +
           std::to_string(r.poisons_removed) + ',' + std::to_string(r.goodware_removed) + ',' +
           json(r.acc_fb_xb_before).dump() + ',' + json(r.acc_fb_xb_after).dump() + '\n';
  }
  write_text_file(out, path);
}

}  // namespace shapdoor
