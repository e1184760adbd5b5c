#include "shapdoor/explain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "shapdoor/rng.hpp"

namespace shapdoor {

MarginFunction margin_function(const Model& m) {
  return [&m](const Matrix& xs, std::span<double> out) { m.margins(xs, out); };
}

Background Background::uniform(Matrix rows) { return Background{std::move(rows), {}}; }

void Background::validate(std::size_t n_features) const {
  if (rows.rows() == 0) throw ConfigError("background must contain at least one row");
  if (rows.cols() != n_features) {
    throw DimensionError("background rows have " + std::to_string(rows.cols()) +
                         " features, model expects " + std::to_string(n_features));
  }
  if (!weights.empty()) {
    if (weights.size() != rows.rows()) throw DimensionError("background weight count mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("background weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("background weights must sum to 1");
  }
}

double Background::weight(std::size_t i) const {
  return weights.empty() ? 1.0 / static_cast<double>(rows.rows()) : weights[i];
}

std::vector<double> Background::mean() const {
  std::vector<double> mu(rows.cols(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double w = weight(i);
    auto r = rows.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) mu[j] += w * r[j];
  }
  return mu;
}

Background sample_background(const Dataset& ds, std::size_t size, std::uint64_t seed) {
  const auto benign = ds.rows_with_label(kBenign);
  if (benign.empty()) throw InsufficientDataError("sample_background: no benign rows");
  if (size == 0) throw ConfigError("background_size must be >= 1");
  Rng rng(seed, 0xb9);
  auto pick = rng.sample_without_replacement(benign.size(), size);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> rows;
  rows.reserve(pick.size());
  for (std::size_t k : pick) rows.push_back(benign[k]);
  return Background::uniform(ds.features().select_rows(rows));
}

std::string_view to_string(ExplainMethod method) {
  switch (method) {
    case ExplainMethod::exact: return "exact";
    case ExplainMethod::kernel: return "kernel";
    case ExplainMethod::linear: return "linear";
  }
  return "?";
}

ExplainMethod parse_explain_method(std::string_view text) {
  if (text == "exact") return ExplainMethod::exact;
  if (text == "kernel") return ExplainMethod::kernel;
  if (text == "linear") return ExplainMethod::linear;
  throw ConfigError("unknown explain method '" + std::string(text) + "'");
}

void ExplainerConfig::validate(std::size_t n_features) const {
  if (method == ExplainMethod::exact && n_features > kMaxExactFeatures) {
    throw ConfigError("exact Shapley values need at most " + std::to_string(kMaxExactFeatures) +
                      " features, model has " + std::to_string(n_features));
  }
  if (method == ExplainMethod::kernel) {
    if (n_features > 63) throw ConfigError("kernel explainer supports at most 63 features");
    if (n_coalition_samples < 2 * n_features) {
      throw ConfigError("kernel explainer needs n_coalition_samples >= 2 * n_features (" +
                        std::to_string(2 * n_features) + ")");
    }
  }
  if (background_size == 0) throw ConfigError("background_size must be >= 1");
}

ShapMatrix ShapMatrix::select_rows(std::span<const std::size_t> rows) const {
  ShapMatrix out;
  out.values = values.select_rows(rows);
  out.base_value = base_value;
  out.sample_ids.reserve(rows.size());
  for (std::size_t r : rows) out.sample_ids.push_back(sample_ids.at(r));
  return out;
}

namespace {

constexpr std::size_t kEvalChunkRows = 8192;

// Evaluates v(mask) for a list of coalition masks, batching the hybrid rows.
class CoalitionEvaluator {
 public:
  CoalitionEvaluator(const MarginFunction& f, std::span<const double> x, const Background& bg)
      : f_(f), x_(x), bg_(bg) {}

  std::vector<double> values(std::span<const std::uint64_t> masks) const {
    const std::size_t b = bg_.rows.rows();
    const std::size_t m = x_.size();
    std::vector<double> out(masks.size(), 0.0);
    const std::size_t per_chunk = std::max<std::size_t>(1, kEvalChunkRows / b);
    Matrix hybrid;
    std::vector<double> margins;
    for (std::size_t start = 0; start < masks.size(); start += per_chunk) {
      const std::size_t end = std::min(masks.size(), start + per_chunk);
      hybrid = Matrix((end - start) * b, m);
      for (std::size_t k = start; k < end; ++k) {
        const std::uint64_t mask = masks[k];
        for (std::size_t r = 0; r < b; ++r) {
          auto dst = hybrid.row((k - start) * b + r);
          auto src = bg_.rows.row(r);
          for (std::size_t j = 0; j < m; ++j) dst[j] = (mask >> j) & 1u ? x_[j] : src[j];
        }
      }
      margins.assign(hybrid.rows(), 0.0);
      f_(hybrid, margins);
      for (std::size_t k = start; k < end; ++k) {
        double v = 0.0;
        for (std::size_t r = 0; r < b; ++r) v += bg_.weight(r) * margins[(k - start) * b + r];
        out[k] = v;
      }
    }
    return out;
  }

 private:
  const MarginFunction& f_;
  std::span<const double> x_;
  const Background& bg_;
};

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return r;
}

// Shapley kernel weight of a single coalition of size s among m players.
double kernel_weight(std::size_t m, std::size_t s) {
  return static_cast<double>(m - 1) /
         (binomial(m, s) * static_cast<double>(s) * static_cast<double>(m - s));
}

template <typename Fn>
void for_each_subset_of_size(std::size_t m, std::size_t s, Fn&& fn) {
  if (s == 0 || s > m) return;
  std::uint64_t mask = (std::uint64_t{1} << s) - 1;
  const std::uint64_t limit = m == 64 ? 0 : (std::uint64_t{1} << m);
  while (mask < limit || (m == 64 && mask != 0)) {
    fn(mask);
    // Gosper's hack: next mask with the same popcount.
    const std::uint64_t c = mask & (~mask + 1);
    const std::uint64_t r = mask + c;
    if (r == 0) break;
    mask = (((r ^ mask) >> 2) / c) | r;
  }
}

struct CoalitionSet {
  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
  std::map<std::uint64_t, std::size_t> index;

  void add(std::uint64_t mask, double w) {
    auto [it, inserted] = index.try_emplace(mask, masks.size());
    if (inserted) {
      masks.push_back(mask);
      weights.push_back(w);
    } else {
      weights[it->second] += w;
    }
  }
};

CoalitionSet build_coalitions(std::size_t m, std::size_t budget, Rng& rng) {
  CoalitionSet set;
  const std::uint64_t full = m == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
  const double n_proper = std::ldexp(1.0, static_cast<int>(m)) - 2.0;
  if (static_cast<double>(budget) >= n_proper) {
    for (std::size_t s = 1; s < m; ++s) {
      const double w = kernel_weight(m, s);
      for_each_subset_of_size(m, s, [&](std::uint64_t mask) { set.add(mask, w); });
    }
    return set;
  }

  // Size-level kernel mass; sizes s and m - s are handled together.
  const std::size_t n_sizes = m / 2;  // ceil((m - 1) / 2)
  const std::size_t n_paired = (m - 1) / 2;
  std::vector<double> size_mass(n_sizes);
  for (std::size_t i = 0; i < n_sizes; ++i) {
    const std::size_t s = i + 1;
    size_mass[i] = static_cast<double>(m - 1) / (static_cast<double>(s) * static_cast<double>(m - s));
    if (i < n_paired) size_mass[i] *= 2.0;
  }
  const double total_mass = std::accumulate(size_mass.begin(), size_mass.end(), 0.0);
  for (double& w : size_mass) w /= total_mass;

  std::size_t remaining = budget;
  std::size_t complete = 0;
  std::vector<double> left = size_mass;
  for (std::size_t i = 0; i < n_sizes; ++i) {
    const std::size_t s = i + 1;
    const bool paired = i < n_paired;
    const double n_subsets = binomial(m, s) * (paired ? 2.0 : 1.0);
    const double left_total = std::accumulate(left.begin() + static_cast<std::ptrdiff_t>(i), left.end(), 0.0);
    if (left_total <= 0.0) break;
    const double share = left[i] / left_total * static_cast<double>(remaining);
    if (share + 1e-8 < n_subsets) break;
    const double w = size_mass[i] / n_subsets;
    for_each_subset_of_size(m, s, [&](std::uint64_t mask) {
      set.add(mask, w);
      if (paired) set.add(full & ~mask, w);
    });
    remaining -= static_cast<std::size_t>(n_subsets);
    left[i] = 0.0;
    ++complete;
  }

  if (complete < n_sizes && remaining > 0) {
    double left_total = 0.0;
    for (std::size_t i = complete; i < n_sizes; ++i) left_total += left[i];
    CoalitionSet sampled;
    std::size_t drawn = 0;
    while (drawn < remaining) {
      double u = rng.uniform() * left_total;
      std::size_t i = complete;
      for (; i + 1 < n_sizes; ++i) {
        u -= left[i];
        if (u < 0.0) break;
      }
      const std::size_t s = i + 1;
      std::uint64_t mask = 0;
      for (std::size_t j : rng.sample_without_replacement(m, s)) mask |= std::uint64_t{1} << j;
      sampled.add(mask, 1.0);
      ++drawn;
      if (drawn < remaining) {
        sampled.add(full & ~mask, 1.0);
        ++drawn;
      }
    }
    const double sampled_total =
        std::accumulate(sampled.weights.begin(), sampled.weights.end(), 0.0);
    for (std::size_t k = 0; k < sampled.masks.size(); ++k) {
      set.add(sampled.masks[k], sampled.weights[k] * left_total / sampled_total);
    }
  }
  return set;
}

}  // namespace

Attribution exact_shapley(const MarginFunction& f, std::span<const double> x,
                          const Background& bg) {
  const std::size_t m = x.size();
  if (m > kMaxExactFeatures) {
    throw ConfigError("exact_shapley supports at most " + std::to_string(kMaxExactFeatures) +
                      " features, got " + std::to_string(m));
  }
  bg.validate(m);
  const std::size_t n_subsets = std::size_t{1} << m;
  std::vector<std::uint64_t> masks(n_subsets);
  std::iota(masks.begin(), masks.end(), std::uint64_t{0});
  const std::vector<double> v = CoalitionEvaluator(f, x, bg).values(masks);

  // weight(s) = s! (m - s - 1)! / m! = 1 / (m * C(m - 1, s))
  std::vector<double> weight(m);
  for (std::size_t s = 0; s < m; ++s) {
    weight[s] = 1.0 / (static_cast<double>(m) * binomial(m - 1, s));
  }
  Attribution out;
  out.phi.assign(m, 0.0);
  out.base = v[0];
  for (std::size_t j = 0; j < m; ++j) {
    const std::uint64_t bit = std::uint64_t{1} << j;
    double acc = 0.0;
    for (std::uint64_t s = 0; s < n_subsets; ++s) {
      if (s & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    out.phi[j] = acc;
  }
  return out;
}

Attribution exact_shapley(const Model& m, std::span<const double> x, const Background& bg) {
  if (x.size() != m.n_features()) throw DimensionError("exact_shapley: dimension mismatch");
  return exact_shapley(margin_function(m), x, bg);
}

Attribution kernel_shap(const MarginFunction& f, std::span<const double> x, const Background& bg,
                        const ExplainerConfig& cfg) {
  const std::size_t m = x.size();
  if (m == 0) throw DimensionError("kernel_shap: empty feature vector");
  ExplainerConfig checked = cfg;
  checked.method = ExplainMethod::kernel;
  checked.validate(m);
  bg.validate(m);

  const CoalitionEvaluator eval(f, x, bg);
  const std::uint64_t full = m == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
  const std::uint64_t ends[] = {0, full};
  const auto end_values = eval.values(ends);
  Attribution out;
  out.base = end_values[0];
  const double total = end_values[1] - end_values[0];
  out.phi.assign(m, 0.0);
  if (m == 1) {
    out.phi[0] = total;
    return out;
  }

  Rng rng(cfg.seed, 0x54a9);
  const CoalitionSet coalitions = build_coalitions(m, cfg.n_coalition_samples, rng);
  const std::vector<double> v = eval.values(coalitions.masks);

  // Eliminate the last feature through the efficiency constraint
  // sum(phi) = total, then solve the weighted least-squares problem.
  const auto k = static_cast<Eigen::Index>(coalitions.masks.size());
  const auto p = static_cast<Eigen::Index>(m - 1);
  Eigen::MatrixXd design(k, p);
  Eigen::VectorXd target(k);
  const std::uint64_t last = std::uint64_t{1} << (m - 1);
  for (Eigen::Index r = 0; r < k; ++r) {
    const std::uint64_t mask = coalitions.masks[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(coalitions.weights[static_cast<std::size_t>(r)]);
    const double z_last = (mask & last) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double z = (mask >> j) & 1u ? 1.0 : 0.0;
      design(r, j) = sw * (z - z_last);
    }
    target(r) = sw * (v[static_cast<std::size_t>(r)] - out.base - z_last * total);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) {
    const auto diag = qr.matrixR().diagonal().cwiseAbs();
    const double cond = diag.minCoeff() > 0.0 ? diag.maxCoeff() / diag.minCoeff()
                                              : std::numeric_limits<double>::infinity();
    std::ostringstream msg;
    msg << "kernel_shap: singular regression system (rank " << qr.rank() << " of " << p
        << ", " << k << " distinct coalitions, condition estimate " << cond
        << "); increase n_coalition_samples";
    throw NumericalError(msg.str());
  }
  const Eigen::VectorXd beta = qr.solve(target);
  double rest = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    out.phi[static_cast<std::size_t>(j)] = beta(j);
    rest += beta(j);
  }
  out.phi[m - 1] = total - rest;
  return out;
}

Attribution kernel_shap(const Model& m, std::span<const double> x, const Background& bg,
                        const ExplainerConfig& cfg) {
  if (x.size() != m.n_features()) throw DimensionError("kernel_shap: dimension mismatch");
  return kernel_shap(margin_function(m), x, bg, cfg);
}

Attribution linear_shap(std::span<const double> weights, double bias, std::span<const double> x,
                        const Background& bg) {
  if (weights.size() != x.size()) {
    throw DimensionError("linear_shap: " + std::to_string(weights.size()) + " weights but " +
                         std::to_string(x.size()) + " features");
  }
  bg.validate(x.size());
  const auto mu = bg.mean();
  Attribution out;
  out.phi.resize(x.size());
  out.base = bias;
  for (std::size_t j = 0; j < x.size(); ++j) {
    out.phi[j] = weights[j] * (x[j] - mu[j]);
    out.base += weights[j] * mu[j];
  }
  return out;
}

ShapMatrix explain_dataset(const Model& m, const Dataset& ds, const Background& bg,
                           const ExplainerConfig& cfg) {
  if (ds.n_features() != m.n_features()) throw DimensionError("explain_dataset: dimension mismatch");
  cfg.validate(m.n_features());
  bg.validate(m.n_features());
  const LinearModel* lin = m.linear();
  if (cfg.method == ExplainMethod::linear && lin == nullptr) {
    throw ConfigError("linear explainer requires a logistic_regression or linear_svm model");
  }

  ShapMatrix out;
  out.values = Matrix(ds.n_rows(), ds.n_features());
  out.sample_ids = ds.ids();
  const MarginFunction f = margin_function(m);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    Attribution a;
    switch (cfg.method) {
      case ExplainMethod::exact: a = exact_shapley(f, ds.row(i), bg); break;
      case ExplainMethod::linear: a = linear_shap(lin->weights, lin->bias, ds.row(i), bg); break;
      case ExplainMethod::kernel: {
        ExplainerConfig row_cfg = cfg;
        row_cfg.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(i)});
        a = kernel_shap(f, ds.row(i), bg, row_cfg);
        break;
      }
    }
    std::copy(a.phi.begin(), a.phi.end(), out.values.row(i).begin());
    out.base_value = a.base;
  }
  if (ds.n_rows() == 0) {
    const std::uint64_t none = 0;
    out.base_value = CoalitionEvaluator(f, bg.rows.row(0), bg).values({&none, 1})[0];
  }
  return out;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError("SHAP CSV: bad number '" + text + "' " + where);
  }
}

}  // namespace

void save_shap_csv(const ShapMatrix& shap, const std::vector<FeatureSpec>& specs,
                   const std::filesystem::path& path) {
  if (specs.size() != shap.n_features()) throw DimensionError("save_shap_csv: spec count mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "base_value," << format_double(shap.base_value) << '\n';
  out << "id";
  for (const auto& s : specs) out << ',' << s.name;
  out << '\n';
  for (std::size_t i = 0; i < shap.n_samples(); ++i) {
    out << shap.sample_ids[i];
    for (double v : shap.values.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ShapMatrix load_shap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("SHAP CSV: empty file");
  auto first = split_commas(line);
  if (first.size() != 2 || first[0] != "base_value") {
    throw DataError("SHAP CSV: first record must be 'base_value,<value>'");
  }
  ShapMatrix shap;
  shap.base_value = parse_double(first[1], "in base_value record");
  if (!std::getline(in, line)) throw DataError("SHAP CSV: missing header");
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "id") throw DataError("SHAP CSV: header must start with 'id'");
  const std::size_t m = header.size() - 1;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = split_commas(line);
    if (cells.size() != m + 1) {
      throw DataError("SHAP CSV: row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " fields, expected " + std::to_string(m + 1));
    }
    shap.sample_ids.push_back(
        static_cast<RowId>(parse_double(cells[0], "in id column, row " + std::to_string(row))));
    for (std::size_t j = 1; j <= m; ++j) {
      values.push_back(parse_double(cells[j], "in column '" + header[j] + "', row " + std::to_string(row)));
    }
  }
  shap.values = Matrix(row, m, std::move(values));
  return shap;
}

}  // namespace shapdoor
