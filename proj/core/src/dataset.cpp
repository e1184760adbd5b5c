#include "shapdoor/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json_util.hpp"
#include "shapdoor/rng.hpp"

namespace shapdoor {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::real: return "real";
    case FeatureKind::integer: return "integer";
    case FeatureKind::boolean: return "boolean";
  }
  return "?";
}

std::string_view to_string(Constraint constraint) {
  switch (constraint) {
    case Constraint::free: return "free";
    case Constraint::additive_only: return "additive_only";
    case Constraint::fixed: return "fixed";
  }
  return "?";
}

std::string_view to_string(ValueDomain domain) {
  switch (domain) {
    case ValueDomain::any: return "any";
    case ValueDomain::observed_benign_only: return "observed_benign_only";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "real") return FeatureKind::real;
  if (text == "integer") return FeatureKind::integer;
  if (text == "boolean") return FeatureKind::boolean;
  throw ConfigError("unknown feature kind '" + std::string(text) + "'");
}

Constraint parse_constraint(std::string_view text) {
  if (text == "free") return Constraint::free;
  if (text == "additive_only") return Constraint::additive_only;
  if (text == "fixed") return Constraint::fixed;
  throw ConfigError("unknown constraint '" + std::string(text) + "'");
}

ValueDomain parse_value_domain(std::string_view text) {
  if (text == "any") return ValueDomain::any;
  if (text == "observed_benign_only") return ValueDomain::observed_benign_only;
  throw ConfigError("unknown value domain '" + std::string(text) + "'");
}

void FeatureSpec::validate() const {
  if (constraint == Constraint::fixed && modifiable) {
    throw ConfigError("feature '" + name + "': constraint 'fixed' requires modifiable = false");
  }
}

namespace {

bool is_integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check_value(double v, const FeatureSpec& spec, std::size_t row_number) {
  const auto where = [&] {
    return " in column '" + spec.name + "', row " + std::to_string(row_number);
  };
  if (!std::isfinite(v)) throw DataError("non-finite value" + where());
  if (spec.kind == FeatureKind::integer && !is_integral(v)) {
    throw DataError("non-integral value " + format_double(v) + where() +
                    " (declared integer)");
  }
  if (spec.kind == FeatureKind::boolean && v != 0.0 && v != 1.0) {
    throw DataError("value " + format_double(v) + where() + " is not boolean (0 or 1)");
  }
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels, std::vector<FeatureSpec> specs,
                 std::vector<RowId> ids)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      specs_(std::move(specs)),
      ids_(std::move(ids)) {
  validate();
}

void Dataset::validate() const {
  if (labels_.size() != features_.rows()) {
    throw DimensionError("dataset has " + std::to_string(features_.rows()) + " rows but " +
                         std::to_string(labels_.size()) + " labels");
  }
  if (ids_.size() != features_.rows()) {
    throw DimensionError("dataset has " + std::to_string(features_.rows()) + " rows but " +
                         std::to_string(ids_.size()) + " ids");
  }
  if (specs_.size() != features_.cols()) {
    throw DimensionError("dataset has " + std::to_string(features_.cols()) +
                         " feature columns but " + std::to_string(specs_.size()) + " specs");
  }
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    if (specs_[j].index != j) {
      throw ConfigError("feature spec '" + specs_[j].name + "' has index " +
                        std::to_string(specs_[j].index) + ", expected " + std::to_string(j));
    }
    specs_[j].validate();
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != kBenign && labels_[i] != kMalware) {
      throw DataError("label must be 0 or 1, got " + std::to_string(labels_[i]) + " at row " +
                      std::to_string(i + 1));
    }
    auto r = features_.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) check_value(r[j], specs_[j], i + 1);
  }
  std::unordered_set<RowId> seen;
  seen.reserve(ids_.size());
  for (RowId id : ids_) {
    if (!seen.insert(id).second) throw DataError("duplicate row id " + std::to_string(id));
  }
}

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

std::vector<std::size_t> Dataset::rows_with_label(int label) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) rows.push_back(i);
  }
  return rows;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<int> labels;
  std::vector<RowId> ids;
  labels.reserve(rows.size());
  ids.reserve(rows.size());
  for (std::size_t r : rows) {
    labels.push_back(labels_.at(r));
    ids.push_back(ids_.at(r));
  }
  Dataset out;
  out.features_ = features_.select_rows(rows);
  out.labels_ = std::move(labels);
  out.specs_ = specs_;
  out.ids_ = std::move(ids);
  return out;
}

Dataset Dataset::with_rows_replaced(std::span<const std::size_t> rows,
                                    const Matrix& values) const {
  if (values.rows() != rows.size() || values.cols() != n_features()) {
    throw DimensionError("with_rows_replaced: replacement matrix has wrong shape");
  }
  Matrix features = features_;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = values.row(k);
    std::copy(src.begin(), src.end(), features.row(rows[k]).begin());
  }
  return Dataset(std::move(features), labels_, specs_, ids_);
}

Dataset Dataset::without_ids(std::span<const RowId> ids) const {
  const std::unordered_set<RowId> drop(ids.begin(), ids.end());
  std::vector<std::size_t> keep;
  keep.reserve(n_rows());
  for (std::size_t i = 0; i < n_rows(); ++i) {
    if (!drop.contains(ids_[i])) keep.push_back(i);
  }
  return subset(keep);
}

std::vector<FeatureSpec> default_specs(std::size_t n_features) {
  std::vector<FeatureSpec> specs(n_features);
  for (std::size_t j = 0; j < n_features; ++j) {
    specs[j].index = j;
    specs[j].name = "f" + std::to_string(j);
  }
  return specs;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& csv_path, const std::filesystem::path& spec_path) {
  return load_csv(csv_path, load_feature_specs(spec_path));
}

Dataset load_csv(const std::filesystem::path& csv_path, std::vector<FeatureSpec> specs) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open CSV file " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("malformed CSV: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  std::optional<std::size_t> label_col, id_col;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") {
      if (label_col) throw DataError("malformed CSV: duplicate 'label' column");
      label_col = c;
    } else if (header[c] == "id") {
      if (id_col) throw DataError("malformed CSV: duplicate 'id' column");
      id_col = c;
    } else {
      feature_cols.push_back(c);
    }
  }
  if (!label_col) throw DataError("malformed CSV: no 'label' column in header");

  if (specs.size() != feature_cols.size()) {
    throw DataError("spec/column mismatch: spec describes " + std::to_string(specs.size()) +
                    " features but CSV has " + std::to_string(feature_cols.size()) +
                    " feature columns");
  }
  for (std::size_t j = 0; j < specs.size(); ++j) {
    specs[j].index = j;
    if (!specs[j].name.empty() && specs[j].name != header[feature_cols[j]]) {
      throw DataError("spec/column mismatch at position " + std::to_string(j) + ": spec names '" +
                      specs[j].name + "' but CSV column is '" + header[feature_cols[j]] + "'");
    }
    if (specs[j].name.empty()) specs[j].name = header[feature_cols[j]];
    specs[j].validate();
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<RowId> ids;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("malformed CSV: row " + std::to_string(row_number) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    const auto label = parse_number(fields[*label_col]);
    if (!label) {
      throw DataError("malformed CSV: non-numeric label '" + fields[*label_col] + "' at row " +
                      std::to_string(row_number));
    }
    if (*label != 0.0 && *label != 1.0) {
      throw DataError("label outside {0,1}: '" + trim(fields[*label_col]) + "' at row " +
                      std::to_string(row_number));
    }
    labels.push_back(static_cast<int>(*label));
    if (id_col) {
      const auto id = parse_number(fields[*id_col]);
      if (!id || !is_integral(*id)) {
        throw DataError("malformed CSV: id '" + fields[*id_col] + "' at row " +
                        std::to_string(row_number) + " is not an integer");
      }
      ids.push_back(static_cast<RowId>(*id));
    } else {
      ids.push_back(static_cast<RowId>(row_number - 1));
    }
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const auto& text = fields[feature_cols[j]];
      const auto v = parse_number(text);
      if (!v) {
        throw DataError("malformed CSV: non-numeric value '" + text + "' in column '" +
                        specs[j].name + "', row " + std::to_string(row_number));
      }
      check_value(*v, specs[j], row_number);
      values.push_back(*v);
    }
  }

  Matrix x(labels.size(), specs.size(), std::move(values));
  return Dataset(std::move(x), std::move(labels), std::move(specs), std::move(ids));
}

void save_csv(const Dataset& ds, const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write CSV file " + csv_path.string());
  out << "id";
  for (const auto& s : ds.specs()) out << ',' << s.name;
  out << ",label\n";
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    out << ds.id(i);
    for (double v : ds.row(i)) out << ',' << format_double(v);
    out << ',' << ds.label(i) << '\n';
  }
  if (!out) throw IoError("failed writing CSV file " + csv_path.string());
}

std::vector<FeatureSpec> load_feature_specs(const std::filesystem::path& spec_path) {
  const json doc = read_json_file(spec_path);
  if (!doc.is_array()) throw ConfigError("feature spec file must contain a JSON array");
  std::vector<FeatureSpec> specs;
  for (std::size_t j = 0; j < doc.size(); ++j) {
    const auto& obj = doc[j];
    KeyChecker keys(obj, "feature spec #" + std::to_string(j));
    FeatureSpec s;
    s.index = j;
    s.name = keys.required<std::string>("name");
    s.kind = parse_feature_kind(keys.optional<std::string>("kind", "real"));
    s.modifiable = keys.optional<bool>("modifiable", true);
    s.constraint = parse_constraint(keys.optional<std::string>("constraint", "free"));
    s.value_domain =
        parse_value_domain(keys.optional<std::string>("value_domain", "observed_benign_only"));
    keys.finish();
    s.validate();
    specs.push_back(std::move(s));
  }
  return specs;
}

void save_feature_specs(const std::vector<FeatureSpec>& specs,
                        const std::filesystem::path& spec_path) {
  json doc = json::array();
  for (const auto& s : specs) {
    doc.push_back({{"name", s.name},
                   {"kind", std::string(to_string(s.kind))},
                   {"modifiable", s.modifiable},
                   {"constraint", std::string(to_string(s.constraint))},
                   {"value_domain", std::string(to_string(s.value_domain))}});
  }
  write_json_file(doc, spec_path);
}

// --- Splitting -------------------------------------------------------------

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.count_label(kBenign) == 0 || ds.count_label(kMalware) == 0) {
    throw DataError("split requires both classes to be present");
  }
  Rng rng(spec.seed, 0x5b117);
  std::vector<std::size_t> train_rows, test_rows;
  const auto take = [&](std::vector<std::size_t> rows) {
    rng.shuffle(rows);
    const auto n_train =
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(rows.size())));
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + n_train);
    test_rows.insert(test_rows.end(), rows.begin() + n_train, rows.end());
  };
  if (spec.stratified) {
    take(ds.rows_with_label(kBenign));
    take(ds.rows_with_label(kMalware));
  } else {
    std::vector<std::size_t> all(ds.n_rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(std::move(all));
  }
  if (train_rows.empty() || test_rows.empty()) {
    throw DataError("degenerate split: one side is empty");
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {ds.subset(train_rows), ds.subset(test_rows)};
}

Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
  if (fraction == 1.0) return ds;
  Rng rng(seed, 0x5ab5);
  std::vector<std::size_t> keep;
  for (int label : {kBenign, kMalware}) {
    auto rows = ds.rows_with_label(label);
    if (rows.empty()) continue;
    rng.shuffle(rows);
    auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
    n = std::clamp<std::size_t>(n, 1, rows.size());
    keep.insert(keep.end(), rows.begin(), rows.begin() + n);
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

// --- Value tables ----------------------------------------------------------

double quantize_value(double value, FeatureKind kind) {
  double q = value;
  if (kind == FeatureKind::real) q = std::round(value * 1e6) / 1e6;
  return q == 0.0 ? 0.0 : q;
}

BenignValueTable benign_value_table(const Dataset& ds) {
  const auto benign = ds.rows_with_label(kBenign);
  if (benign.empty()) throw InsufficientDataError("benign_value_table: dataset has no benign rows");
  BenignValueTable table(ds.n_features());
  for (std::size_t r : benign) {
    auto row = ds.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) {
      ++table[j][quantize_value(row[j], ds.specs()[j].kind)];
    }
  }
  return table;
}

// --- Constraint profiles ---------------------------------------------------

ConstraintProfile ConstraintProfile::from_specs(const std::vector<FeatureSpec>& specs,
                                                std::string name) {
  ConstraintProfile p;
  p.name = std::move(name);
  p.features.reserve(specs.size());
  for (const auto& s : specs) p.features.push_back({s.modifiable, s.constraint, s.value_domain});
  return p;
}

std::vector<std::size_t> ConstraintProfile::modifiable_features() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (is_modifiable(j)) out.push_back(j);
  }
  return out;
}

namespace {

FeatureConstraint parse_feature_constraint(KeyChecker& keys, FeatureConstraint base) {
  base.modifiable = keys.optional<bool>("modifiable", base.modifiable);
  if (keys.has("constraint")) base.constraint = parse_constraint(keys.required<std::string>("constraint"));
  if (keys.has("value_domain")) {
    base.value_domain = parse_value_domain(keys.required<std::string>("value_domain"));
  }
  if (base.constraint == Constraint::fixed && base.modifiable) {
    throw ConfigError(keys.context() + ": constraint 'fixed' requires modifiable = false");
  }
  return base;
}

}  // namespace

ConstraintProfile parse_constraint_profile(std::string_view json_text,
                                           const std::vector<FeatureSpec>& specs) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("constraint profile: ") + e.what());
  }
  KeyChecker top(doc, "constraint profile");
  ConstraintProfile profile = ConstraintProfile::from_specs(specs);
  profile.name = top.required<std::string>("name");

  if (top.has("default")) {
    KeyChecker def(top.object("default"), "constraint profile default");
    FeatureConstraint base{};
    base = parse_feature_constraint(def, base);
    def.finish();
    for (auto& f : profile.features) f = base;
  }
  if (top.has("features")) {
    const json& list = top.object("features");
    if (!list.is_array()) throw ConfigError("constraint profile: 'features' must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      KeyChecker entry(list[k], "constraint profile feature #" + std::to_string(k));
      std::size_t index = 0;
      if (entry.has("index")) {
        index = entry.required<std::size_t>("index");
        if (entry.has("name")) {
          const auto name = entry.required<std::string>("name");
          if (index >= specs.size() || specs[index].name != name) {
            throw ConfigError("constraint profile: feature '" + name + "' is not at index " +
                              std::to_string(index));
          }
        }
      } else {
        const auto name = entry.required<std::string>("name");
        auto it = std::find_if(specs.begin(), specs.end(),
                               [&](const FeatureSpec& s) { return s.name == name; });
        if (it == specs.end()) {
          throw ConfigError("constraint profile: unknown feature '" + name + "'");
        }
        index = static_cast<std::size_t>(it - specs.begin());
      }
      if (index >= specs.size()) {
        throw ConfigError("constraint profile: feature index " + std::to_string(index) +
                          " out of range");
      }
      FeatureConstraint fc = profile.features[index];
      if (!entry.has("modifiable")) fc.modifiable = true;
      if (!entry.has("constraint") && fc.constraint == Constraint::fixed) {
        fc.constraint = Constraint::free;
      }
      profile.features[index] = parse_feature_constraint(entry, fc);
      entry.finish();
    }
  }
  top.finish();
  return profile;
}

ConstraintProfile load_constraint_profile(const std::filesystem::path& path,
                                          const std::vector<FeatureSpec>& specs) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open constraint profile " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_constraint_profile(buf.str(), specs);
}

}  // namespace shapdoor
