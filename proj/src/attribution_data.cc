#include "xlint/attribution_data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "xlint/error.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

ExplanationTable::ExplanationTable(std::vector<FeatureMeta> features,
                                   double base_value, std::vector<Row> rows,
                                   const TableOptions& options)
    : features_(std::move(features)),
      base_value_(base_value),
      rows_(std::move(rows)) {
  if (features_.empty()) {
    throw Error(ErrorCode::kMalformedInput, "table declares no features");
  }
  if (!std::isfinite(base_value_)) {
    throw Error(ErrorCode::kMalformedInput, "base_value is not finite");
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& name = features_[i].name;
    if (name.empty()) {
      throw Error(ErrorCode::kMalformedInput, "empty feature name");
    }
    if (!index_.emplace(name, i).second) {
      throw Error(ErrorCode::kMalformedInput, "duplicate feature '" + name + "'");
    }
  }
  if (rows_.empty()) throw Error(ErrorCode::kEmptyTable, "table has no rows");

  std::unordered_set<std::string> ids;
  for (const Row& row : rows_) {
    if (row.id.empty()) {
      throw Error(ErrorCode::kMalformedInput, "empty row id");
    }
    if (!ids.insert(row.id).second) {
      throw Error(ErrorCode::kDuplicateRowId, "row id '" + row.id + "' repeated");
    }
    if (row.values.size() != features_.size() ||
        row.attributions.size() != features_.size()) {
      throw Error(ErrorCode::kMalformedInput,
                  "row '" + row.id + "' does not cover every feature");
    }
    for (std::size_t i = 0; i < features_.size(); ++i) {
      const bool numeric = std::holds_alternative<double>(row.values[i]);
      if (numeric != (features_[i].kind == FeatureKind::kQuantitative)) {
        throw Error(ErrorCode::kMalformedInput,
                    "row '" + row.id + "' has a value of the wrong kind for '" +
                        features_[i].name + "'");
      }
      if (numeric && !std::isfinite(std::get<double>(row.values[i]))) {
        throw Error(ErrorCode::kMalformedInput, "non-finite value in row '" + row.id + "'");
      }
      if (!std::isfinite(row.attributions[i])) {
        throw Error(ErrorCode::kMalformedInput,
                    "non-finite attribution in row '" + row.id + "'");
      }
    }
    if (!std::isfinite(row.prediction)) {
      throw Error(ErrorCode::kMalformedInput, "non-finite prediction in row '" + row.id + "'");
    }
    double total = base_value_;
    for (double a : row.attributions) total += a;
    const double eps = options.efficiency_eps_scale * (1 + std::fabs(row.prediction));
    if (std::fabs(total - row.prediction) > eps) {
      warnings_.push_back("row '" + row.id + "': base_value + sum(attributions) = " +
                          FormatNumber(total) + " differs from prediction " +
                          FormatNumber(row.prediction));
    }
  }
}

std::optional<std::size_t> ExplanationTable::FeatureIndex(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const FeatureMeta& ExplanationTable::Feature(std::string_view name) const {
  auto idx = FeatureIndex(name);
  if (!idx) {
    throw Error(ErrorCode::kUnknownFeature, "no feature '" + std::string(name) + "'");
  }
  return features_[*idx];
}

// ---------------------------------------------------------------------------
// CSV

namespace {

// Splits one CSV record. Quoted fields may contain separators, doubled quotes
// and newlines; `pos` advances past the record terminator.
std::optional<std::vector<std::string>> NextRecord(const std::string& text,
                                                   std::size_t& pos,
                                                   std::vector<bool>* quoted) {
  if (pos >= text.size()) return std::nullopt;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  if (quoted) quoted->clear();
  while (pos < text.size()) {
    char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field += '"';
          pos += 2;
          continue;
        }
        in_quotes = false;
        ++pos;
        continue;
      }
      field += c;
      ++pos;
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      was_quoted = true;
      ++pos;
      continue;
    }
    if (c == ',') {
      fields.push_back(std::move(field));
      if (quoted) quoted->push_back(was_quoted);
      field.clear();
      was_quoted = false;
      ++pos;
      continue;
    }
    if (c == '\r' || c == '\n') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    }
    field += c;
    ++pos;
  }
  if (in_quotes) throw Error(ErrorCode::kMalformedInput, "unterminated quoted CSV field");
  fields.push_back(std::move(field));
  if (quoted) quoted->push_back(was_quoted);
  return fields;
}

bool IsBlank(const std::vector<std::string>& record) {
  return record.size() == 1 && Trim(record[0]).empty();
}

double RequireNumber(std::string_view cell, const std::string& what) {
  auto v = ParseNumber(Trim(cell));
  if (!v) {
    throw Error(ErrorCode::kMalformedInput,
                what + " is not a number: '" + std::string(cell) + "'");
  }
  return *v;
}

ExplanationTable LoadCsv(const std::string& text, const TableOptions& options) {
  std::size_t pos = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;

  double base_value = 0;
  std::map<std::string, std::map<std::string, std::string>> feature_meta;
  std::optional<std::vector<std::string>> header;
  while (auto rec = NextRecord(text, pos, nullptr)) {
    if (IsBlank(*rec)) continue;
    std::string_view first = Trim((*rec)[0]);
    if (!first.empty() && first.front() == '#') {
      // Metadata line; a comma inside it would have split the record, so
      // re-join before interpreting.
      std::string line;
      for (std::size_t i = 0; i < rec->size(); ++i) line += (i ? "," : "") + (*rec)[i];
      std::string_view meta = Trim(std::string_view(line).substr(line.find('#') + 1));
      constexpr std::string_view kKey = "base_value=";
      if (meta.substr(0, kKey.size()) == kKey) {
        base_value = RequireNumber(meta.substr(kKey.size()), "base_value");
      }
      // Per-feature metadata: "# unit:<name>=<text>", "# description:<name>=...",
      // "# kind:<name>=categorical|quantitative".
      for (std::string_view key : {"unit:", "description:", "kind:"}) {
        const auto eq = meta.find('=');
        if (meta.substr(0, key.size()) != key || eq == std::string_view::npos) continue;
        const std::string name(Trim(meta.substr(key.size(), eq - key.size())));
        feature_meta[name][std::string(key.substr(0, key.size() - 1))] =
            std::string(Trim(meta.substr(eq + 1)));
      }
      continue;
    }
    header = std::move(rec);
    break;
  }
  if (!header) throw Error(ErrorCode::kEmptyTable, "CSV has no header");

  std::optional<std::size_t> id_col, pred_col;
  std::vector<std::string> value_names, attr_names;
  std::vector<std::size_t> value_cols, attr_cols;
  for (std::size_t c = 0; c < header->size(); ++c) {
    std::string name(Trim((*header)[c]));
    if (name == "id") {
      id_col = c;
    } else if (name == "prediction") {
      pred_col = c;
    } else if (name.rfind("f:", 0) == 0 && name.size() > 2) {
      value_names.push_back(name.substr(2));
      value_cols.push_back(c);
    } else if (name.rfind("attr:", 0) == 0 && name.size() > 5) {
      attr_names.push_back(name.substr(5));
      attr_cols.push_back(c);
    } else {
      throw Error(ErrorCode::kMalformedInput, "unexpected CSV column '" + name + "'");
    }
  }
  if (!id_col) throw Error(ErrorCode::kMalformedInput, "missing 'id' column");
  if (!pred_col) throw Error(ErrorCode::kMalformedInput, "missing 'prediction' column");
  if (value_names.empty()) throw Error(ErrorCode::kMalformedInput, "no feature columns");

  // attr_for[i] = column of the attribution for value_names[i].
  std::vector<std::size_t> attr_for(value_names.size());
  for (std::size_t i = 0; i < value_names.size(); ++i) {
    auto it = std::find(attr_names.begin(), attr_names.end(), value_names[i]);
    if (it == attr_names.end()) {
      throw Error(ErrorCode::kMalformedInput, "missing column 'attr:" + value_names[i] + "'");
    }
    attr_for[i] = attr_cols[it - attr_names.begin()];
  }
  for (const auto& a : attr_names) {
    if (std::find(value_names.begin(), value_names.end(), a) == value_names.end()) {
      throw Error(ErrorCode::kMalformedInput, "missing column 'f:" + a + "'");
    }
  }

  std::vector<std::vector<std::string>> records;
  while (auto rec = NextRecord(text, pos, nullptr)) {
    if (IsBlank(*rec)) continue;
    if (rec->size() != header->size()) {
      throw Error(ErrorCode::kMalformedInput,
                  "CSV record " + std::to_string(records.size() + 1) + " has " +
                      std::to_string(rec->size()) + " fields, expected " +
                      std::to_string(header->size()));
    }
    records.push_back(std::move(*rec));
  }

  std::vector<FeatureMeta> features;
  for (std::size_t i = 0; i < value_names.size(); ++i) {
    FeatureMeta meta;
    meta.name = value_names[i];
    for (const auto& rec : records) {
      if (!ParseNumber(Trim(rec[value_cols[i]]))) {
        meta.kind = FeatureKind::kCategorical;
        break;
      }
    }
    if (auto it = feature_meta.find(meta.name); it != feature_meta.end()) {
      for (const auto& [key, value] : it->second) {
        if (key == "unit") meta.unit = value;
        if (key == "description") meta.description = value;
        if (key == "kind") {
          if (value == "categorical") {
            meta.kind = FeatureKind::kCategorical;
          } else if (value != "quantitative" || meta.kind == FeatureKind::kCategorical) {
            throw Error(ErrorCode::kTypeMismatch,
                        "feature '" + meta.name + "' cannot be " + value);
          }
        }
      }
      feature_meta.erase(it);
    }
    features.push_back(std::move(meta));
  }
  if (!feature_meta.empty()) {
    throw Error(ErrorCode::kMissingFeature,
                "metadata for unknown feature '" + feature_meta.begin()->first + "'");
  }

  std::vector<Row> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) {
    Row row;
    row.id = std::string(Trim(rec[*id_col]));
    for (std::size_t i = 0; i < features.size(); ++i) {
      const std::string& cell = rec[value_cols[i]];
      if (Trim(cell).empty()) {
        throw Error(ErrorCode::kMalformedInput,
                    "missing value for '" + features[i].name + "' in row '" + row.id + "'");
      }
      if (features[i].kind == FeatureKind::kQuantitative) {
        row.values.emplace_back(*ParseNumber(Trim(cell)));
      } else {
        row.values.emplace_back(cell);
      }
      row.attributions.push_back(
          RequireNumber(rec[attr_for[i]], "attribution of '" + features[i].name + "'"));
    }
    row.prediction = RequireNumber(rec[*pred_col], "prediction");
    rows.push_back(std::move(row));
  }
  return ExplanationTable(std::move(features), base_value, std::move(rows), options);
}

std::string CsvField(const std::string& s) {
  bool quote = s.empty() || s.find_first_of(",\"\r\n") != std::string::npos ||
               s.front() == ' ' || s.back() == ' ' || s.front() == '#';
  if (!quote) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// ---------------------------------------------------------------------------
// JSON

const json& RequireKey(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kMalformedInput, "missing key '" + std::string(key) + "'", where);
  }
  return *it;
}

double RequireJsonNumber(const json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::kMalformedInput, "expected a number", where);
  return v.get<double>();
}

ExplanationTable LoadJson(const std::string& text, const TableOptions& options) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedInput, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedInput, "expected an object", "$");

  double base_value = 0;
  if (auto it = doc.find("base_value"); it != doc.end()) {
    base_value = RequireJsonNumber(*it, "$.base_value");
  }
  const json& jf = RequireKey(doc, "features", "$");
  if (!jf.is_array()) throw Error(ErrorCode::kMalformedInput, "expected an array", "$.features");
  std::vector<FeatureMeta> features;
  for (std::size_t i = 0; i < jf.size(); ++i) {
    std::string where = "$.features[" + std::to_string(i) + "]";
    const json& f = jf[i];
    if (!f.is_object()) throw Error(ErrorCode::kMalformedInput, "expected an object", where);
    const json& name = RequireKey(f, "name", where);
    if (!name.is_string()) throw Error(ErrorCode::kMalformedInput, "expected a string", where + ".name");
    FeatureMeta meta;
    meta.name = name.get<std::string>();
    if (auto it = f.find("kind"); it != f.end()) {
      if (*it == "quantitative") {
        meta.kind = FeatureKind::kQuantitative;
      } else if (*it == "categorical") {
        meta.kind = FeatureKind::kCategorical;
      } else {
        throw Error(ErrorCode::kMalformedInput, "unknown kind", where + ".kind");
      }
    }
    for (const char* key : {"unit", "description"}) {
      auto it = f.find(key);
      if (it == f.end() || it->is_null()) continue;
      if (!it->is_string()) {
        throw Error(ErrorCode::kMalformedInput, "expected a string", where + "." + key);
      }
      (std::string_view(key) == "unit" ? meta.unit : meta.description) = it->get<std::string>();
    }
    features.push_back(std::move(meta));
  }

  const json& jr = RequireKey(doc, "rows", "$");
  if (!jr.is_array()) throw Error(ErrorCode::kMalformedInput, "expected an array", "$.rows");
  std::vector<Row> rows;
  rows.reserve(jr.size());
  for (std::size_t r = 0; r < jr.size(); ++r) {
    std::string where = "$.rows[" + std::to_string(r) + "]";
    const json& jrow = jr[r];
    if (!jrow.is_object()) throw Error(ErrorCode::kMalformedInput, "expected an object", where);
    Row row;
    const json& id = RequireKey(jrow, "id", where);
    if (!id.is_string()) throw Error(ErrorCode::kMalformedInput, "expected a string", where + ".id");
    row.id = id.get<std::string>();
    const json& values = RequireKey(jrow, "values", where);
    const json& attrs = RequireKey(jrow, "attributions", where);
    if (!values.is_object() || !attrs.is_object()) {
      throw Error(ErrorCode::kMalformedInput, "values/attributions must be objects", where);
    }
    if (values.size() != features.size() || attrs.size() != features.size()) {
      throw Error(ErrorCode::kMalformedInput, "row does not match the declared features", where);
    }
    for (const auto& meta : features) {
      std::string vwhere = where + ".values." + meta.name;
      auto v = values.find(meta.name);
      if (v == values.end() || v->is_null()) {
        throw Error(ErrorCode::kMalformedInput, "missing value", vwhere);
      }
      if (meta.kind == FeatureKind::kQuantitative) {
        row.values.emplace_back(RequireJsonNumber(*v, vwhere));
      } else {
        if (!v->is_string()) throw Error(ErrorCode::kMalformedInput, "expected a string", vwhere);
        row.values.emplace_back(v->get<std::string>());
      }
      auto a = attrs.find(meta.name);
      std::string awhere = where + ".attributions." + meta.name;
      if (a == attrs.end()) throw Error(ErrorCode::kMalformedInput, "missing attribution", awhere);
      row.attributions.push_back(RequireJsonNumber(*a, awhere));
    }
    row.prediction = RequireJsonNumber(RequireKey(jrow, "prediction", where), where + ".prediction");
    rows.push_back(std::move(row));
  }
  return ExplanationTable(std::move(features), base_value, std::move(rows), options);
}

}  // namespace

TableFormat SniffTableFormat(const std::string& text) {
  std::string_view t = Trim(text);
  if (t.substr(0, 3) == "\xEF\xBB\xBF") t = Trim(t.substr(3));
  return !t.empty() && t.front() == '{' ? TableFormat::kJson : TableFormat::kCsv;
}

ExplanationTable LoadTableFromString(const std::string& text, TableFormat format,
                                     const TableOptions& options) {
  if (Trim(text).empty()) throw Error(ErrorCode::kEmptyTable, "input is empty");
  return format == TableFormat::kCsv ? LoadCsv(text, options) : LoadJson(text, options);
}

ExplanationTable LoadTable(std::istream& source, TableFormat format,
                           const TableOptions& options) {
  std::ostringstream buf;
  buf << source.rdbuf();
  return LoadTableFromString(buf.str(), format, options);
}

std::string SerializeTable(const ExplanationTable& table, TableFormat format) {
  const auto& features = table.features();
  if (format == TableFormat::kCsv) {
    std::string out = "# base_value=" + FormatNumber(table.base_value()) + "\n";
    // Metadata lines survive only for text a comment line can carry verbatim.
    auto plain = [](std::string_view t) {
      return t.find_first_of("\"\r\n") == std::string_view::npos && Trim(t) == t;
    };
    for (const auto& f : features) {
      if (!plain(f.name) || f.name.find('=') != std::string::npos) continue;
      if (f.kind == FeatureKind::kCategorical) out += "# kind:" + f.name + "=categorical\n";
      if (f.unit && plain(*f.unit)) out += "# unit:" + f.name + "=" + *f.unit + "\n";
      if (f.description && plain(*f.description)) {
        out += "# description:" + f.name + "=" + *f.description + "\n";
      }
    }
    out += "id";
    for (const auto& f : features) out += "," + CsvField("f:" + f.name);
    for (const auto& f : features) out += "," + CsvField("attr:" + f.name);
    out += ",prediction\n";
    for (const Row& row : table.rows()) {
      out += CsvField(row.id);
      for (const Cell& v : row.values) {
        out += ",";
        out += std::holds_alternative<double>(v) ? FormatNumber(std::get<double>(v))
                                                 : CsvField(std::get<std::string>(v));
      }
      for (double a : row.attributions) out += "," + FormatNumber(a);
      out += "," + FormatNumber(row.prediction) + "\n";
    }
    return out;
  }

  json doc;
  doc["base_value"] = table.base_value();
  json jf = json::array();
  for (const auto& f : features) {
    json m = {{"name", f.name},
              {"kind", f.kind == FeatureKind::kQuantitative ? "quantitative" : "categorical"}};
    if (f.unit) m["unit"] = *f.unit;
    if (f.description) m["description"] = *f.description;
    jf.push_back(std::move(m));
  }
  doc["features"] = std::move(jf);
  json jr = json::array();
  for (const Row& row : table.rows()) {
    json values = json::object();
    json attrs = json::object();
    for (std::size_t i = 0; i < features.size(); ++i) {
      std::visit([&](const auto& v) { values[features[i].name] = v; }, row.values[i]);
      attrs[features[i].name] = row.attributions[i];
    }
    jr.push_back({{"id", row.id},
                  {"values", std::move(values)},
                  {"attributions", std::move(attrs)},
                  {"prediction", row.prediction}});
  }
  doc["rows"] = std::move(jr);
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Row filtering

void CheckCondition(const ExplanationTable& table, const TCondition& c) {
  const FeatureMeta& meta = table.Feature(c.feature);
  if (meta.kind == FeatureKind::kCategorical) {
    if (c.op != ConditionOp::kEqual || !c.category) {
      throw Error(ErrorCode::kTypeMismatch,
                  "categorical feature '" + c.feature + "' only supports equality to a category");
    }
    return;
  }
  if (c.category) {
    throw Error(ErrorCode::kTypeMismatch,
                "quantitative feature '" + c.feature + "' compared to a category");
  }
  const std::size_t arity = c.op == ConditionOp::kInRange ? 2 : 1;
  if (c.bounds.size() != arity) {
    throw Error(ErrorCode::kMalformedInput,
                "condition on '" + c.feature + "' needs " + std::to_string(arity) + " bound(s)");
  }
  if (arity == 2 && c.bounds[0] > c.bounds[1]) {
    throw Error(ErrorCode::kMalformedInput, "in-range bounds out of order on '" + c.feature + "'");
  }
}

bool RowMatches(const ExplanationTable& table, const Row& row, const TCondition& c) {
  const std::size_t idx = *table.FeatureIndex(c.feature);
  const Cell& cell = row.values[idx];
  if (const auto* s = std::get_if<std::string>(&cell)) return *s == *c.category;
  const double v = std::get<double>(cell);
  switch (c.op) {
    case ConditionOp::kLess: return v < c.bounds[0];
    case ConditionOp::kLessEqual: return v <= c.bounds[0];
    case ConditionOp::kGreater: return v > c.bounds[0];
    case ConditionOp::kGreaterEqual: return v >= c.bounds[0];
    case ConditionOp::kEqual: return v == c.bounds[0];
    case ConditionOp::kInRange: return v >= c.bounds[0] && v <= c.bounds[1];
  }
  return false;
}

RowSubset AllRows(const ExplanationTable& table) {
  RowSubset all(table.num_rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

RowSubset FilterRows(const ExplanationTable& table, const RowSubset& rows,
                     const Conditions& conditions) {
  for (const auto& c : conditions) CheckCondition(table, c);
  RowSubset out;
  for (std::size_t r : rows) {
    const Row& row = table.rows()[r];
    bool keep = std::all_of(conditions.begin(), conditions.end(),
                            [&](const TCondition& c) { return RowMatches(table, row, c); });
    if (keep) out.push_back(r);
  }
  return out;
}

RowSubset FilterRows(const ExplanationTable& table, const Conditions& conditions) {
  return FilterRows(table, AllRows(table), conditions);
}

// ---------------------------------------------------------------------------
// Shapley values

ShapleyResult ExactShapleyLinear(const LinearModel& model,
                                 const std::map<std::string, double>& instance) {
  ShapleyResult out;
  out.base_value = model.intercept;
  out.prediction = model.intercept;
  for (const auto& [name, w] : model.weights) {
    auto mu = model.background_means.find(name);
    if (mu == model.background_means.end()) {
      throw Error(ErrorCode::kMissingFeature, "no background mean for '" + name + "'");
    }
    auto x = instance.find(name);
    if (x == instance.end()) {
      throw Error(ErrorCode::kMissingFeature, "instance lacks '" + name + "'");
    }
    out.attributions[name] = w * (x->second - mu->second);
    out.base_value += w * mu->second;
    out.prediction += w * x->second;
  }
  return out;
}

std::vector<double> BruteForceShapley(const CoalitionValue& value, int n) {
  if (n > kMaxBruteForceFeatures) {
    throw Error(ErrorCode::kTooManyFeatures,
                std::to_string(n) + " players exceeds the enumeration cap of " +
                    std::to_string(kMaxBruteForceFeatures));
  }
  if (n <= 0) return {};
  const std::uint32_t full = (1u << n);
  std::vector<double> v(full);
  for (std::uint32_t s = 0; s < full; ++s) v[s] = value(s);

  // weight[k] = k! (n-k-1)! / n!
  std::vector<double> weight(n);
  for (int k = 0; k < n; ++k) {
    double w = 1.0 / n;
    // 1 / (n * C(n-1, k))
    double binom = 1;
    for (int j = 1; j <= k; ++j) binom = binom * (n - 1 - k + j) / j;
    weight[k] = w / binom;
  }

  std::vector<double> phi(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t s = 0; s < full; ++s) {
      if (s & bit) continue;
      phi[i] += weight[std::popcount(s)] * (v[s | bit] - v[s]);
    }
  }
  return phi;
}

}  // namespace xlint
