#include "mixopt/campaign/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mixopt::campaign {

namespace {

enum class Column { ingredient, age, strength, unit, batch, replicate };

struct ColumnSpec {
  Column kind;
  domain::IngredientId ingredient = domain::IngredientId::cement;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<ColumnSpec> classify(const std::string& raw) {
  const std::string name = lower(trim(raw));
  if (const auto id = domain::parse_ingredient(name)) return ColumnSpec{Column::ingredient, *id};
  if (name == "age_days" || name == "age") return ColumnSpec{Column::age};
  if (name == "strength" || name == "strength_value") return ColumnSpec{Column::strength};
  if (name == "unit" || name == "strength_unit") return ColumnSpec{Column::unit};
  if (name == "batch") return ColumnSpec{Column::batch};
  if (name == "replicate" || name == "replicate_id") return ColumnSpec{Column::replicate};
  return std::nullopt;
}

double parse_number(const std::string& text, const std::string& what) {
  if (text.empty()) throw std::invalid_argument(what + " is empty");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(what + " '" + text + "' is not a number");
  }
  if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(what + " '" + text + "' is not a number");
  return v;
}

double to_mpa(double value, const std::string& unit_raw) {
  const std::string unit = lower(trim(unit_raw));
  if (unit.empty() || unit == "mpa") return value;
  if (unit == "psi") return value / strength::kPsiPerMpa;
  throw std::invalid_argument("unit '" + unit_raw + "' is not MPa or psi");
}

// Shared row validation after the raw fields are decoded.
IngestedRow finish_row(std::size_t line, domain::Mixture mixture, double age, double strength_value,
                       const std::string& unit, std::string batch, std::optional<int> replicate) {
  for (auto id : domain::kAllIngredients) {
    if (mixture[id] < 0.0) throw std::invalid_argument("negative quantity for " + std::string(domain::to_string(id)));
  }
  if (!(age > 0.0)) throw std::invalid_argument("age_days must be positive");
  const double mpa = to_mpa(strength_value, unit);
  if (mpa < 0.0) throw std::invalid_argument("strength must be non-negative");
  IngestedRow row;
  row.line = line;
  row.batch = batch.empty() ? std::string(kExternalBatch) : std::move(batch);
  row.observation = {mixture, age, mpa, replicate, strength::Provenance::measured};
  try {
    row.observation.mixture.validate();
    row.observation.validate();
  } catch (const ValidationError& e) {
    throw std::invalid_argument(e.what());
  }
  return row;
}

void finish(IngestResult& result, bool strict) {
  result.report.accepted = result.rows.size();
  if (strict && !result.report.errors.empty()) throw RowErrors(result.report);
}

std::string describe(const IngestReport& r) {
  std::ostringstream s;
  s << r.errors.size() << " of " << r.rows << " rows rejected";
  if (!r.errors.empty()) s << "; first at line " << r.errors.front().line << ": " << r.errors.front().message;
  return s.str();
}

}  // namespace

RowErrors::RowErrors(IngestReport report) : SchemaError(describe(report)), report_(std::move(report)) {}

IngestResult ingest_csv(std::istream& in, bool strict) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  std::vector<ColumnSpec> columns;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (!have_header) {
      bool age = false, strength_col = false;
      for (const auto& f : fields) {
        const auto spec = classify(f);
        if (!spec) throw SchemaError("unknown column '" + f + "' in observation CSV");
        age |= spec->kind == Column::age;
        strength_col |= spec->kind == Column::strength;
        columns.push_back(*spec);
      }
      if (!age || !strength_col) throw SchemaError("observation CSV needs age_days and strength columns");
      have_header = true;
      continue;
    }
    ++result.report.rows;
    try {
      if (fields.size() != columns.size()) {
        throw std::invalid_argument("expected " + std::to_string(columns.size()) + " fields, found " +
                                    std::to_string(fields.size()));
      }
      domain::Mixture m;
      double age = 0.0, value = 0.0;
      std::string unit, batch;
      std::optional<int> replicate;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto& f = fields[c];
        switch (columns[c].kind) {
          case Column::ingredient:
            m[columns[c].ingredient] = f.empty() ? 0.0 : parse_number(f, std::string(domain::to_string(columns[c].ingredient)));
            break;
          case Column::age: age = parse_number(f, "age_days"); break;
          case Column::strength: value = parse_number(f, "strength"); break;
          case Column::unit: unit = f; break;
          case Column::batch: batch = f; break;
          case Column::replicate:
            if (!f.empty()) {
              const double r = parse_number(f, "replicate");
              if (r != std::floor(r)) throw std::invalid_argument("replicate must be an integer");
              replicate = static_cast<int>(r);
            }
            break;
        }
      }
      result.rows.push_back(finish_row(line_no, m, age, value, unit, batch, replicate));
    } catch (const std::invalid_argument& e) {
      result.report.errors.push_back({line_no, e.what()});
    }
  }
  finish(result, strict);
  return result;
}

IngestResult ingest_csv_text(const std::string& text, bool strict) {
  std::istringstream in(text);
  return ingest_csv(in, strict);
}

IngestResult ingest_json_rows(const nlohmann::json& rows, bool strict) {
  if (!rows.is_array()) throw SchemaError("measurement rows must be a JSON array");
  IngestResult result;
  std::size_t line = 0;
  for (const auto& r : rows) {
    ++line;
    ++result.report.rows;
    try {
      if (!r.is_object()) throw std::invalid_argument("row must be an object");
      for (const auto& [key, _] : r.items()) {
        if (key != "mixture" && key != "age_days" && key != "strength" && key != "unit" && key != "batch" &&
            key != "replicate") {
          throw std::invalid_argument("unknown field '" + key + "'");
        }
      }
      if (!r.contains("mixture") || !r.contains("age_days") || !r.contains("strength")) {
        throw std::invalid_argument("row needs mixture, age_days and strength");
      }
      domain::Mixture m;
      try {
        m = r.at("mixture").get<domain::Mixture>();
      } catch (const SchemaError& e) {
        throw std::invalid_argument(e.what());
      }
      if (!r.at("age_days").is_number() || !r.at("strength").is_number()) {
        throw std::invalid_argument("age_days and strength must be numbers");
      }
      std::optional<int> replicate;
      if (r.contains("replicate") && !r.at("replicate").is_null()) {
        if (!r.at("replicate").is_number_integer()) throw std::invalid_argument("replicate must be an integer");
        replicate = r.at("replicate").get<int>();
      }
      result.rows.push_back(finish_row(line, m, r.at("age_days").get<double>(), r.at("strength").get<double>(),
                                       r.value("unit", std::string("MPa")), r.value("batch", std::string{}), replicate));
    } catch (const std::invalid_argument& e) {
      result.report.errors.push_back({line, e.what()});
    } catch (const nlohmann::json::exception& e) {
      result.report.errors.push_back({line, e.what()});
    }
  }
  finish(result, strict);
  return result;
}

void to_json(nlohmann::json& j, const IngestReport& r) {
  auto errors = nlohmann::json::array();
  for (const auto& e : r.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  j = {{"rows", r.rows}, {"accepted", r.accepted}, {"rejected", r.errors.size()}, {"errors", errors}};
}

void from_json(const nlohmann::json& j, IngestReport& r) {
  r.rows = j.at("rows").get<std::size_t>();
  r.accepted = j.at("accepted").get<std::size_t>();
  r.errors.clear();
  for (const auto& e : j.at("errors")) r.errors.push_back({e.at("line").get<std::size_t>(), e.at("message").get<std::string>()});
}

}  // namespace mixopt::campaign
