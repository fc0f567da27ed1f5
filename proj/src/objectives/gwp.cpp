#include "mixopt/objectives/gwp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::objectives {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  const auto e = s.find_last_not_of(" \t\r\"");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

domain::IngredientId ingredient_or_throw(const std::string& name) {
  const auto id = domain::parse_ingredient(name);
  if (!id) throw SchemaError("unknown ingredient '" + name + "' in GWP table");
  return *id;
}

}  // namespace

void GwpTable::set(domain::IngredientId id, double kg_co2e_per_kg, std::string source) {
  entries[domain::index(id)] = Entry{kg_co2e_per_kg, std::move(source)};
}

double GwpTable::coefficient(domain::IngredientId id) const {
  const auto& e = entries[domain::index(id)];
  if (!e) {
    throw ConfigurationError("GWP table '" + name + "' has no coefficient for ingredient '" +
                             std::string(domain::to_string(id)) + "'");
  }
  return e->kg_co2e_per_kg;
}

GwpTable GwpTable::scaled(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ValidationError("GWP scale factor must be positive");
  GwpTable out = *this;
  for (auto& e : out.entries) {
    if (e) e->kg_co2e_per_kg *= factor;
  }
  return out;
}

void GwpTable::validate() const {
  for (auto id : domain::kAllIngredients) {
    const auto& e = entries[domain::index(id)];
    if (e && (!std::isfinite(e->kg_co2e_per_kg) || e->kg_co2e_per_kg < 0.0)) {
      throw ConfigurationError("GWP coefficient for '" + std::string(domain::to_string(id)) +
                               "' must be finite and non-negative");
    }
  }
}

GwpTable GwpTable::parse_csv(const std::string& text, std::string name) {
  GwpTable t;
  t.name = std::move(name);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      if (trim(line.substr(0, line.find(','))) != "ingredient") {
        throw SchemaError("GWP CSV must start with header 'ingredient,kgCO2e_per_kg,source'");
      }
      continue;
    }
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) throw SchemaError("GWP CSV line " + std::to_string(line_no) + ": expected 2 or 3 fields");
    const auto c2 = line.find(',', c1 + 1);
    const std::string ing = trim(line.substr(0, c1));
    const std::string value = trim(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
    const std::string source = c2 == std::string::npos ? std::string{} : trim(line.substr(c2 + 1));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw SchemaError("GWP CSV line " + std::to_string(line_no) + ": '" + value + "' is not a number");
    }
    t.set(ingredient_or_throw(ing), v, source);
  }
  t.validate();
  return t;
}

GwpTable GwpTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open GWP table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    GwpTable t;
    try {
      t = nlohmann::json::parse(text).get<GwpTable>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("GWP table " + path.string() + ": " + e.what());
    }
    if (t.name.empty()) t.name = path.stem().string();
    return t;
  }
  return parse_csv(text, path.stem().string());
}

double gwp(const GwpTable& table, const domain::Mixture& mixture) {
  double total = 0.0;
  for (auto id : domain::kAllIngredients) {
    const double q = mixture[id];
    if (q == 0.0) continue;
    total += table.coefficient(id) * q;
  }
  return total;
}

void to_json(nlohmann::json& j, const GwpTable& t) {
  auto rows = nlohmann::json::array();
  for (auto id : domain::kAllIngredients) {
    const auto& e = t.entries[domain::index(id)];
    if (!e) continue;
    rows.push_back({{"ingredient", domain::to_string(id)}, {"kgCO2e_per_kg", e->kg_co2e_per_kg}, {"source", e->source}});
  }
  j = {{"name", t.name}, {"coefficients", rows}};
}

void from_json(const nlohmann::json& j, GwpTable& t) {
  if (!j.is_object() || !j.contains("coefficients") || !j.at("coefficients").is_array()) {
    throw SchemaError("GWP table must be an object with a 'coefficients' array");
  }
  t = GwpTable{};
  t.name = j.value("name", std::string{});
  for (const auto& row : j.at("coefficients")) {
    if (!row.is_object() || !row.contains("ingredient") || !row.contains("kgCO2e_per_kg") ||
        !row.at("kgCO2e_per_kg").is_number()) {
      throw SchemaError("GWP row needs 'ingredient' and numeric 'kgCO2e_per_kg'");
    }
    t.set(ingredient_or_throw(row.at("ingredient").get<std::string>()), row.at("kgCO2e_per_kg").get<double>(),
          row.value("source", std::string{}));
  }
  t.validate();
}

}  // namespace mixopt::objectives
