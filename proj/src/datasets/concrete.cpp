#include "mixopt/datasets/concrete.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "mixopt/errors.hpp"

namespace mixopt::datasets {

using domain::IngredientId;

double ConcreteSurrogate::strength_28d(const Mixture& m) const {
  const double c = m[IngredientId::cement], f = m[IngredientId::fly_ash], s = m[IngredientId::slag];
  const double effective_binder = c + 0.8 * s + 0.45 * f;
  if (effective_binder <= 0.0) return 0.0;
  const double water = m[IngredientId::water] * (1.0 - 0.006 * std::min(m[IngredientId::superplasticizer], 40.0));
  return 105.0 * std::exp(-2.1 * water / effective_binder);
}

double ConcreteSurrogate::strength(const Mixture& m, double age_days) const {
  if (age_days <= 0.0) return 0.0;
  const double binder = m.binder();
  const double fa = binder > 0 ? m[IngredientId::fly_ash] / binder : 0.0;
  const double sl = binder > 0 ? m[IngredientId::slag] / binder : 0.0;
  // g(t) = t / (a + b t) with g(28) = 1
  const double a = 3.0 + 10.0 * fa + 5.0 * sl;
  const double b = 1.0 - a / 28.0;
  return strength_28d(m) * age_days / (a + b * age_days);
}

double ConcreteSurrogate::measure(const Mixture& m, double age_days, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const double mu = strength(m, age_days);
  return std::max(0.0, mu + noise_sd(mu) * n01(rng));
}

domain::Constraints uci_design_space() {
  domain::Constraints c;
  c.set_bounds(IngredientId::cement, {102.0, 540.0});
  c.set_bounds(IngredientId::slag, {0.0, 359.4});
  c.set_bounds(IngredientId::fly_ash, {0.0, 200.1});
  c.set_bounds(IngredientId::water, {121.8, 247.0});
  c.set_bounds(IngredientId::superplasticizer, {0.0, 32.2});
  c.set_bounds(IngredientId::coarse_aggregate, {801.0, 1145.0});
  c.set_bounds(IngredientId::fine_aggregate, {594.0, 992.6});
  return c;
}

std::vector<StrengthObservation> synthetic_uci(std::uint64_t seed) {
  constexpr std::size_t kMixtures = 425;
  // Non-28-day rows of the public dataset by age.
  const std::vector<std::pair<double, int>> extra_ages = {{1, 2},   {3, 134}, {7, 126},  {14, 62},  {56, 91},
                                                          {90, 54}, {91, 22}, {100, 52}, {120, 3},  {180, 26},
                                                          {270, 13}, {360, 6}, {365, 14}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  auto round1 = [](double v) { return std::round(v * 10.0) / 10.0; };

  std::vector<Mixture> mixtures;
  std::set<Mixture> seen;
  while (mixtures.size() < kMixtures) {
    Mixture m;
    m[IngredientId::cement] = round1(uniform(102.0, 540.0));
    m[IngredientId::slag] = u01(rng) < 0.45 ? round1(uniform(11.0, 359.4)) : 0.0;
    m[IngredientId::fly_ash] = u01(rng) < 0.45 ? round1(uniform(24.5, 200.1)) : 0.0;
    m[IngredientId::superplasticizer] = u01(rng) < 0.63 ? round1(uniform(1.7, 32.2)) : 0.0;
    m[IngredientId::water] = round1(uniform(121.8, 247.0));
    m[IngredientId::coarse_aggregate] = round1(uniform(801.0, 1145.0));
    m[IngredientId::fine_aggregate] = round1(uniform(594.0, 992.6));
    const double wb = m.water_binder_ratio();
    if (wb < 0.24 || wb > 1.9) continue;
    if (seen.insert(m).second) mixtures.push_back(m);
  }

  std::vector<std::pair<std::size_t, double>> rows;
  std::set<std::pair<std::size_t, double>> used;
  for (std::size_t i = 0; i < kMixtures; ++i) {
    rows.emplace_back(i, 28.0);
    used.emplace(i, 28.0);
  }
  std::uniform_int_distribution<std::size_t> pick(0, kMixtures - 1);
  for (const auto& [age, count] : extra_ages) {
    for (int k = 0; k < count; ++k) {
      std::size_t i = pick(rng);
      while (!used.emplace(i, age).second) i = pick(rng);
      rows.emplace_back(i, age);
    }
  }
  std::sort(rows.begin(), rows.end());

  const ConcreteSurrogate truth;
  std::vector<StrengthObservation> out;
  out.reserve(rows.size());
  for (const auto& [i, age] : rows) {
    const auto noise_seed = rng();
    out.push_back({mixtures[i], age, std::round(truth.measure(mixtures[i], age, noise_seed) * 100.0) / 100.0, std::nullopt});
  }
  return out;
}

std::vector<StrengthObservation> load_uci_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  const IngredientId order[] = {IngredientId::cement,           IngredientId::slag,
                                IngredientId::fly_ash,          IngredientId::water,
                                IngredientId::superplasticizer, IngredientId::coarse_aggregate,
                                IngredientId::fine_aggregate};
  std::vector<StrengthObservation> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw SchemaError("line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (v.size() != 9) throw SchemaError("line " + std::to_string(line_no) + ": expected 9 columns");
    StrengthObservation o;
    for (int k = 0; k < 7; ++k) o.mixture[order[k]] = v[static_cast<std::size_t>(k)];
    o.age_days = v[7];
    o.strength_mpa = v[8];
    o.validate();
    out.push_back(o);
  }
  return out;
}

std::vector<StrengthObservation> uci_or_synthetic(bool* is_real) {
  if (const char* p = std::getenv("MIXOPT_UCI_CSV"); p != nullptr && std::filesystem::exists(p)) {
    if (is_real) *is_real = true;
    return load_uci_csv(p);
  }
  if (is_real) *is_real = false;
  return synthetic_uci();
}

}  // namespace mixopt::datasets
