#include "mixopt/strength/observation.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::strength {

void StrengthObservation::validate() const {
  mixture.validate_quantities();
  if (!std::isfinite(age_days) || age_days < 0.0) throw ValidationError("age_days must be finite and >= 0");
  if (!std::isfinite(strength_mpa) || strength_mpa < 0.0) throw ValidationError("strength must be finite and >= 0");
  if (provenance == Provenance::augmented_zero) {
    if (age_days != 0.0 || strength_mpa != 0.0) {
      throw ValidationError("augmented zero-day records must have age 0 and strength 0");
    }
  } else if (!(age_days > 0.0)) {
    throw ValidationError("measured observations need a positive age");
  }
}

std::vector<Mixture> distinct_mixtures(std::span<const StrengthObservation> observations) {
  std::set<Mixture> seen;
  std::vector<Mixture> out;
  for (const auto& o : observations) {
    if (seen.insert(o.mixture).second) out.push_back(o.mixture);
  }
  return out;
}

std::size_t default_extra_zero_compositions(std::size_t n_mixtures) { return std::max<std::size_t>(5, n_mixtures / 4); }

std::vector<StrengthObservation> augment_zero_day(std::span<const StrengthObservation> observations,
                                                  std::size_t extra_compositions, std::uint64_t seed,
                                                  const domain::PolytopeSampler* design_space) {
  std::vector<StrengthObservation> out(observations.begin(), observations.end());
  std::set<Mixture> anchored;
  for (const auto& o : observations) {
    if (o.provenance == Provenance::augmented_zero) anchored.insert(o.mixture);
  }
  for (const auto& m : distinct_mixtures(observations)) {
    if (anchored.insert(m).second) out.push_back({m, 0.0, 0.0, std::nullopt, Provenance::augmented_zero});
  }
  if (extra_compositions > 0) {
    if (design_space == nullptr) throw ConfigurationError("extra zero-day compositions need a design space");
    for (const auto& m : design_space->sample(extra_compositions, seed)) {
      out.push_back({m, 0.0, 0.0, std::nullopt, Provenance::augmented_zero});
    }
  }
  return out;
}

std::string digest(std::span<const StrengthObservation> observations) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& o : observations) {
    for (double q : o.mixture.quantities()) mix(std::bit_cast<std::uint64_t>(q));
    mix(std::bit_cast<std::uint64_t>(o.age_days));
    mix(std::bit_cast<std::uint64_t>(o.strength_mpa));
    mix(o.replicate_id ? static_cast<std::uint64_t>(*o.replicate_id) + 1 : 0);
    mix(o.provenance == Provenance::measured ? 1 : 2);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void to_json(nlohmann::json& j, const StrengthObservation& o) {
  j = {{"mixture", o.mixture},
       {"age_days", o.age_days},
       {"strength_mpa", o.strength_mpa},
       {"provenance", o.provenance == Provenance::measured ? "measured" : "augmented_zero"}};
  if (o.replicate_id) j["replicate"] = *o.replicate_id;
}

void from_json(const nlohmann::json& j, StrengthObservation& o) {
  o.mixture = j.at("mixture").get<Mixture>();
  o.age_days = j.at("age_days").get<double>();
  o.strength_mpa = j.at("strength_mpa").get<double>();
  const auto prov = j.value("provenance", std::string("measured"));
  if (prov == "measured") {
    o.provenance = Provenance::measured;
  } else if (prov == "augmented_zero") {
    o.provenance = Provenance::augmented_zero;
  } else {
    throw SchemaError("unknown provenance '" + prov + "'");
  }
  o.replicate_id = j.contains("replicate") ? std::optional<int>(j["replicate"].get<int>()) : std::nullopt;
}

}  // namespace mixopt::strength
