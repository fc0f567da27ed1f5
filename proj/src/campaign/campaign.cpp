#include "mixopt/campaign/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "mixopt/errors.hpp"
#include "mixopt/moo/hypervolume.hpp"
#include "mixopt/moo/pareto.hpp"

namespace mixopt::campaign {

namespace {

constexpr double kAgeTol = 1e-9;

template <class T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

Eigen::MatrixXd as_rows(const std::vector<domain::Mixture>& mixtures) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(mixtures.size()), static_cast<Eigen::Index>(domain::kNumIngredients));
  for (std::size_t i = 0; i < mixtures.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = mixtures[i].to_vector().transpose();
  return x;
}

void push_unique(std::vector<domain::Mixture>& v, const domain::Mixture& m) {
  if (std::find(v.begin(), v.end(), m) == v.end()) v.push_back(m);
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string_view to_string(Origin o) { return o == Origin::ai ? "ai" : "human"; }

Origin parse_origin(std::string_view s) {
  if (s == "ai") return Origin::ai;
  if (s == "human") return Origin::human;
  throw SchemaError("unknown batch origin '" + std::string(s) + "'");
}

std::vector<strength::StrengthObservation> Campaign::measured() const {
  std::vector<strength::StrengthObservation> out;
  out.reserve(observations.size());
  for (const auto& m : observations) out.push_back(m.observation);
  return out;
}

const Batch* Campaign::find_batch(const std::string& batch_id) const {
  for (const auto& b : batches) {
    if (b.id == batch_id) return &b;
  }
  return nullptr;
}

std::string Campaign::next_batch_id(Origin origin) const {
  const std::string prefix = std::string(to_string(origin)) + "-";
  for (std::size_t k = 1;; ++k) {
    const std::string candidate = prefix + std::to_string(k);
    if (!find_batch(candidate)) return candidate;
  }
}

bool Campaign::operator==(const Campaign& other) const {
  return observations == other.observations && metadata_to_json(*this) == metadata_to_json(other);
}

Campaign make_campaign(std::string id, domain::Constraints constraints, objectives::GwpTable gwp_table,
                       objectives::ObjectiveSpec spec) {
  static const std::regex kId("[A-Za-z0-9][A-Za-z0-9_.-]*");
  if (!std::regex_match(id, kId)) throw ValidationError("campaign id '" + id + "' must match [A-Za-z0-9][A-Za-z0-9_.-]*");
  constraints.validate();
  gwp_table.validate();
  spec.validate();
  for (auto ing : domain::kAllIngredients) {
    if (constraints.bounds(ing).hi > 0.0 && !gwp_table.has(ing)) {
      throw ConfigurationError("GWP table '" + gwp_table.name + "' has no coefficient for ingredient '" +
                               std::string(domain::to_string(ing)) + "' allowed by the constraints");
    }
  }
  Campaign c;
  c.id = std::move(id);
  c.constraints = std::move(constraints);
  c.gwp_table = std::move(gwp_table);
  c.objective_spec = std::move(spec);
  return c;
}

void to_json(nlohmann::json& j, const Batch& b) {
  j = {{"id", b.id},
       {"origin", to_string(b.origin)},
       {"mixtures", b.mixtures},
       {"created_ms", b.created_ms},
       {"snapshot_digest", optional_json(b.snapshot_digest)},
       {"seed", optional_json(b.seed)},
       {"predictions", b.predictions}};
}

void from_json(const nlohmann::json& j, Batch& b) {
  b.id = j.at("id").get<std::string>();
  b.origin = parse_origin(j.at("origin").get<std::string>());
  b.mixtures = j.at("mixtures").get<std::vector<domain::Mixture>>();
  b.created_ms = j.at("created_ms").get<std::int64_t>();
  b.snapshot_digest = j.at("snapshot_digest").is_null() ? std::nullopt
                                                        : std::optional(j.at("snapshot_digest").get<std::string>());
  b.seed = j.at("seed").is_null() ? std::nullopt : std::optional(j.at("seed").get<std::uint64_t>());
  b.predictions = j.value("predictions", nlohmann::json());
}

void to_json(nlohmann::json& j, const Measurement& m) {
  j = {{"seq", m.seq}, {"timestamp_ms", m.timestamp_ms}, {"batch", m.batch}, {"observation", m.observation}};
}

void from_json(const nlohmann::json& j, Measurement& m) {
  m.seq = j.at("seq").get<std::uint64_t>();
  m.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  m.batch = j.at("batch").get<std::string>();
  m.observation = j.at("observation").get<strength::StrengthObservation>();
}

nlohmann::json metadata_to_json(const Campaign& c) {
  auto snaps = nlohmann::json::array();
  for (const auto& s : c.snapshots) {
    snaps.push_back({{"digest", s.digest}, {"n_training", s.n_training}, {"created_ms", s.created_ms}});
  }
  return {{"format_version", kFormatVersion},
          {"id", c.id},
          {"constraints", c.constraints},
          {"gwp_table", c.gwp_table},
          {"objective_spec", c.objective_spec},
          {"model_config", c.model_config},
          {"acquisition", c.acquisition},
          {"batches", c.batches},
          {"snapshots", snaps}};
}

Campaign campaign_from_metadata(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format_version") || !j.at("format_version").is_number_integer()) {
    throw MigrationError("campaign metadata has no format_version");
  }
  const int version = j.at("format_version").get<int>();
  if (version != kFormatVersion) {
    throw MigrationError("campaign format version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kFormatVersion) + ")");
  }
  Campaign c;
  try {
    c.id = j.at("id").get<std::string>();
    c.constraints = domain::constraints_from_json(j.at("constraints"));
    c.gwp_table = j.at("gwp_table").get<objectives::GwpTable>();
    c.objective_spec = j.at("objective_spec").get<objectives::ObjectiveSpec>();
    c.model_config = j.at("model_config").get<strength::StrengthModelConfig>();
    c.acquisition = j.at("acquisition").get<moo::AcquisitionConfig>();
    c.batches = j.at("batches").get<std::vector<Batch>>();
    for (const auto& s : j.at("snapshots")) {
      c.snapshots.push_back({s.at("digest").get<std::string>(), s.at("n_training").get<std::size_t>(),
                             s.at("created_ms").get<std::int64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed campaign metadata: ") + e.what());
  }
  return c;
}

std::vector<Measurement> append_rows(Campaign& c, std::span<const IngestedRow> rows, std::int64_t timestamp_ms) {
  std::vector<Measurement> out;
  std::uint64_t seq = c.observations.empty() ? 0 : c.observations.back().seq + 1;
  for (const auto& r : rows) {
    if (r.batch != kExternalBatch) {
      auto it = std::find_if(c.batches.begin(), c.batches.end(), [&](const Batch& b) { return b.id == r.batch; });
      if (it == c.batches.end()) {
        Batch b;
        b.id = r.batch;
        b.origin = Origin::human;
        b.created_ms = timestamp_ms;
        c.batches.push_back(std::move(b));
        it = std::prev(c.batches.end());
      }
      if (it->origin == Origin::human) push_unique(it->mixtures, r.observation.mixture);
    }
    Measurement m{seq++, timestamp_ms, r.batch, r.observation};
    c.observations.push_back(m);
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------

strength::StrengthModelConfig effective_model_config(const Campaign& c) {
  auto cfg = c.model_config;
  if (!cfg.design_space) cfg.design_space = c.constraints;
  return cfg;
}

strength::StrengthModel fit_campaign_model(const Campaign& c) {
  const auto data = c.measured();
  return strength::fit_strength_model(data, effective_model_config(c));
}

Proposal propose_batch(const Campaign& c, std::size_t q, std::uint64_t seed) {
  const auto model = fit_campaign_model(c);
  return propose_batch(c, model, q, seed);
}

Proposal propose_batch(const Campaign& c, const strength::StrengthModel& model, std::size_t q, std::uint64_t seed) {
  const auto& spec = c.objective_spec;
  spec.validate();
  auto acq = c.acquisition;
  acq.q = q;
  acq.seed = seed;

  const objectives::MixtureObjectiveModel objective_model(model, c.gwp_table, spec.ages_days);
  const auto measured = c.measured();
  const auto observed_mixtures = strength::distinct_mixtures(measured);
  const auto result = moo::optimize_acquisition(objective_model, as_rows(observed_mixtures), spec.reference_point,
                                                c.constraints, acq);

  Proposal p;
  p.batch.id = c.next_batch_id(Origin::ai);
  p.batch.origin = Origin::ai;
  for (Eigen::Index i = 0; i < result.batch.rows(); ++i) {
    p.batch.mixtures.push_back(domain::Mixture::from_vector(result.batch.row(i).transpose()));
  }
  p.batch.snapshot_digest = model.training_digest();
  p.batch.seed = seed;
  p.predictions = objectives::objective_posterior(model, c.gwp_table, p.batch.mixtures, spec);
  p.batch.predictions = nlohmann::json::array();
  for (const auto& post : p.predictions) {
    p.batch.predictions.push_back(
        {{"mean", vector_json(post.mean)}, {"sd", vector_json(post.covariance.diagonal().cwiseMax(0.0).cwiseSqrt())}});
  }
  p.acquisition_value = result.value;
  p.degenerate = result.degenerate;
  p.snapshot = model.snapshot();
  return p;
}

// ---------------------------------------------------------------------------

namespace {

double reference_for_age(const objectives::ObjectiveSpec& spec, double age) {
  for (std::size_t k = 0; k < spec.ages_days.size(); ++k) {
    if (std::abs(spec.ages_days[k] - age) < kAgeTol) return spec.reference_point[static_cast<Eigen::Index>(k)];
  }
  return 0.0;
}

struct MixtureMeans {
  domain::Mixture mixture;
  std::string batch;
  std::vector<double> sum;
  std::vector<std::size_t> count;
};

// Replicate means per mixture at each requested age, in first-occurrence order.
std::vector<MixtureMeans> group_by_mixture(const Campaign& c, const std::vector<double>& ages) {
  std::vector<MixtureMeans> out;
  for (const auto& m : c.observations) {
    const auto& o = m.observation;
    std::size_t k = ages.size();
    for (std::size_t a = 0; a < ages.size(); ++a) {
      if (std::abs(ages[a] - o.age_days) < kAgeTol) k = a;
    }
    if (k == ages.size()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const MixtureMeans& g) { return g.mixture == o.mixture; });
    if (it == out.end()) {
      out.push_back({o.mixture, m.batch, std::vector<double>(ages.size(), 0.0), std::vector<std::size_t>(ages.size(), 0)});
      it = std::prev(out.end());
    }
    it->sum[k] += o.strength_mpa;
    ++it->count[k];
  }
  return out;
}

}  // namespace

EmpiricalFrontier empirical_pareto(const Campaign& c, double age_days) {
  EmpiricalFrontier f;
  f.age_days = age_days;
  for (const auto& g : group_by_mixture(c, {age_days})) {
    f.points.push_back({g.mixture, g.batch, g.sum[0] / static_cast<double>(g.count[0]), g.count[0],
                        objectives::gwp(c.gwp_table, g.mixture), true});
  }
  Eigen::MatrixXd y(static_cast<Eigen::Index>(f.points.size()), 2);
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    y(static_cast<Eigen::Index>(i), 0) = f.points[i].strength_mpa;
    y(static_cast<Eigen::Index>(i), 1) = -f.points[i].gwp;
  }
  const auto front = moo::pareto_filter(y);
  f.frontier = front.indices;
  for (auto i : f.frontier) f.points[i].dominated = false;
  const Eigen::Vector2d ref(reference_for_age(c.objective_spec, age_days), c.objective_spec.reference_point.tail(1)[0]);
  f.hypervolume = moo::detail::hypervolume_quiet(front.points, ref);
  return f;
}

double empirical_hypervolume(const Campaign& c) {
  const auto& spec = c.objective_spec;
  const auto groups = group_by_mixture(c, spec.ages_days);
  const Eigen::Index m = spec.num_objectives();
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& g : groups) {
    if (std::find(g.count.begin(), g.count.end(), 0u) != g.count.end()) continue;
    Eigen::RowVectorXd y(m);
    for (std::size_t k = 0; k < g.sum.size(); ++k) y[static_cast<Eigen::Index>(k)] = g.sum[k] / static_cast<double>(g.count[k]);
    y[m - 1] = -objectives::gwp(c.gwp_table, g.mixture);
    rows.push_back(y);
  }
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = rows[i];
  return moo::detail::hypervolume_quiet(y, spec.reference_point);
}

// ---------------------------------------------------------------------------

Scenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("scenario must be a JSON object");
  Scenario s;
  nlohmann::json rest = nlohmann::json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "gwp_table") {
      try {
        s.gwp_table = value.get<objectives::GwpTable>();
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed scenario gwp_table: ") + e.what());
      }
    } else if (key == "gwp_scale") {
      if (!value.is_number() || !(value.get<double>() > 0.0)) throw SchemaError("gwp_scale must be a positive number");
      s.gwp_scale = value.get<double>();
    } else {
      rest[key] = value;
    }
  }
  s.overrides = domain::overrides_from_json(rest);
  return s;
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = s.overrides;
  if (s.gwp_table) j["gwp_table"] = *s.gwp_table;
  if (s.gwp_scale) j["gwp_scale"] = *s.gwp_scale;
}

InferredFrontier inferred_pareto(const Campaign& c, const strength::StrengthModel& model, const Scenario& scenario,
                                 const InferConfig& config) {
  const auto& spec = c.objective_spec;
  spec.validate();
  if (config.candidates < 1) throw ValidationError("inferred frontier needs at least one candidate");
  InferredFrontier out;
  out.constraints = c.constraints.with_overrides(scenario.overrides);
  out.constraints.validate();
  const domain::PolytopeSampler sampler(out.constraints);
  auto table = scenario.gwp_table.value_or(c.gwp_table);
  if (scenario.gwp_scale) table = table.scaled(*scenario.gwp_scale);
  table.validate();

  const auto candidates = sampler.sample(config.candidates, config.seed);
  out.candidates = candidates.size();
  const Eigen::Index n = static_cast<Eigen::Index>(candidates.size()), m = spec.num_objectives();
  const Eigen::Index n_ages = m - 1;
  Eigen::MatrixXd y(n, m);
  for (Eigen::Index k = 0; k < n_ages; ++k) y.col(k) = model.predict_mean(candidates, spec.ages_days[static_cast<std::size_t>(k)]);
  for (Eigen::Index i = 0; i < n; ++i) y(i, m - 1) = -objectives::gwp(table, candidates[static_cast<std::size_t>(i)]);

  auto make_point = [&](std::size_t i) {
    InferredPoint p;
    p.mixture = candidates[i];
    p.mean = y.row(static_cast<Eigen::Index>(i)).transpose();
    p.sd = Eigen::VectorXd::Zero(m);
    const auto pred = model.predict(p.mixture, spec.ages_days);
    for (Eigen::Index k = 0; k < n_ages; ++k) p.sd[k] = pred[static_cast<std::size_t>(k)].sd_mpa;
    return p;
  };

  const auto joint = moo::pareto_filter(y);
  for (auto i : joint.indices) out.points.push_back(make_point(i));
  out.hypervolume = moo::detail::hypervolume_quiet(joint.points, spec.reference_point);
  for (Eigen::Index k = 0; k < n_ages; ++k) {
    Eigen::MatrixXd y2(n, 2);
    y2.col(0) = y.col(k);
    y2.col(1) = y.col(m - 1);
    std::vector<InferredPoint> pts;
    for (auto i : moo::pareto_filter(y2).indices) pts.push_back(make_point(i));
    out.by_age.push_back(std::move(pts));
  }
  return out;
}

nlohmann::json empirical_json(const EmpiricalFrontier& f) {
  auto points = nlohmann::json::array();
  for (const auto& p : f.points) {
    points.push_back({{"mixture", p.mixture},
                      {"batch", p.batch},
                      {"strength_mpa", p.strength_mpa},
                      {"replicates", p.replicates},
                      {"gwp", p.gwp},
                      {"dominated", p.dominated}});
  }
  return {{"age_days", f.age_days}, {"points", points}, {"frontier", f.frontier}, {"hypervolume", f.hypervolume}};
}

nlohmann::json inferred_json(const InferredFrontier& f, const objectives::ObjectiveSpec& spec) {
  auto point_json = [](const InferredPoint& p) {
    return nlohmann::json{{"mixture", p.mixture}, {"mean", vector_json(p.mean)}, {"sd", vector_json(p.sd)}};
  };
  auto points = nlohmann::json::array();
  for (const auto& p : f.points) points.push_back(point_json(p));
  auto by_age = nlohmann::json::array();
  for (std::size_t k = 0; k < f.by_age.size(); ++k) {
    auto pts = nlohmann::json::array();
    for (const auto& p : f.by_age[k]) pts.push_back(point_json(p));
    by_age.push_back({{"age_days", spec.ages_days[k]}, {"points", pts}});
  }
  return {{"objectives", spec.names()},   {"candidates", f.candidates}, {"hypervolume", f.hypervolume},
          {"constraints", f.constraints}, {"points", points},           {"by_age", by_age}};
}

}  // namespace mixopt::campaign
