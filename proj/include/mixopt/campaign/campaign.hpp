#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mixopt/campaign/ingest.hpp"
#include "mixopt/domain/constraints.hpp"
#include "mixopt/moo/acquisition.hpp"
#include "mixopt/objectives/objectives.hpp"
#include "mixopt/strength/model.hpp"

namespace mixopt::campaign {

inline constexpr int kFormatVersion = 1;

enum class Origin { human, ai };

std::string_view to_string(Origin o);
Origin parse_origin(std::string_view s);

struct Batch {
  std::string id;
  Origin origin = Origin::human;
  std::vector<domain::Mixture> mixtures;
  std::int64_t created_ms = 0;
  /// Model snapshot and seed behind an AI proposal.
  std::optional<std::string> snapshot_digest;
  std::optional<std::uint64_t> seed;
  /// Predicted objective means and sds per mixture (AI batches).
  nlohmann::json predictions;
  bool operator==(const Batch&) const = default;
};

/// One measured specimen in the append-only log.
struct Measurement {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::string batch = kExternalBatch;
  strength::StrengthObservation observation;
  bool operator==(const Measurement&) const = default;
};

struct SnapshotRef {
  std::string digest;
  std::size_t n_training = 0;
  std::int64_t created_ms = 0;
  bool operator==(const SnapshotRef&) const = default;
};

struct Campaign {
  std::string id;
  domain::Constraints constraints;
  objectives::GwpTable gwp_table;
  objectives::ObjectiveSpec objective_spec;
  strength::StrengthModelConfig model_config;
  moo::AcquisitionConfig acquisition;
  std::vector<Batch> batches;
  std::vector<Measurement> observations;
  std::vector<SnapshotRef> snapshots;

  /// Measured observations in log order, as the model consumes them.
  std::vector<strength::StrengthObservation> measured() const;
  const Batch* find_batch(const std::string& id) const;
  /// Next free id with the given prefix ("human-3", "ai-2", ...).
  std::string next_batch_id(Origin origin) const;
  /// Structural equality over every persisted field.
  bool operator==(const Campaign& other) const;
};

/// Validates the id, constraints, GWP table and objective spec.
Campaign make_campaign(std::string id, domain::Constraints constraints, objectives::GwpTable gwp_table,
                       objectives::ObjectiveSpec spec = {});

/// Batch-level and configuration fields; observations are stored separately.
nlohmann::json metadata_to_json(const Campaign& c);
Campaign campaign_from_metadata(const nlohmann::json& j);

void to_json(nlohmann::json& j, const Measurement& m);
void from_json(const nlohmann::json& j, Measurement& m);
void to_json(nlohmann::json& j, const Batch& b);
void from_json(const nlohmann::json& j, Batch& b);

/// Registers human batches for unknown labels and converts rows to log
/// entries with consecutive sequence numbers starting after the log.
std::vector<Measurement> append_rows(Campaign& c, std::span<const IngestedRow> rows, std::int64_t timestamp_ms);

// ---------------------------------------------------------------------------
// Modelling

/// Model settings actually used: the campaign config with the campaign
/// constraints as the design space when none is set.
strength::StrengthModelConfig effective_model_config(const Campaign& c);
strength::StrengthModel fit_campaign_model(const Campaign& c);

struct Proposal {
  Batch batch;
  std::vector<objectives::ObjectivePosterior> predictions;
  double acquisition_value = 0.0;
  bool degenerate = false;
  nlohmann::json snapshot;  // model used for the proposal
};

/// Fits on all measurements and optimizes the campaign acquisition under the
/// campaign constraints, away from measured mixtures. The batch is not added to `c`.
Proposal propose_batch(const Campaign& c, std::size_t q, std::uint64_t seed);
/// Same with an already fitted model.
Proposal propose_batch(const Campaign& c, const strength::StrengthModel& model, std::size_t q, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Frontiers

struct EmpiricalPoint {
  domain::Mixture mixture;
  std::string batch;
  double strength_mpa = 0.0;  // mean over replicates
  std::size_t replicates = 0;
  double gwp = 0.0;
  bool dominated = false;
};

struct EmpiricalFrontier {
  double age_days = 0.0;
  std::vector<EmpiricalPoint> points;  // every mixture measured at the age
  std::vector<std::size_t> frontier;   // indices of non-dominated points
  double hypervolume = 0.0;            // of (strength, -gwp) above the spec reference
};

/// Frontier over (measured strength at `age_days`, -GWP).
EmpiricalFrontier empirical_pareto(const Campaign& c, double age_days);

/// Hypervolume of the measured objective vectors of mixtures measured at
/// every spec age, against the spec reference point.
double empirical_hypervolume(const Campaign& c);

struct Scenario {
  domain::ConstraintOverrides overrides;
  std::optional<objectives::GwpTable> gwp_table;
  /// Multiplies every GWP coefficient of the (scenario or campaign) table.
  std::optional<double> gwp_scale;
};

/// Constraint override keys (bounds, water_binder, binder_total, linear,
/// exclude) plus optional "gwp_table" and "gwp_scale"; SchemaError when malformed.
Scenario scenario_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const Scenario& s);

struct InferConfig {
  std::size_t candidates = 50000;
  std::uint64_t seed = 0;
};

struct InferredPoint {
  domain::Mixture mixture;
  Eigen::VectorXd mean;  // objectives in spec order
  Eigen::VectorXd sd;    // posterior sd; 0 for -GWP
};

struct InferredFrontier {
  std::vector<InferredPoint> points;                 // joint frontier over all objectives
  std::vector<std::vector<InferredPoint>> by_age;    // (strength at age k, -GWP) frontiers
  double hypervolume = 0.0;
  std::size_t candidates = 0;
  domain::Constraints constraints;  // effective scenario constraints
};

/// Predicted-mean frontier over random feasible mixtures of the scenario.
/// Throws ConstraintError when the scenario is infeasible.
InferredFrontier inferred_pareto(const Campaign& c, const strength::StrengthModel& model, const Scenario& scenario,
                                 const InferConfig& config = {});

nlohmann::json empirical_json(const EmpiricalFrontier& f);
nlohmann::json inferred_json(const InferredFrontier& f, const objectives::ObjectiveSpec& spec);

}  // namespace mixopt::campaign
