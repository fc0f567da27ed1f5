#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixopt/campaign/campaign.hpp"

namespace mixopt::campaign {

std::int64_t now_ms();

/// Directory store. Per campaign:
///   campaign.json          metadata (format_version, config, batches, snapshot refs)
///   observations.jsonl     append-only measurement log
///   snapshots/<digest>.json
///   jobs/<job id>.json
/// Mutations hold an exclusive flock on the campaign's lock file.
class CampaignStore {
 public:
  explicit CampaignStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path dir(const std::string& id) const;
  bool exists(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Fails with ConfigurationError if the id is taken.
  void create(const Campaign& c);
  /// MigrationError on a format version mismatch, IntegrityError on a corrupt log.
  Campaign load(const std::string& id) const;
  /// Rewrites the metadata and appends log entries the file does not have yet.
  /// IntegrityError if `c` would drop or alter logged measurements.
  void save(const Campaign& c);

  /// Appends rows under the lock (timestamps assigned here) and returns the new entries.
  std::vector<Measurement> append(const std::string& id, std::span<const IngestedRow> rows);
  /// Adds a batch under the lock. Returns the stored batch (id assigned if empty).
  Batch add_batch(const std::string& id, Batch batch);

  /// Persists the proposal's model snapshot and its batch. An AI batch with the
  /// same mixtures and snapshot is reused instead of recorded twice.
  Batch commit_proposal(const std::string& id, const Proposal& proposal);

  SnapshotRef write_snapshot(const std::string& id, const nlohmann::json& snapshot);
  /// IntegrityError naming the digest when missing or unreadable.
  nlohmann::json read_snapshot(const std::string& id, const std::string& digest) const;
  /// Latest snapshot matching the current measurements, else a fresh fit.
  strength::StrengthModel current_model(const Campaign& c, bool* restored = nullptr) const;

  void write_job(const std::string& id, const std::string& job_id, const nlohmann::json& job);
  std::optional<nlohmann::json> read_job(const std::string& id, const std::string& job_id) const;

 private:
  std::filesystem::path root_;
};

}  // namespace mixopt::campaign
