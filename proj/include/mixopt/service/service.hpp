#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mixopt/campaign/campaign.hpp"

namespace mixopt::service {

struct ApiError {
  std::string code;
  std::string message;
  nlohmann::json detail;
  bool operator==(const ApiError&) const = default;
};

/// Every response body: {"ok": true, "data": ...} or {"ok": false, "error": {...}}.
struct ApiEnvelope {
  bool ok = true;
  nlohmann::json data;
  std::optional<ApiError> error;

  static ApiEnvelope success(nlohmann::json data);
  static ApiEnvelope failure(std::string code, std::string message, nlohmann::json detail = nullptr);
  bool operator==(const ApiEnvelope&) const = default;
};

void to_json(nlohmann::json& j, const ApiEnvelope& e);
/// SchemaError unless exactly one of data / error is present and consistent with ok.
void from_json(const nlohmann::json& j, ApiEnvelope& e);

struct ServiceOptions {
  std::filesystem::path store_root;
  /// When set, every request needs "Authorization: Bearer <token>".
  std::optional<std::string> bearer_token;
  campaign::InferConfig infer_defaults;
  /// Runs while a proposal job commits its batch (campaign writes are blocked).
  std::function<void(const std::string& campaign_id)> commit_hook;
};

/// HTTP/JSON API under /v1 over a campaign store.
///
///   GET    /v1/health
///   GET    /v1/campaigns
///   POST   /v1/campaigns                          create
///   GET    /v1/campaigns/{id}/state
///   POST   /v1/campaigns/{id}/measurements        CSV (text/csv) or JSON rows
///   POST   /v1/campaigns/{id}/propose             {q, seed} -> job
///   GET    /v1/jobs/{job}
///   DELETE /v1/jobs/{job}                         cancel
///   GET    /v1/campaigns/{id}/pareto?age=28       empirical frontier
///   POST   /v1/campaigns/{id}/pareto/inferred     {scenario, candidates?, seed?}
///
/// Mutating endpoints honour an Idempotency-Key header: a replay returns the
/// original status and body without side effects.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Listens in a background thread; returns the bound port (0 picks one).
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until stop() is called from elsewhere.
  bool run(const std::string& host, int port);
  void stop();
  /// Waits for every background proposal job to finish.
  void wait_for_jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mixopt::service
