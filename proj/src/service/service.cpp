#include "mixopt/service/service.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mixopt/campaign/store.hpp"
#include "mixopt/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mixopt::service {

// ---------------------------------------------------------------------------
// Envelope

ApiEnvelope ApiEnvelope::success(json data) { return {true, std::move(data), std::nullopt}; }

ApiEnvelope ApiEnvelope::failure(std::string code, std::string message, json detail) {
  return {false, nullptr, ApiError{std::move(code), std::move(message), std::move(detail)}};
}

void to_json(json& j, const ApiEnvelope& e) {
  if (e.ok) {
    j = {{"ok", true}, {"data", e.data}};
  } else {
    const auto& err = e.error.value();
    j = {{"ok", false}, {"error", {{"code", err.code}, {"message", err.message}, {"detail", err.detail}}}};
  }
}

void from_json(const json& j, ApiEnvelope& e) {
  if (!j.is_object() || !j.contains("ok") || !j.at("ok").is_boolean()) throw SchemaError("envelope needs a boolean 'ok'");
  const bool has_data = j.contains("data"), has_error = j.contains("error");
  e.ok = j.at("ok").get<bool>();
  if (has_data == has_error || e.ok != has_data) throw SchemaError("envelope must carry exactly one of data/error matching ok");
  if (e.ok) {
    e.data = j.at("data");
    e.error.reset();
  } else {
    const auto& err = j.at("error");
    e.data = nullptr;
    e.error = ApiError{err.at("code").get<std::string>(), err.at("message").get<std::string>(), err.value("detail", json())};
  }
}

// ---------------------------------------------------------------------------

namespace {

struct HttpError : Error {
  HttpError(int status, std::string code, const std::string& message, json detail = nullptr)
      : Error(message), status(status), code(std::move(code)), detail(std::move(detail)) {}
  int status;
  std::string code;
  json detail;
};

HttpError not_found(const std::string& what) { return {404, "not_found", what}; }

struct CampaignState {
  std::mutex write;  // serializes mutations of this campaign
  std::atomic<bool> committing{false};
  std::optional<std::string> running_job;  // guarded by Impl::jobs_mutex
  std::mutex model_mutex;
  std::shared_ptr<const strength::StrengthModel> model;
};

struct Job {
  std::string id;
  std::string campaign;
  json record;  // guarded by Impl::jobs_mutex
  std::atomic<bool> cancel{false};
};

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

json batch_summary(const campaign::Campaign& c, const campaign::Batch& b) {
  std::size_t n = 0;
  for (const auto& m : c.observations) n += (m.batch == b.id);
  return {{"id", b.id},
          {"origin", campaign::to_string(b.origin)},
          {"mixtures", b.mixtures.size()},
          {"measurements", n},
          {"created_ms", b.created_ms},
          {"snapshot_digest", b.snapshot_digest ? json(*b.snapshot_digest) : json(nullptr)}};
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  campaign::CampaignStore store;
  httplib::Server server;
  std::thread listener;

  std::mutex registry_mutex;
  std::map<std::string, std::unique_ptr<CampaignState>> campaigns;

  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::vector<std::thread> workers;
  std::size_t active_jobs = 0;

  explicit Impl(ServiceOptions o) : opts(std::move(o)), store(opts.store_root) { routes(); }

  CampaignState& state_for(const std::string& id) {
    std::lock_guard lock(registry_mutex);
    auto& slot = campaigns[id];
    if (!slot) slot = std::make_unique<CampaignState>();
    return *slot;
  }

  campaign::Campaign load_or_404(const std::string& id) {
    if (id.empty() || id.find('/') != std::string::npos || !store.exists(id)) throw not_found("unknown campaign '" + id + "'");
    return store.load(id);
  }

  static void send(httplib::Response& res, int status, const ApiEnvelope& env) {
    res.status = status;
    res.set_content(json(env).dump(), "application/json");
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw HttpError(400, "malformed_json", std::string("request body is not valid JSON: ") + e.what());
    }
  }

  // Maps library errors to HTTP statuses.
  template <class F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const HttpError& e) {
      send(res, e.status, ApiEnvelope::failure(e.code, e.what(), e.detail));
    } catch (const campaign::RowErrors& e) {
      send(res, 400, ApiEnvelope::failure("row_errors", e.what(), json(e.report())));
    } catch (const SchemaError& e) {
      send(res, 400, ApiEnvelope::failure("schema_error", e.what()));
    } catch (const ValidationError& e) {
      send(res, 400, ApiEnvelope::failure("validation_error", e.what()));
    } catch (const ShapeError& e) {
      send(res, 400, ApiEnvelope::failure("validation_error", e.what()));
    } catch (const ConstraintError& e) {
      send(res, 422, ApiEnvelope::failure("infeasible", e.what(), {{"certificate", e.certificate()}}));
    } catch (const InsufficientDataError& e) {
      send(res, 422, ApiEnvelope::failure("insufficient_data", e.what()));
    } catch (const ConfigurationError& e) {
      send(res, 400, ApiEnvelope::failure("configuration_error", e.what()));
    } catch (const IntegrityError& e) {
      send(res, 500, ApiEnvelope::failure("integrity_error", e.what(), {{"digest", e.digest()}}));
    } catch (const MigrationError& e) {
      send(res, 500, ApiEnvelope::failure("migration_error", e.what()));
    } catch (const json::exception& e) {
      send(res, 400, ApiEnvelope::failure("schema_error", e.what()));
    } catch (const std::exception& e) {
      spdlog::error("request failed: {}", e.what());
      send(res, 500, ApiEnvelope::failure("internal", e.what()));
    }
  }

  // ---- idempotency -------------------------------------------------------

  fs::path idempotency_path(const std::string& scope, const std::string& key) {
    const fs::path dir = opts.store_root / ".idempotency";
    fs::create_directories(dir);
    return dir / (fnv_hex(scope + "\n" + key) + ".json");
  }

  /// Runs `fn` once per Idempotency-Key within `scope`; replays return the stored response.
  void idempotent(const httplib::Request& req, httplib::Response& res, const std::string& scope,
                  const std::function<void()>& fn) {
    const std::string key = req.get_header_value("Idempotency-Key");
    if (key.empty()) {
      fn();
      return;
    }
    const auto path = idempotency_path(scope, key);
    if (fs::exists(path)) {
      std::ifstream in(path);
      const auto saved = json::parse(in);
      if (saved.at("key") == key) {
        res.status = saved.at("status").get<int>();
        res.set_content(saved.at("body").get<std::string>(), "application/json");
        res.set_header("Idempotent-Replay", "true");
        return;
      }
    }
    fn();
    if (res.status < 500) {
      std::ofstream out(path);
      out << json{{"key", key}, {"status", res.status}, {"body", res.body}}.dump();
    }
  }

  // ---- models -----------------------------------------------------------

  std::shared_ptr<const strength::StrengthModel> model_for(const campaign::Campaign& c) {
    auto& cs = state_for(c.id);
    std::lock_guard lock(cs.model_mutex);
    const auto data = c.measured();
    const auto digest = strength::digest(data);
    if (!cs.model || cs.model->training_digest() != digest) {
      cs.model = std::make_shared<const strength::StrengthModel>(store.current_model(c));
    }
    return cs.model;
  }

  // ---- handlers -----------------------------------------------------------

  json state_json(const campaign::Campaign& c) {
    json batches = json::array();
    for (const auto& b : c.batches) batches.push_back(batch_summary(c, b));
    json frontiers = json::object();
    for (double age : c.objective_spec.ages_days) {
      const auto f = campaign::empirical_pareto(c, age);
      std::ostringstream key;
      key << age;
      frontiers[key.str()] = {{"points", f.points.size()}, {"frontier", f.frontier.size()}, {"hypervolume", f.hypervolume}};
    }
    frontiers["joint"] = {{"hypervolume", campaign::empirical_hypervolume(c)}};
    std::optional<std::string> running;
    {
      std::lock_guard lock(jobs_mutex);
      running = state_for(c.id).running_job;
    }
    const auto data = c.measured();
    return {{"id", c.id},
            {"observations", c.observations.size()},
            {"mixtures", strength::distinct_mixtures(data).size()},
            {"batches", batches},
            {"data_digest", strength::digest(data)},
            {"snapshot_digest", c.snapshots.empty() ? json(nullptr) : json(c.snapshots.back().digest)},
            {"frontiers", frontiers},
            {"objective_spec", c.objective_spec},
            {"objectives", c.objective_spec.names()},
            {"constraints", c.constraints},
            {"gwp_table", c.gwp_table.name},
            {"running_job", running ? json(*running) : json(nullptr)}};
  }

  void create_campaign(const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.is_object() || !body.contains("id") || !body.contains("constraints") || !body.contains("gwp_table")) {
      throw HttpError(400, "schema_error", "campaign needs id, constraints and gwp_table");
    }
    const auto id = body.at("id").get<std::string>();
    auto c = campaign::make_campaign(id, domain::constraints_from_json(body.at("constraints")),
                                     body.at("gwp_table").get<objectives::GwpTable>(),
                                     body.contains("objective_spec") ? body.at("objective_spec").get<objectives::ObjectiveSpec>()
                                                                     : objectives::ObjectiveSpec{});
    if (body.contains("model_config")) c.model_config = body.at("model_config").get<strength::StrengthModelConfig>();
    if (body.contains("acquisition")) c.acquisition = body.at("acquisition").get<moo::AcquisitionConfig>();
    auto& cs = state_for(id);
    std::lock_guard lock(cs.write);
    if (store.exists(id)) throw HttpError(409, "conflict", "campaign '" + id + "' already exists");
    store.create(c);
    send(res, 201, ApiEnvelope::success(state_json(c)));
  }

  void post_measurements(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    load_or_404(id);
    bool strict = req.get_param_value("strict") == "true" || req.get_param_value("strict") == "1";
    campaign::IngestResult ingested;
    const auto type = req.get_header_value("Content-Type");
    if (type.rfind("text/csv", 0) == 0) {
      ingested = campaign::ingest_csv_text(req.body, strict);
    } else {
      const auto body = parse_body(req);
      const json* rows = &body;
      if (body.is_object()) {
        if (!body.contains("rows")) throw HttpError(400, "schema_error", "JSON measurements need a 'rows' array");
        strict = strict || body.value("strict", false);
        rows = &body.at("rows");
      }
      ingested = campaign::ingest_json_rows(*rows, strict);
    }
    auto& cs = state_for(id);
    std::unique_lock lock(cs.write, std::defer_lock);
    while (!lock.try_lock()) {
      if (cs.committing.load()) throw HttpError(409, "proposal_committing", "a proposal job is committing; retry shortly");
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    const auto added = store.append(id, ingested.rows);
    json seqs = json::array();
    for (const auto& m : added) seqs.push_back(m.seq);
    send(res, 200, ApiEnvelope::success({{"report", ingested.report}, {"appended", added.size()}, {"seq", seqs}}));
  }

  void start_proposal(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    const auto c = load_or_404(id);
    const auto body = parse_body(req);
    if (!body.is_object()) throw HttpError(400, "schema_error", "proposal request must be an object");
    const auto q = body.value("q", c.acquisition.q);
    const auto seed = body.value("seed", std::uint64_t{0});
    if (q < 1) throw ValidationError("q must be at least 1");
    const auto data = c.measured();
    std::set<double> ages;
    for (const auto& o : data) ages.insert(o.age_days);
    if (data.size() < 2 || ages.size() < 2) {
      throw InsufficientDataError("need at least two measurements at two distinct ages to fit the strength model");
    }

    auto job = std::make_shared<Job>();
    {
      std::lock_guard lock(jobs_mutex);
      auto& cs = state_for(id);
      if (cs.running_job) {
        throw HttpError(409, "job_running", "proposal job " + *cs.running_job + " is still running",
                        {{"job_id", *cs.running_job}});
      }
      std::size_t k = jobs.size() + 1;
      do {
        job->id = id + "-job-" + std::to_string(k++);
      } while (jobs.contains(job->id) || store.read_job(id, job->id));
      job->campaign = id;
      job->record = {{"id", job->id},       {"campaign", id},         {"status", "pending"}, {"q", q},
                     {"seed", seed},        {"created_ms", campaign::now_ms()}, {"data_digest", strength::digest(data)}};
      cs.running_job = job->id;
      jobs[job->id] = job;
      ++active_jobs;
      store.write_job(id, job->id, job->record);
      workers.emplace_back([this, job, q, seed] { run_job(job, q, seed); });
    }
    send(res, 202, ApiEnvelope::success(snapshot(*job)));
  }

  json snapshot(const Job& job) {
    std::lock_guard lock(jobs_mutex);
    return job.record;
  }

  void update(Job& job, const std::function<void(json&)>& edit) {
    json copy;
    {
      std::lock_guard lock(jobs_mutex);
      edit(job.record);
      job.record["updated_ms"] = campaign::now_ms();
      copy = job.record;
    }
    store.write_job(job.campaign, job.id, copy);
  }

  void run_job(const std::shared_ptr<Job>& job, std::size_t q, std::uint64_t seed) {
    auto& cs = state_for(job->campaign);
    try {
      update(*job, [](json& r) { r["status"] = "running"; });
      auto c = store.load(job->campaign);
      const auto model = model_for(c);
      auto proposal = campaign::propose_batch(c, *model, q, seed);
      if (job->cancel.load()) {
        update(*job, [](json& r) { r["status"] = "cancelled"; });
      } else {
        campaign::Batch stored;
        {
          std::lock_guard lock(cs.write);
          cs.committing = true;
          struct Reset {
            std::atomic<bool>& flag;
            ~Reset() { flag = false; }
          } reset{cs.committing};
          if (opts.commit_hook) opts.commit_hook(job->campaign);
          stored = store.commit_proposal(job->campaign, proposal);
          c = store.load(job->campaign);
        }
        json result = {{"batch", stored},
                       {"objectives", c.objective_spec.names()},
                       {"acquisition_value", proposal.acquisition_value},
                       {"degenerate", proposal.degenerate},
                       {"snapshot_digest", proposal.batch.snapshot_digest.value_or("")}};
        update(*job, [&](json& r) {
          r["status"] = "done";
          r["result"] = result;
        });
      }
    } catch (const InsufficientDataError& e) {
      update(*job, [&](json& r) {
        r["status"] = "failed";
        r["error"] = {{"code", "insufficient_data"}, {"message", e.what()}};
      });
    } catch (const std::exception& e) {
      spdlog::error("proposal job {} failed: {}", job->id, e.what());
      update(*job, [&](json& r) {
        r["status"] = "failed";
        r["error"] = {{"code", "job_failed"}, {"message", e.what()}};
      });
    }
    std::lock_guard lock(jobs_mutex);
    cs.running_job.reset();
    --active_jobs;
    jobs_cv.notify_all();
  }

  json find_job(const std::string& job_id) {
    {
      std::lock_guard lock(jobs_mutex);
      if (const auto it = jobs.find(job_id); it != jobs.end()) return it->second->record;
    }
    // Jobs from earlier service runs live in the store.
    for (const auto& id : store.list()) {
      if (job_id.rfind(id + "-job-", 0) != 0) continue;
      if (auto j = store.read_job(id, job_id)) return *j;
    }
    throw not_found("unknown job '" + job_id + "'");
  }

  void cancel_job(const std::string& job_id, httplib::Response& res) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(jobs_mutex);
      if (const auto it = jobs.find(job_id); it != jobs.end()) job = it->second;
    }
    const auto status = job ? snapshot(*job).at("status").get<std::string>() : find_job(job_id).at("status").get<std::string>();
    if (status != "pending" && status != "running") {
      throw HttpError(409, "job_finished", "job '" + job_id + "' is already " + status);
    }
    if (!job) throw HttpError(409, "job_orphaned", "job '" + job_id + "' belongs to an earlier service process");
    job->cancel = true;
    send(res, 202, ApiEnvelope::success(snapshot(*job)));
  }

  void empirical(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    const auto c = load_or_404(id);
    double age = c.objective_spec.ages_days.back();
    if (req.has_param("age")) {
      try {
        age = std::stod(req.get_param_value("age"));
      } catch (const std::exception&) {
        throw HttpError(400, "validation_error", "age must be a number");
      }
    }
    send(res, 200, ApiEnvelope::success(campaign::empirical_json(campaign::empirical_pareto(c, age))));
  }

  void inferred(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    const auto c = load_or_404(id);
    const auto body = parse_body(req);
    if (!body.is_object()) throw HttpError(400, "schema_error", "inferred-frontier request must be an object");
    auto cfg = opts.infer_defaults;
    json scenario_json = json::object();
    for (const auto& [key, value] : body.items()) {
      if (key == "candidates") {
        cfg.candidates = value.get<std::size_t>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "scenario") {
        scenario_json = value;
      } else {
        throw HttpError(400, "schema_error", "unknown request field '" + key + "'");
      }
    }
    const auto scenario = campaign::scenario_from_json(scenario_json);
    const auto model = model_for(c);
    auto out = campaign::inferred_json(campaign::inferred_pareto(c, *model, scenario, cfg), c.objective_spec);
    out["scenario"] = scenario_json;
    out["seed"] = cfg.seed;
    out["snapshot_digest"] = model->training_digest();
    send(res, 200, ApiEnvelope::success(out));
  }

  void routes() {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!opts.bearer_token) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + *opts.bearer_token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send(res, 401, ApiEnvelope::failure("unauthorized", "missing or invalid bearer token"));
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send(res, res.status, ApiEnvelope::failure(res.status == 404 ? "not_found" : "http_error", "no such endpoint"));
    });

    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, ApiEnvelope::success({{"status", "ok"}}));
    });
    server.Get("/v1/campaigns", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, ApiEnvelope::success(store.list())); });
    });
    server.Post("/v1/campaigns", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { idempotent(req, res, "create", [&] { guarded(res, [&] { create_campaign(req, res); }); }); });
    });
    server.Get(R"(/v1/campaigns/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, ApiEnvelope::success(state_json(load_or_404(req.matches[1])))); });
    });
    server.Post(R"(/v1/campaigns/([^/]+)/measurements)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, [&] {
        idempotent(req, res, "measurements/" + id, [&] { guarded(res, [&] { post_measurements(id, req, res); }); });
      });
    });
    server.Post(R"(/v1/campaigns/([^/]+)/propose)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      guarded(res, [&] { idempotent(req, res, "propose/" + id, [&] { guarded(res, [&] { start_proposal(id, req, res); }); }); });
    });
    server.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, ApiEnvelope::success(find_job(req.matches[1]))); });
    });
    server.Delete(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { cancel_job(req.matches[1], res); });
    });
    server.Get(R"(/v1/campaigns/([^/]+)/pareto)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { empirical(req.matches[1], req, res); });
    });
    server.Post(R"(/v1/campaigns/([^/]+)/pareto/inferred)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { inferred(req.matches[1], req, res); });
    });
  }

  void wait_for_jobs() {
    std::unique_lock lock(jobs_mutex);
    jobs_cv.wait(lock, [&] { return active_jobs == 0; });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() {
  stop();
  impl_->wait_for_jobs();
  for (auto& t : impl_->workers) {
    if (t.joinable()) t.join();
  }
}

int Service::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool Service::run(const std::string& host, int port) { return impl_->server.listen(host, port); }

void Service::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::wait_for_jobs() { impl_->wait_for_jobs(); }

}  // namespace mixopt::service
