#include "mixopt/campaign/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mixopt/errors.hpp"

namespace fs = std::filesystem;

namespace mixopt::campaign {

namespace {

const char* kMetadata = "campaign.json";
const char* kLog = "observations.jsonl";
const char* kLockFile = ".lock";

class FileLock {
 public:
  FileLock(const fs::path& path, bool exclusive) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
      ::close(fd_);
      throw Error("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Write to a sibling temp file and rename over the target.
void atomic_write(const fs::path& p, const std::string& text) {
  std::ostringstream tmp_name;
  tmp_name << p.filename().string() << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = p.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::vector<Measurement> read_log(const fs::path& p) {
  std::vector<Measurement> out;
  if (!fs::exists(p)) return out;
  std::ifstream in(p);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Measurement>());
    } catch (const std::exception& e) {
      throw IntegrityError("observation log " + p.string() + " line " + std::to_string(line_no) + " is malformed: " + e.what(),
                           "");
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Measurement& a, const Measurement& b) {
    return a.timestamp_ms != b.timestamp_ms ? a.timestamp_ms < b.timestamp_ms : a.seq < b.seq;
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].seq != i) throw IntegrityError("observation log " + p.string() + " has a gap or duplicate at seq " + std::to_string(i), "");
  }
  return out;
}

void append_log(const fs::path& p, std::span<const Measurement> entries) {
  if (entries.empty()) return;
  std::string text;
  for (const auto& m : entries) text += nlohmann::json(m).dump() + "\n";
  std::ofstream out(p, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + p.string());
  out << text;
  out.flush();
  if (!out) throw Error("short write to " + p.string());
}

}  // namespace

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

CampaignStore::CampaignStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path CampaignStore::dir(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..") {
    throw ValidationError("invalid campaign id '" + id + "'");
  }
  return root_ / id;
}

bool CampaignStore::exists(const std::string& id) const { return fs::exists(dir(id) / kMetadata); }

std::vector<std::string> CampaignStore::list() const {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (e.is_directory() && fs::exists(e.path() / kMetadata)) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void CampaignStore::create(const Campaign& c) {
  const auto d = dir(c.id);
  fs::create_directories(d / "snapshots");
  fs::create_directories(d / "jobs");
  FileLock lock(d / kLockFile, true);
  if (fs::exists(d / kMetadata)) throw ConfigurationError("campaign '" + c.id + "' already exists");
  append_log(d / kLog, c.observations);
  atomic_write(d / kMetadata, metadata_to_json(c).dump(2));
}

namespace {

Campaign load_unlocked(const fs::path& d, const std::string& id) {
  if (!fs::exists(d / kMetadata)) throw ConfigurationError("unknown campaign '" + id + "'");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(d / kMetadata));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("campaign metadata for '" + id + "' is corrupt: " + e.what(), "");
  }
  Campaign c = campaign_from_metadata(meta);
  c.observations = read_log(d / kLog);
  return c;
}

}  // namespace

Campaign CampaignStore::load(const std::string& id) const {
  const auto d = dir(id);
  if (!fs::exists(d / kMetadata)) throw ConfigurationError("unknown campaign '" + id + "'");
  FileLock lock(d / kLockFile, false);
  return load_unlocked(d, id);
}

void CampaignStore::save(const Campaign& c) {
  const auto d = dir(c.id);
  fs::create_directories(d / "snapshots");
  fs::create_directories(d / "jobs");
  FileLock lock(d / kLockFile, true);
  const auto logged = read_log(d / kLog);
  if (logged.size() > c.observations.size() ||
      !std::equal(logged.begin(), logged.end(), c.observations.begin())) {
    throw IntegrityError("saving campaign '" + c.id + "' would alter its append-only observation log", "");
  }
  append_log(d / kLog, std::span(c.observations).subspan(logged.size()));
  atomic_write(d / kMetadata, metadata_to_json(c).dump(2));
}

std::vector<Measurement> CampaignStore::append(const std::string& id, std::span<const IngestedRow> rows) {
  const auto d = dir(id);
  FileLock lock(d / kLockFile, true);
  Campaign c = load_unlocked(d, id);
  std::int64_t ts = now_ms();
  if (!c.observations.empty()) ts = std::max(ts, c.observations.back().timestamp_ms);
  const auto batches_before = c.batches;
  auto added = append_rows(c, rows, ts);
  append_log(d / kLog, added);
  if (c.batches != batches_before) atomic_write(d / kMetadata, metadata_to_json(c).dump(2));
  return added;
}

Batch CampaignStore::add_batch(const std::string& id, Batch batch) {
  const auto d = dir(id);
  FileLock lock(d / kLockFile, true);
  Campaign c = load_unlocked(d, id);
  if (batch.id.empty()) batch.id = c.next_batch_id(batch.origin);
  if (c.find_batch(batch.id)) throw ConfigurationError("batch '" + batch.id + "' already exists");
  batch.created_ms = now_ms();
  c.batches.push_back(batch);
  atomic_write(d / kMetadata, metadata_to_json(c).dump(2));
  return batch;
}

Batch CampaignStore::commit_proposal(const std::string& id, const Proposal& proposal) {
  write_snapshot(id, proposal.snapshot);
  const auto c = load(id);
  for (const auto& b : c.batches) {
    if (b.origin == Origin::ai && b.mixtures == proposal.batch.mixtures && b.snapshot_digest == proposal.batch.snapshot_digest) {
      return b;
    }
  }
  auto batch = proposal.batch;
  batch.id.clear();
  return add_batch(id, std::move(batch));
}

SnapshotRef CampaignStore::write_snapshot(const std::string& id, const nlohmann::json& snapshot) {
  const auto d = dir(id);
  const auto digest = snapshot.at("training_digest").get<std::string>();
  FileLock lock(d / kLockFile, true);
  fs::create_directories(d / "snapshots");
  atomic_write(d / "snapshots" / (digest + ".json"), snapshot.dump());
  Campaign c = load_unlocked(d, id);
  SnapshotRef ref{digest, snapshot.at("n_training").get<std::size_t>(), now_ms()};
  std::erase_if(c.snapshots, [&](const SnapshotRef& s) { return s.digest == digest; });
  c.snapshots.push_back(ref);
  atomic_write(d / kMetadata, metadata_to_json(c).dump(2));
  return ref;
}

nlohmann::json CampaignStore::read_snapshot(const std::string& id, const std::string& digest) const {
  const auto p = dir(id) / "snapshots" / (digest + ".json");
  if (!fs::exists(p)) throw IntegrityError("model snapshot " + digest + " is missing", digest);
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const std::exception& e) {
    throw IntegrityError("model snapshot " + digest + " is unreadable: " + e.what(), digest);
  }
}

strength::StrengthModel CampaignStore::current_model(const Campaign& c, bool* restored) const {
  const auto data = c.measured();
  const auto want = strength::digest(data);
  if (restored) *restored = false;
  for (auto it = c.snapshots.rbegin(); it != c.snapshots.rend(); ++it) {
    if (it->digest != want) continue;
    try {
      auto model = strength::StrengthModel::restore(read_snapshot(c.id, it->digest), data);
      if (restored) *restored = true;
      return model;
    } catch (const IntegrityError& e) {
      spdlog::warn("{}; refitting", e.what());
    }
    break;
  }
  return fit_campaign_model(c);
}

void CampaignStore::write_job(const std::string& id, const std::string& job_id, const nlohmann::json& job) {
  const auto d = dir(id) / "jobs";
  fs::create_directories(d);
  atomic_write(d / (job_id + ".json"), job.dump(2));
}

std::optional<nlohmann::json> CampaignStore::read_job(const std::string& id, const std::string& job_id) const {
  const auto p = dir(id) / "jobs" / (job_id + ".json");
  if (!fs::exists(p)) return std::nullopt;
  return nlohmann::json::parse(read_file(p));
}

}  // namespace mixopt::campaign
