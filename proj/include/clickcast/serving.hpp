#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "clickcast/frozen.hpp"

namespace clickcast {

using Clock = std::function<int64_t()>;  // wall time in ms

inline int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct EventStoreConfig {
  int64_t ttl_seconds = 3 * 24 * 3600;  // aged out after a few days
  size_t max_events_per_user = 200;
  std::set<EventType> allowed_types = {EventType::page, EventType::click, EventType::scroll,
                                       EventType::positive, EventType::prediction_point};
};

// Recent-event store contract: append keeps only allowed types and the
// most recent max_events_per_user events per user; recent() returns
// time-ordered events younger than the TTL.
class EventStore {
public:
  virtual ~EventStore() = default;
  virtual void append(const Event& e) = 0;
  virtual std::vector<Event> recent(const std::string& anonymous_id, size_t limit,
                                    const std::set<EventType>* allowed_types = nullptr) const = 0;
  virtual const EventStoreConfig& config() const = 0;
};

// Per-user ring buffers guarded by one mutex; plenty for a single node.
class InMemoryEventStore : public EventStore {
public:
  explicit InMemoryEventStore(EventStoreConfig config = {}, Clock clock = system_now_ms)
      : config_(std::move(config)), clock_(std::move(clock)) {}

  void append(const Event& e) override {
    if (!config_.allowed_types.count(e.type)) return;
    std::lock_guard<std::mutex> lock(mutex_);
    auto& ring = users_[e.anonymous_id];
    // keep the ring time-ordered under slightly out-of-order arrivals
    auto it = ring.end();
    while (it != ring.begin() && std::prev(it)->timestamp > e.timestamp) --it;
    ring.insert(it, e);
    while (ring.size() > config_.max_events_per_user) ring.pop_front();
  }

  std::vector<Event> recent(const std::string& anonymous_id, size_t limit,
                            const std::set<EventType>* allowed_types = nullptr) const override {
    int64_t cutoff = clock_() - config_.ttl_seconds * 1000;
    std::vector<Event> out;
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = users_.find(anonymous_id);
    if (it == users_.end()) return out;
    for (auto rit = it->second.rbegin(); rit != it->second.rend() && out.size() < limit; ++rit) {
      if (rit->timestamp < cutoff) break;  // older entries only get older
      if (allowed_types && !allowed_types->count(rit->type)) continue;
      out.push_back(*rit);
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  const EventStoreConfig& config() const override { return config_; }

private:
  EventStoreConfig config_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<Event>> users_;
};

// The one code path both training-time verification and live serving use:
// shared instance shaping, shared encoding, shared forward pass, shared
// calibration. Returns the positive-class probability.
inline double serve_value(const TrainedModel& model, const std::vector<Event>& recent_events) {
  Instance instance = build_model_instance(recent_events, model.encoder,
                                           static_cast<size_t>(model.config.seq_len));
  EncodedInstance encoded = encode_instance(instance, model.encoder);
  ForwardResult result = forward(encoded, model.params, model.config);
  Probs2 probs =
      model.calibration ? apply_matrix_scaling(result.logits, *model.calibration) : result.probs;
  return probs[1];
}

// Atomic active-version swap per family; readers hold shared_ptr copies,
// so in-flight predictions finish on the version they started with.
class ModelRegistry {
public:
  std::string load_model(std::vector<uint8_t> bytes, bool activate = true) {
    auto model = std::make_shared<const TrainedModel>(deserialize_model(bytes));
    std::lock_guard<std::mutex> lock(mutex_);
    auto& family = families_[model->family_id];
    family.versions[model->version_id] = model;
    if (activate || family.active.empty()) family.active = model->version_id;
    return model->version_id;
  }

  void add_model(TrainedModel model, bool activate = true) {
    auto shared = std::make_shared<const TrainedModel>(std::move(model));
    std::lock_guard<std::mutex> lock(mutex_);
    auto& family = families_[shared->family_id];
    family.versions[shared->version_id] = shared;
    if (activate || family.active.empty()) family.active = shared->version_id;
  }

  void activate_version(const std::string& family_id, const std::string& version_id) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto fit = families_.find(family_id);
    if (fit == families_.end()) throw NotFoundError("unknown model family: " + family_id);
    if (!fit->second.versions.count(version_id))
      throw NotFoundError("unknown version " + version_id + " for family " + family_id);
    fit->second.active = version_id;
  }

  std::shared_ptr<const TrainedModel> active(const std::string& family_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto fit = families_.find(family_id);
    if (fit == families_.end() || fit->second.active.empty())
      throw NotFoundError("no active model for family: " + family_id);
    return fit->second.versions.at(fit->second.active);
  }

  bool has_version(const std::string& family_id, const std::string& version_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto fit = families_.find(family_id);
    return fit != families_.end() && fit->second.versions.count(version_id) > 0;
  }

  std::vector<std::string> families() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, _] : families_) out.push_back(name);
    return out;
  }

private:
  struct Family {
    std::map<std::string, std::shared_ptr<const TrainedModel>> versions;
    std::string active;
  };
  mutable std::mutex mutex_;
  std::map<std::string, Family> families_;
};

struct PredictionLogRecord {
  int64_t wall_timestamp = 0;
  std::string anonymous_id;
  std::string family_id;
  std::string version_id;
  std::vector<int64_t> event_timestamps;  // identifies the events used
  double value = 0.0;
  bool calibrated = false;
  bool cold_start = false;
};

inline json prediction_record_to_json(const PredictionLogRecord& r) {
  return json{{"wallTimestamp", r.wall_timestamp},
              {"anonymousId", r.anonymous_id},
              {"familyId", r.family_id},
              {"versionId", r.version_id},
              {"eventTimestamps", r.event_timestamps},
              {"value", r.value},
              {"calibrated", r.calibrated},
              {"coldStart", r.cold_start}};
}

inline PredictionLogRecord prediction_record_from_json(const json& j) {
  PredictionLogRecord r;
  r.wall_timestamp = j.at("wallTimestamp").get<int64_t>();
  r.anonymous_id = j.at("anonymousId").get<std::string>();
  r.family_id = j.at("familyId").get<std::string>();
  r.version_id = j.at("versionId").get<std::string>();
  r.event_timestamps = j.value("eventTimestamps", std::vector<int64_t>{});
  r.value = j.at("value").get<double>();
  r.calibrated = j.value("calibrated", false);
  r.cold_start = j.value("coldStart", false);
  return r;
}

// Append-only newline-delimited log, rotated by size: the live file is
// <path>, rotated segments are <path>.1, <path>.2, ... oldest first.
class PredictionLog {
public:
  explicit PredictionLog(std::string path, size_t max_bytes = 64 * 1024 * 1024)
      : path_(std::move(path)), max_bytes_(max_bytes) {}

  void append(const PredictionLogRecord& record) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string line = prediction_record_to_json(record).dump();
    namespace fs = std::filesystem;
    std::error_code ec;
    auto size = fs::file_size(path_, ec);
    if (!ec && size + line.size() + 1 > max_bytes_) rotate();
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to prediction log: " + path_);
    out << line << '\n';
  }

  std::vector<PredictionLogRecord> read_all() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<PredictionLogRecord> out;
    namespace fs = std::filesystem;
    std::vector<std::string> segments;
    for (int i = 1; fs::exists(path_ + "." + std::to_string(i)); ++i)
      segments.push_back(path_ + "." + std::to_string(i));
    segments.push_back(path_);
    for (const auto& seg : segments) {
      std::ifstream in(seg);
      if (!in) continue;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(prediction_record_from_json(json::parse(line)));
      }
    }
    return out;
  }

  const std::string& path() const { return path_; }

private:
  void rotate() {
    namespace fs = std::filesystem;
    int next = 1;
    while (fs::exists(path_ + "." + std::to_string(next))) ++next;
    std::error_code ec;
    fs::rename(path_, path_ + "." + std::to_string(next), ec);
    if (ec) throw IoError("prediction log rotation failed: " + ec.message());
  }

  std::string path_;
  size_t max_bytes_;
  mutable std::mutex mutex_;
};

struct IngestAck {
  int64_t accepted = 0;
  int64_t rejected = 0;
};

struct PredictResponse {
  double value = 0.0;
  std::string version_id;
  bool cold_start = false;
};

// Ties ingestion fan-out, the recent-event store, the registry, and the
// prediction log together behind the REST surface.
class PredictionService {
public:
  PredictionService(ModelRegistry& registry, EventStore& store, std::string archive_path,
                    PredictionLog& log, Clock clock = system_now_ms)
      : registry_(registry),
        store_(store),
        archive_path_(std::move(archive_path)),
        log_(log),
        clock_(std::move(clock)) {}

  // Every event goes to the archive sink and, type permitting, the store.
  // Malformed events are counted, never fatal for the batch.
  IngestAck ingest(const json& batch) {
    if (!batch.is_array()) throw MalformedEventError("ingest body must be an array of events");
    IngestAck ack;
    std::lock_guard<std::mutex> lock(archive_mutex_);
    std::ofstream out(archive_path_, std::ios::app);
    if (!out) throw IoError("archive sink unavailable: " + archive_path_);
    for (const auto& raw : batch) {
      try {
        Event e = preprocess_event(raw);
        append_archive_line(out, e);
        if (!out) throw IoError("archive sink write failed");
        store_.append(e);
        ++ack.accepted;
      } catch (const MalformedEventError&) {
        ++ack.rejected;
      }
    }
    return ack;
  }

  PredictResponse handle_predict(const std::string& family_id, const std::string& anonymous_id) {
    auto model = registry_.active(family_id);  // NotFoundError if none
    auto events =
        store_.recent(anonymous_id, static_cast<size_t>(model->config.seq_len), nullptr);

    PredictResponse resp;
    resp.cold_start = events.empty();
    resp.value = serve_value(*model, events);
    resp.version_id = model->version_id;

    PredictionLogRecord record;
    record.wall_timestamp = clock_();
    record.anonymous_id = anonymous_id;
    record.family_id = family_id;
    record.version_id = model->version_id;
    for (const auto& e : events) record.event_timestamps.push_back(e.timestamp);
    record.value = resp.value;
    record.calibrated = model->calibration.has_value();
    record.cold_start = resp.cold_start;
    log_.append(record);
    return resp;
  }

  ModelRegistry& registry() { return registry_; }
  EventStore& store() { return store_; }

private:
  ModelRegistry& registry_;
  EventStore& store_;
  std::string archive_path_;
  std::mutex archive_mutex_;
  PredictionLog& log_;
  Clock clock_;
};

}  // namespace clickcast
