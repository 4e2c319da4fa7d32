#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clickcast/pipeline.hpp"
#include "clickcast/serving.hpp"

namespace clickcast {

namespace fs = std::filesystem;

// One example saved at training time with the prediction value the
// serving path must reproduce bit-for-bit.
struct VerificationExample {
  std::string anonymous_id;
  std::vector<Event> events;  // pre-instance event slice, as serving would see it
  double expected_value = 0.0;
};

inline json verification_example_to_json(const VerificationExample& v) {
  json events = json::array();
  for (const auto& e : v.events) events.push_back(event_to_json(e));
  uint64_t bits;
  std::memcpy(&bits, &v.expected_value, 8);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, bits);
  return json{{"anonymousId", v.anonymous_id},
              {"events", events},
              {"expectedValue", v.expected_value},
              {"expectedValueBits", std::string(buf)}};
}

inline VerificationExample verification_example_from_json(const json& j) {
  VerificationExample v;
  v.anonymous_id = j.at("anonymousId").get<std::string>();
  for (const auto& e : j.at("events")) v.events.push_back(preprocess_event(e));
  uint64_t bits = std::stoull(j.at("expectedValueBits").get<std::string>(), nullptr, 16);
  std::memcpy(&v.expected_value, &bits, 8);
  return v;
}

// Directory-backed, append-only model archive:
//   <root>/<family>/<version>/model.bin | stats.json | verification.jsonl
//   <root>/<family>/ACTIVE
class ModelArchive {
public:
  explicit ModelArchive(std::string root) : root_(std::move(root)) { fs::create_directories(root_); }

  std::string next_version_id(const std::string& family_id) const {
    int highest = 0;
    fs::path dir = fs::path(root_) / family_id;
    if (fs::exists(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 1 && name[0] == 'v') highest = std::max(highest, std::atoi(name.c_str() + 1));
      }
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%04d", highest + 1);
    return buf;
  }

  void save_version(const TrainedModel& model, const std::vector<VerificationExample>& verification) {
    fs::path dir = version_dir(model.family_id, model.version_id);
    if (fs::exists(dir)) throw IoError("archive version already exists: " + dir.string());
    fs::create_directories(dir);
    write_model_file((dir / "model.bin").string(), model);
    std::ofstream stats(dir / "stats.json", std::ios::trunc);
    stats << training_stats_to_json(model.stats).dump(2) << '\n';
    std::ofstream ver(dir / "verification.jsonl", std::ios::trunc);
    for (const auto& v : verification) ver << verification_example_to_json(v).dump() << '\n';
    if (!stats || !ver) throw IoError("archive write failed under " + dir.string());
  }

  std::vector<uint8_t> read_version_bytes(const std::string& family_id,
                                          const std::string& version_id) const {
    fs::path file = version_dir(family_id, version_id) / "model.bin";
    if (!fs::exists(file)) throw NotFoundError("no archived model " + family_id + "/" + version_id);
    return read_file_bytes(file.string());
  }

  TrainedModel load_version(const std::string& family_id, const std::string& version_id) const {
    return deserialize_model(read_version_bytes(family_id, version_id));
  }

  std::vector<VerificationExample> load_verification(const std::string& family_id,
                                                     const std::string& version_id) const {
    fs::path file = version_dir(family_id, version_id) / "verification.jsonl";
    if (!fs::exists(file)) throw NotFoundError("no verification file for " + version_id);
    std::ifstream in(file);
    std::vector<VerificationExample> out;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) out.push_back(verification_example_from_json(json::parse(line)));
    }
    return out;
  }

  TrainingStats load_stats(const std::string& family_id, const std::string& version_id) const {
    fs::path file = version_dir(family_id, version_id) / "stats.json";
    if (!fs::exists(file)) throw NotFoundError("no stats file for " + version_id);
    std::ifstream in(file);
    return training_stats_from_json(json::parse(in));
  }

  std::vector<std::string> versions(const std::string& family_id) const {
    std::vector<std::string> out;
    fs::path dir = fs::path(root_) / family_id;
    if (!fs::exists(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory()) out.push_back(entry.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<std::string> active_version(const std::string& family_id) const {
    fs::path file = fs::path(root_) / family_id / "ACTIVE";
    if (!fs::exists(file)) return std::nullopt;
    std::ifstream in(file);
    std::string version;
    in >> version;
    if (version.empty()) return std::nullopt;
    return version;
  }

  void set_active(const std::string& family_id, const std::string& version_id) {
    if (!fs::exists(version_dir(family_id, version_id)))
      throw NotFoundError("cannot activate unknown version " + version_id);
    fs::path dir = fs::path(root_) / family_id;
    fs::create_directories(dir);
    fs::path tmp = dir / "ACTIVE.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << version_id << '\n';
      if (!out) throw IoError("cannot write ACTIVE pointer");
    }
    fs::rename(tmp, dir / "ACTIVE");  // atomic swap on POSIX
  }

  std::vector<std::string> families() const {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(root_)) {
      if (entry.is_directory()) out.push_back(entry.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  const std::string& root() const { return root_; }

private:
  fs::path version_dir(const std::string& family_id, const std::string& version_id) const {
    return fs::path(root_) / family_id / version_id;
  }

  std::string root_;
};

struct RetrainPolicy {
  int window_days = 28;  // valid range 7..60
  size_t min_examples = 100;
  double auc_tolerance = 0.01;
  size_t verification_sample_size = 1000;
  int schedule_period_days = 7;

  void validate() const {
    if (window_days < 7 || window_days > 60) throw ConfigError("window_days must be in [7, 60]");
    if (auc_tolerance < 0.0) throw ConfigError("auc_tolerance must be >= 0");
  }
};

enum class RetrainStatus { deployed, rejected_validation, rejected_verification, failed };

struct RetrainOutcome {
  RetrainStatus status = RetrainStatus::failed;
  std::string reason;
  std::string version_id;
  double candidate_auc = 0.0;
  double previous_auc = 0.0;
};

inline const char* to_string(RetrainStatus s) {
  switch (s) {
    case RetrainStatus::deployed: return "deployed";
    case RetrainStatus::rejected_validation: return "rejected(validation)";
    case RetrainStatus::rejected_verification: return "rejected(verification)";
    case RetrainStatus::failed: return "failed";
  }
  return "failed";
}

// Draws the seeded verification sample and records the serving-path value
// for each entry. events are the pre-cut slices the generator produced.
inline std::vector<VerificationExample> build_verification_set(
    const TrainedModel& model, const std::vector<std::vector<Event>>& example_events,
    const std::vector<std::string>& anonymous_ids, size_t sample_size, uint64_t seed) {
  std::vector<size_t> order(example_events.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(std::min(sample_size, order.size()));
  std::sort(order.begin(), order.end());

  std::vector<VerificationExample> out;
  out.reserve(order.size());
  for (size_t idx : order) {
    VerificationExample v;
    v.anonymous_id = anonymous_ids[idx];
    v.events = example_events[idx];
    v.expected_value = serve_value(model, v.events);
    out.push_back(std::move(v));
  }
  return out;
}

struct VerificationResult {
  bool passed = true;
  size_t checked = 0;
  size_t first_mismatch = 0;
  std::string mismatch_anonymous_id;
  double expected = 0.0, actual = 0.0;
};

// Replays every saved example through the serving path and demands
// bit-exact equality with the training-time value.
inline VerificationResult verify_model(const TrainedModel& model,
                                       const std::vector<VerificationExample>& examples) {
  VerificationResult result;
  for (size_t i = 0; i < examples.size(); ++i) {
    double served = serve_value(model, examples[i].events);
    ++result.checked;
    uint64_t a, b;
    std::memcpy(&a, &served, 8);
    std::memcpy(&b, &examples[i].expected_value, 8);
    if (a != b) {
      result.passed = false;
      result.first_mismatch = i;
      result.mismatch_anonymous_id = examples[i].anonymous_id;
      result.expected = examples[i].expected_value;
      result.actual = served;
      return result;
    }
  }
  return result;
}

// Fault-injection points used by tests; production runs leave them empty.
struct RetrainHooks {
  std::function<void(Dataset&)> transform_dataset;
  std::function<void(TrainedModel&)> corrupt_loaded_model;
};

inline RetrainPolicy policy_from(const LifecycleConfig& cfg) {
  RetrainPolicy p;
  p.window_days = cfg.window_days;
  p.min_examples = cfg.min_examples;
  p.auc_tolerance = cfg.auc_tolerance;
  p.verification_sample_size = cfg.verification_sample_size;
  p.schedule_period_days = cfg.schedule_period_days;
  p.validate();
  return p;
}

// Retrain -> validate -> archive -> verify -> deploy. Any failed step
// leaves the previously active version deployed; versions rejected at
// verification stay archived but inactive.
inline RetrainOutcome retrain_cycle(const AppConfig& cfg, ModelArchive& archive,
                                    ModelRegistry* registry = nullptr, Clock now = system_now_ms,
                                    const RetrainHooks& hooks = {}) {
  const std::string& family = cfg.lifecycle.family_id;
  RetrainPolicy policy = policy_from(cfg.lifecycle);
  RetrainOutcome outcome;

  // (1) retrain on the rolling window
  Dataset dataset;
  try {
    std::vector<Event> events = read_archive(cfg.events_path());
    int64_t cutoff = now() - static_cast<int64_t>(policy.window_days) * 86400000;
    std::erase_if(events, [cutoff](const Event& e) { return e.timestamp < cutoff; });
    dataset = build_dataset(std::move(events), cfg);
  } catch (const std::exception& e) {
    outcome.status = RetrainStatus::failed;
    outcome.reason = std::string("insufficient_data: ") + e.what();
    return outcome;
  }
  if (hooks.transform_dataset) hooks.transform_dataset(dataset);

  int64_t positives = 0;
  for (const auto& r : dataset.rows) positives += r.label;
  if (dataset.rows.size() < policy.min_examples || positives == 0 ||
      positives == static_cast<int64_t>(dataset.rows.size())) {
    outcome.status = RetrainStatus::failed;
    outcome.reason = "insufficient_data: " + std::to_string(dataset.rows.size()) + " examples, " +
                     std::to_string(positives) + " positive";
    return outcome;
  }

  std::string version_id = archive.next_version_id(family);
  TrainedModel candidate;
  try {
    candidate = train_candidate(dataset, cfg, family, version_id);
  } catch (const std::exception& e) {
    outcome.status = RetrainStatus::failed;
    outcome.reason = std::string("training: ") + e.what();
    return outcome;
  }
  outcome.version_id = version_id;
  outcome.candidate_auc = candidate.stats.val_auc;

  // (2) validate against the previous active version
  if (auto previous = archive.active_version(family)) {
    double previous_auc = archive.load_stats(family, *previous).val_auc;
    outcome.previous_auc = previous_auc;
    if (candidate.stats.val_auc < previous_auc - policy.auc_tolerance) {
      outcome.status = RetrainStatus::rejected_validation;
      outcome.reason = "candidate AUC " + std::to_string(candidate.stats.val_auc) +
                       " below previous " + std::to_string(previous_auc) + " - tolerance";
      return outcome;
    }
  }

  // (3) archive model, stats, and the seeded verification sample
  std::vector<std::vector<Event>> slices;
  std::vector<std::string> ids;
  slices.reserve(dataset.rows.size());
  ids.reserve(dataset.rows.size());
  for (const auto& r : dataset.rows) {
    slices.push_back(r.source_events);
    ids.push_back(r.anonymous_id);
  }
  auto verification = build_verification_set(candidate, slices, ids, policy.verification_sample_size,
                                             derive_seed(cfg.seed, 0x7e81f));
  archive.save_version(candidate, verification);

  // (4) verify the archived bytes through the serving path
  TrainedModel loaded = archive.load_version(family, version_id);
  if (hooks.corrupt_loaded_model) hooks.corrupt_loaded_model(loaded);
  auto verdict = verify_model(loaded, archive.load_verification(family, version_id));
  if (!verdict.passed) {
    outcome.status = RetrainStatus::rejected_verification;
    outcome.reason = "serving replay mismatch at sample " + std::to_string(verdict.first_mismatch) +
                     " (" + verdict.mismatch_anonymous_id + ")";
    return outcome;
  }

  // (5) deploy
  archive.set_active(family, version_id);
  if (registry) registry->add_model(std::move(loaded), /*activate=*/true);
  outcome.status = RetrainStatus::deployed;
  return outcome;
}

inline void rollback(ModelArchive& archive, const std::string& family_id,
                     const std::string& version_id, ModelRegistry* registry = nullptr) {
  archive.set_active(family_id, version_id);  // NotFoundError for unknown versions
  if (registry) {
    if (!registry->has_version(family_id, version_id))
      registry->load_model(archive.read_version_bytes(family_id, version_id), /*activate=*/false);
    registry->activate_version(family_id, version_id);
  }
}

struct PostServingReport {
  double auc = 0.0;
  double ece = 0.0;
  CalibrationCurve curve;
  int64_t n = 0;
  int64_t positives = 0;
  int64_t flagged_unknown_version = 0;
};

// Joins each logged prediction against whether the user produced a
// positive event within the horizon after it. Rows naming versions the
// archive does not know are flagged, never dropped.
inline PostServingReport post_serving_analysis(const std::vector<PredictionLogRecord>& records,
                                               const std::vector<Event>& archived_events,
                                               int64_t horizon_seconds, const ModelArchive* archive,
                                               EventType positive_type = EventType::positive,
                                               int64_t min_positives = 100, int ece_bins = 10) {
  if (records.empty()) throw ReportError("prediction log is empty");

  std::map<std::string, std::vector<int64_t>> positive_times;
  for (const auto& e : archived_events) {
    if (e.type == positive_type) positive_times[e.anonymous_id].push_back(e.timestamp);
  }
  for (auto& [_, times] : positive_times) std::sort(times.begin(), times.end());

  PostServingReport report;
  std::set<std::pair<std::string, std::string>> known;
  std::vector<double> predictions;
  std::vector<int> actuals;
  for (const auto& r : records) {
    if (archive) {
      auto key = std::make_pair(r.family_id, r.version_id);
      if (!known.count(key)) {
        auto versions = archive->versions(r.family_id);
        if (std::find(versions.begin(), versions.end(), r.version_id) == versions.end())
          ++report.flagged_unknown_version;
        else
          known.insert(key);
      }
    }
    int actual = 0;
    auto it = positive_times.find(r.anonymous_id);
    if (it != positive_times.end()) {
      auto lo = std::upper_bound(it->second.begin(), it->second.end(), r.wall_timestamp);
      if (lo != it->second.end() && *lo <= r.wall_timestamp + horizon_seconds * 1000) actual = 1;
    }
    predictions.push_back(r.value);
    actuals.push_back(actual);
  }

  report.n = static_cast<int64_t>(predictions.size());
  for (int a : actuals) report.positives += a;
  report.auc = auc(predictions, actuals);  // MetricError when single-class
  report.ece = ece(predictions, actuals, ece_bins);
  report.curve = calibration_curve(predictions, actuals, min_positives);
  return report;
}

}  // namespace clickcast
