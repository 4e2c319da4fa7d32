#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "clickcast/model.hpp"
#include "clickcast/serving.hpp"
#include "clickcast/synth.hpp"

namespace clickcast {

struct PathsConfig {
  std::string events = "events.jsonl";
  std::string truth = "truth.tsv";
  std::string model_archive = "model_archive";
  std::string reports = "reports";
  std::string prediction_log = "predictions.jsonl";
};

struct ExamplesConfig {
  std::string generator = "first_positive";
  // positive/filtered types and max_len live in the encoder config and
  // model seq_len so training and serving read the same values
};

struct CalibrationConfig {
  int64_t min_positives = 100;
  int ece_bins = 10;
  double fit_fraction = 0.5;
  LrSchedule schedule;
  uint64_t seed = 17;
};

struct CohortSpec {
  std::string name;
  // conjunction of stat comparisons: (stat, op, value)
  struct Clause {
    std::string stat;
    std::string op;  // gt, ge, lt, le, eq
    double value = 0.0;
  };
  std::vector<Clause> clauses;

  StatsPredicate predicate() const {
    auto clauses_copy = clauses;
    return [clauses_copy](const std::map<std::string, double>& stats) {
      for (const auto& c : clauses_copy) {
        auto it = stats.find(c.stat);
        double v = it == stats.end() ? 0.0 : it->second;
        bool ok = c.op == "gt"   ? v > c.value
                  : c.op == "ge" ? v >= c.value
                  : c.op == "lt" ? v < c.value
                  : c.op == "le" ? v <= c.value
                  : c.op == "eq" ? v == c.value
                                 : throw ConfigError("unknown cohort op: " + c.op);
        if (!ok) return false;
      }
      return true;
    };
  }
};

struct EvaluationConfig {
  int n_segments = 5;
  int histogram_bins = 20;
  std::vector<CohortSpec> cohorts;
};

struct ServingConfig {
  EventStoreConfig store;
  int port = 8080;
  size_t prediction_log_max_bytes = 64 * 1024 * 1024;
};

struct LifecycleConfig {
  std::string family_id = "purchase_intent";
  int window_days = 28;
  size_t min_examples = 100;
  double auc_tolerance = 0.01;
  size_t verification_sample_size = 1000;
  int schedule_period_days = 7;
  int search_threads = 1;
};

struct AppConfig {
  uint64_t seed = 42;
  std::string out_dir = ".";
  PathsConfig paths;
  SiteModel synth;
  size_t max_session_len = 1000;
  ExamplesConfig examples;
  EncoderConfig encoder;
  ModelConfig model;
  HyperGrid grid;
  CalibrationConfig calibration;
  EvaluationConfig evaluation;
  ServingConfig serving;
  LifecycleConfig lifecycle;

  std::string path(const std::string& relative) const {
    if (!relative.empty() && relative.front() == '/') return relative;
    return out_dir + "/" + relative;
  }
  std::string events_path() const { return path(paths.events); }
  std::string truth_path() const { return path(paths.truth); }
  std::string archive_dir() const { return path(paths.model_archive); }
  std::string reports_dir() const { return path(paths.reports); }
  std::string prediction_log_path() const { return path(paths.prediction_log); }
};

namespace detail {

inline std::vector<EventType> parse_type_list(const json& arr) {
  std::vector<EventType> out;
  for (const auto& t : arr) {
    auto parsed = event_type_from_string(t.get<std::string>());
    if (!parsed) throw ConfigError("unknown event type in config: " + t.get<std::string>());
    out.push_back(*parsed);
  }
  return out;
}

}  // namespace detail

// Single structured config file with sections mirroring the module names.
// Every section and field is optional; absent values keep the defaults.
inline AppConfig parse_config(const json& j) {
  AppConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("outDir", c.out_dir);

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    c.paths.events = p.value("events", c.paths.events);
    c.paths.truth = p.value("truth", c.paths.truth);
    c.paths.model_archive = p.value("modelArchive", c.paths.model_archive);
    c.paths.reports = p.value("reports", c.paths.reports);
    c.paths.prediction_log = p.value("predictionLog", c.paths.prediction_log);
  }

  if (j.contains("synth")) {
    const auto& s = j["synth"];
    c.synth.n_users = s.value("nUsers", c.synth.n_users);
    c.synth.n_pages = s.value("nPages", c.synth.n_pages);
    c.synth.bot_fraction = s.value("botFraction", c.synth.bot_fraction);
    c.synth.registered_fraction = s.value("registeredFraction", c.synth.registered_fraction);
    c.synth.engagement_mu = s.value("engagementMu", c.synth.engagement_mu);
    c.synth.engagement_sigma = s.value("engagementSigma", c.synth.engagement_sigma);
    c.synth.dwell_mu = s.value("dwellMu", c.synth.dwell_mu);
    c.synth.dwell_sigma = s.value("dwellSigma", c.synth.dwell_sigma);
    c.synth.refresh_spike_prob = s.value("refreshSpikeProb", c.synth.refresh_spike_prob);
    if (s.contains("propensity")) {
      const auto& p = s["propensity"];
      c.synth.propensity_intercept = p.value("intercept", c.synth.propensity_intercept);
      c.synth.propensity_per_click = p.value("perClick", c.synth.propensity_per_click);
      c.synth.propensity_per_minute = p.value("perMinute", c.synth.propensity_per_minute);
    }
    c.synth.sim_origin_ms = s.value("simOriginMs", c.synth.sim_origin_ms);
    c.synth.sim_span_days = s.value("simSpanDays", c.synth.sim_span_days);
  }
  c.synth.seed = derive_seed(c.seed, 0x57);

  if (j.contains("sessions")) {
    c.max_session_len = j["sessions"].value("maxSessionLen", c.max_session_len);
  }

  if (j.contains("examples")) {
    const auto& e = j["examples"];
    c.examples.generator = e.value("generator", c.examples.generator);
    if (e.contains("positiveEventType")) {
      auto t = event_type_from_string(e["positiveEventType"].get<std::string>());
      if (!t) throw ConfigError("unknown positive event type");
      c.encoder.positive_event_type = *t;
    }
    if (e.contains("filteredEventTypes"))
      c.encoder.filtered_event_types = detail::parse_type_list(e["filteredEventTypes"]);
    if (e.contains("maxLen")) c.model.seq_len = e["maxLen"].get<int>();
  }

  if (j.contains("encoding")) {
    const auto& e = j["encoding"];
    c.encoder.hash_dim = e.value("hashDim", c.encoder.hash_dim);
    c.encoder.salt = e.value("salt", c.encoder.salt);
    if (e.contains("dwellBuckets")) {
      const auto& d = e["dwellBuckets"];
      c.encoder.dwell_spec =
          build_combined_buckets(d.value("linearStep", 4.0), d.value("linearCutoff", 60.0),
                                 d.value("nonLinearCutoff", 7200.0), d.value("nBuckets", 30));
    }
    if (e.contains("metadataSpecs")) {
      c.encoder.metadata_specs.clear();
      for (const auto& m : e["metadataSpecs"])
        c.encoder.metadata_specs.push_back({m.at("name").get<std::string>(),
                                            m.value("min", 0.0), m.value("max", 1.0)});
    }
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.seq_len = m.value("seqLen", c.model.seq_len);
    c.model.gru_units = m.value("gruUnits", c.model.gru_units);
    c.model.mlp_layer_sizes = m.value("mlpLayerSizes", c.model.mlp_layer_sizes);
    c.model.dropout_rate = m.value("dropoutRate", c.model.dropout_rate);
    c.model.l2_lambda = m.value("l2Lambda", c.model.l2_lambda);
    c.model.pos_weight = m.value("posWeight", c.model.pos_weight);
    c.model.epochs = m.value("epochs", c.model.epochs);
    c.model.batch_size = m.value("batchSize", c.model.batch_size);
    if (m.contains("adam")) {
      const auto& a = m["adam"];
      c.model.adam.lr = a.value("lr", c.model.adam.lr);
      c.model.adam.beta1 = a.value("beta1", c.model.adam.beta1);
      c.model.adam.beta2 = a.value("beta2", c.model.adam.beta2);
      c.model.adam.eps = a.value("eps", c.model.adam.eps);
    }
    if (m.contains("grid")) {
      const auto& g = m["grid"];
      c.grid.l2_lambda = g.value("l2Lambda", c.grid.l2_lambda);
      c.grid.dropout_rate = g.value("dropoutRate", c.grid.dropout_rate);
      c.grid.gru_units = g.value("gruUnits", c.grid.gru_units);
    }
  }
  c.model.seed = c.seed;

  if (j.contains("calibration")) {
    const auto& cal = j["calibration"];
    c.calibration.min_positives = cal.value("minPositives", c.calibration.min_positives);
    c.calibration.ece_bins = cal.value("eceBins", c.calibration.ece_bins);
    c.calibration.fit_fraction = cal.value("fitFraction", c.calibration.fit_fraction);
    c.calibration.schedule.initial = cal.value("lrInitial", c.calibration.schedule.initial);
    c.calibration.schedule.decay = cal.value("lrDecay", c.calibration.schedule.decay);
    c.calibration.schedule.decay_every = cal.value("lrDecayEvery", c.calibration.schedule.decay_every);
    c.calibration.schedule.steps = cal.value("steps", c.calibration.schedule.steps);
  }
  c.calibration.seed = derive_seed(c.seed, 0xca1);

  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    c.evaluation.n_segments = e.value("nSegments", c.evaluation.n_segments);
    c.evaluation.histogram_bins = e.value("histogramBins", c.evaluation.histogram_bins);
    if (e.contains("cohorts")) {
      for (const auto& spec : e["cohorts"]) {
        CohortSpec cohort;
        cohort.name = spec.at("name").get<std::string>();
        for (const auto& [stat, cond] : spec.at("where").items()) {
          for (const auto& [op, value] : cond.items())
            cohort.clauses.push_back({stat, op, value.get<double>()});
        }
        c.evaluation.cohorts.push_back(std::move(cohort));
      }
    }
  }

  if (j.contains("serving")) {
    const auto& s = j["serving"];
    c.serving.store.ttl_seconds = s.value("ttlSeconds", c.serving.store.ttl_seconds);
    c.serving.store.max_events_per_user =
        s.value("maxEventsPerUser", c.serving.store.max_events_per_user);
    if (s.contains("allowedTypes")) {
      c.serving.store.allowed_types.clear();
      for (auto t : detail::parse_type_list(s["allowedTypes"])) c.serving.store.allowed_types.insert(t);
    }
    c.serving.port = s.value("port", c.serving.port);
    c.serving.prediction_log_max_bytes =
        s.value("predictionLogMaxBytes", c.serving.prediction_log_max_bytes);
  }

  if (j.contains("lifecycle")) {
    const auto& l = j["lifecycle"];
    c.lifecycle.family_id = l.value("familyId", c.lifecycle.family_id);
    c.lifecycle.window_days = l.value("windowDays", c.lifecycle.window_days);
    c.lifecycle.min_examples = l.value("minExamples", c.lifecycle.min_examples);
    c.lifecycle.auc_tolerance = l.value("aucTolerance", c.lifecycle.auc_tolerance);
    c.lifecycle.verification_sample_size =
        l.value("verificationSampleSize", c.lifecycle.verification_sample_size);
    c.lifecycle.schedule_period_days = l.value("schedulePeriodDays", c.lifecycle.schedule_period_days);
    c.lifecycle.search_threads = l.value("searchThreads", c.lifecycle.search_threads);
  }

  return c;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace clickcast
