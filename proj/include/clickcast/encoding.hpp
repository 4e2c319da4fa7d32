#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickcast/examples.hpp"

namespace clickcast {

// Dense [0,1]-valued feature vector.
using FeatureVector = std::vector<double>;

// Two hash probes per string, Bloom-filter style: bits h(s) mod n and
// h(s + salt) mod n are set. Output is a bit vector of length n.
inline FeatureVector hash_buckets(const std::vector<std::string>& strings, int n,
                                  const std::string& salt) {
  if (n < 2) throw ConfigError("hash_buckets needs n >= 2");
  FeatureVector v(static_cast<size_t>(n), 0.0);
  for (const auto& s : strings) {
    v[fnv1a64(s) % static_cast<uint64_t>(n)] = 1.0;
    v[fnv1a64(s + salt) % static_cast<uint64_t>(n)] = 1.0;
  }
  return v;
}

// One-hot over an ordered vocabulary, with an optional trailing
// out-of-vocabulary slot.
inline FeatureVector one_hot(const std::string& value, const std::vector<std::string>& vocab,
                             bool oov_slot = false) {
  if (vocab.empty()) throw EncodingError("one_hot called with empty vocabulary");
  FeatureVector v(vocab.size() + (oov_slot ? 1 : 0), 0.0);
  auto it = std::find(vocab.begin(), vocab.end(), value);
  if (it != vocab.end()) {
    v[static_cast<size_t>(it - vocab.begin())] = 1.0;
  } else if (oov_slot) {
    v.back() = 1.0;
  } else {
    throw EncodingError("value not in vocabulary: " + value);
  }
  return v;
}

// (X - X_min) / (X_max - X_min), clamped to [0,1] for out-of-range X.
inline double normalize(double x, double x_min, double x_max) {
  if (!(x_max > x_min)) throw ConfigError("normalize requires x_max > x_min");
  return std::clamp((x - x_min) / (x_max - x_min), 0.0, 1.0);
}

namespace detail {

// Count of edges <= value, i.e. numpy.digitize(value, edges, right=False).
inline size_t digitize(double value, const std::vector<double>& edges) {
  return static_cast<size_t>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

inline FeatureVector one_hot_at(size_t index, size_t dim) {
  FeatureVector v(dim, 0.0);
  v[index] = 1.0;
  return v;
}

}  // namespace detail

// Equal-width bucketing: n_buckets edges from start to end inclusive,
// bucket index = (count of edges <= value) - 1, clamped to the extreme
// buckets for out-of-range values.
inline FeatureVector linear_bucket_vector(double value, double start, double end, int n_buckets) {
  if (n_buckets < 2) throw ConfigError("linear_bucket_vector needs n_buckets >= 2");
  if (!(end > start)) throw ConfigError("linear_bucket_vector needs end > start");
  double step = (end - start) / (n_buckets - 1);
  std::vector<double> edges(static_cast<size_t>(n_buckets));
  for (int i = 0; i < n_buckets; ++i) edges[static_cast<size_t>(i)] = start + step * i;
  edges.back() = end;
  auto index = detail::digitize(value, edges);
  auto pos = static_cast<size_t>(
      std::clamp<ptrdiff_t>(static_cast<ptrdiff_t>(index) - 1, 0, n_buckets - 1));
  return detail::one_hot_at(pos, static_cast<size_t>(n_buckets));
}

// Value-interval quantizer backed by explicit edges. n_buckets is the
// number of intervals; values below the first edge land in bucket 0 and
// values at or above the last edge land in the final bucket.
struct BucketSpec {
  std::vector<double> edges;  // strictly increasing
  int n_buckets = 0;          // edges.size() - 1

  bool operator==(const BucketSpec&) const = default;
};

inline void validate_bucket_spec(const BucketSpec& spec) {
  if (spec.edges.size() < 2) throw ConfigError("bucket spec needs at least 2 edges");
  for (size_t i = 1; i < spec.edges.size(); ++i) {
    if (!(spec.edges[i] > spec.edges[i - 1])) throw ConfigError("bucket edges must strictly increase");
  }
  if (spec.n_buckets != static_cast<int>(spec.edges.size()) - 1)
    throw ConfigError("bucket count does not match edges");
}

inline FeatureVector bucket_vector(double value, const BucketSpec& spec) {
  auto index = detail::digitize(value, spec.edges);
  auto pos = static_cast<size_t>(
      std::clamp<ptrdiff_t>(static_cast<ptrdiff_t>(index) - 1, 0, spec.n_buckets - 1));
  return detail::one_hot_at(pos, static_cast<size_t>(spec.n_buckets));
}

// Linear edges s_l*i up to the cutoff c_l, then a geometric run that
// starts where the linear one ends and reaches c_n at the Nth bucket:
// edge k+i = c_l * p^i with p = (c_n / c_l)^(1/(N-k)), k = c_l / s_l.
inline BucketSpec build_combined_buckets(double s_l, double c_l, double c_n, int total_buckets) {
  if (!(s_l > 0.0)) throw ConfigError("linear step must be positive");
  if (!(c_l > 0.0)) throw ConfigError("linear cutoff must be positive");
  double k_real = c_l / s_l;
  double k_rounded = std::round(k_real);
  if (std::abs(k_real - k_rounded) > 1e-9 * std::max(1.0, k_real))
    throw ConfigError("linear step must evenly divide the linear cutoff");
  int k = static_cast<int>(k_rounded);
  if (!(c_n > c_l)) throw ConfigError("non-linear cutoff must exceed the linear cutoff");
  if (total_buckets <= k) throw ConfigError("bucket count must exceed the linear segment");

  BucketSpec spec;
  spec.n_buckets = total_buckets;
  spec.edges.reserve(static_cast<size_t>(total_buckets) + 1);
  for (int i = 0; i <= k; ++i) spec.edges.push_back(s_l * i);
  int geometric = total_buckets - k;
  double ratio = std::pow(c_n / c_l, 1.0 / geometric);
  for (int i = 1; i <= geometric; ++i) spec.edges.push_back(c_l * std::pow(ratio, i));
  spec.edges.back() = c_n;  // pin the upper bound against pow() rounding
  validate_bucket_spec(spec);
  return spec;
}

struct MetadataSpec {
  std::string name;
  double min = 0.0;
  double max = 1.0;

  bool operator==(const MetadataSpec&) const = default;
};

// Everything needed to turn raw events into model input. Serialized into
// the frozen model so training and serving cannot diverge.
struct EncoderConfig {
  int hash_dim = 100;
  std::string salt = "some_fixed_string";
  std::vector<EventType> type_vocab = {EventType::page,     EventType::click,
                                       EventType::scroll,   EventType::log,
                                       EventType::positive, EventType::prediction_point};
  BucketSpec dwell_spec = build_combined_buckets(4.0, 60.0, 7200.0, 30);
  std::vector<MetadataSpec> metadata_specs = {
      {"session_event_count", 0.0, 1000.0}, {"distinct_page_count", 0.0, 200.0},
      {"total_dwell_seconds", 0.0, 86400.0}, {"hour_of_day_of_first_event", 0.0, 24.0},
      {"is_returning_user", 0.0, 1.0},
  };
  // Instance shaping shared by the training and serving paths.
  std::vector<EventType> filtered_event_types = {EventType::log};
  EventType positive_event_type = EventType::positive;

  int event_dim() const {
    return hash_dim + static_cast<int>(type_vocab.size()) + dwell_spec.n_buckets;
  }
  int metadata_dim() const { return static_cast<int>(metadata_specs.size()); }

  std::vector<EventFilter> instance_filters() const {
    return with_positive_guard({drop_types_filter(filtered_event_types)}, positive_event_type);
  }

  bool operator==(const EncoderConfig&) const = default;
};

inline json encoder_config_to_json(const EncoderConfig& c) {
  json j;
  j["hashDim"] = c.hash_dim;
  j["salt"] = c.salt;
  json vocab = json::array();
  for (auto t : c.type_vocab) vocab.push_back(to_string(t));
  j["typeVocab"] = vocab;
  j["dwellEdges"] = c.dwell_spec.edges;
  json specs = json::array();
  for (const auto& m : c.metadata_specs) specs.push_back({{"name", m.name}, {"min", m.min}, {"max", m.max}});
  j["metadataSpecs"] = specs;
  json filtered = json::array();
  for (auto t : c.filtered_event_types) filtered.push_back(to_string(t));
  j["filteredEventTypes"] = filtered;
  j["positiveEventType"] = to_string(c.positive_event_type);
  return j;
}

inline EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.hash_dim = j.at("hashDim").get<int>();
  c.salt = j.at("salt").get<std::string>();
  c.type_vocab.clear();
  for (const auto& t : j.at("typeVocab")) {
    auto parsed = event_type_from_string(t.get<std::string>());
    if (!parsed) throw ConfigError("bad event type in encoder config");
    c.type_vocab.push_back(*parsed);
  }
  c.dwell_spec.edges = j.at("dwellEdges").get<std::vector<double>>();
  c.dwell_spec.n_buckets = static_cast<int>(c.dwell_spec.edges.size()) - 1;
  validate_bucket_spec(c.dwell_spec);
  c.metadata_specs.clear();
  for (const auto& m : j.at("metadataSpecs"))
    c.metadata_specs.push_back({m.at("name").get<std::string>(), m.at("min").get<double>(),
                                m.at("max").get<double>()});
  c.filtered_event_types.clear();
  for (const auto& t : j.at("filteredEventTypes")) {
    auto parsed = event_type_from_string(t.get<std::string>());
    if (!parsed) throw ConfigError("bad event type in encoder config");
    c.filtered_event_types.push_back(*parsed);
  }
  auto pos = event_type_from_string(j.at("positiveEventType").get<std::string>());
  if (!pos) throw ConfigError("bad positive event type in encoder config");
  c.positive_event_type = *pos;
  return c;
}

// Strings hashed per event: URL parts, the event type token, and the
// user-agent families. Kind prefixes keep unrelated tokens from aliasing.
inline std::vector<std::string> event_string_set(const Event& e) {
  std::vector<std::string> out;
  out.push_back(std::string("type:") + to_string(e.type));
  if (e.url_parts) {
    if (!e.url_parts->host.empty()) out.push_back("host:" + e.url_parts->host);
    out.push_back("path:" + e.url_parts->path);
    for (const auto& k : e.url_parts->query_keys) out.push_back("qk:" + k);
  }
  if (e.user_agent) {
    out.push_back("ua:" + e.user_agent->browser_family);
    out.push_back("os:" + e.user_agent->os_family);
  }
  return out;
}

struct EncodedInstance {
  std::vector<FeatureVector> sequence;
  FeatureVector metadata;
};

inline FeatureVector encode_event_type(EventType t, const std::vector<EventType>& vocab) {
  FeatureVector v(vocab.size(), 0.0);
  auto it = std::find(vocab.begin(), vocab.end(), t);
  if (it == vocab.end()) throw EncodingError(std::string("event type outside vocabulary: ") + to_string(t));
  v[static_cast<size_t>(it - vocab.begin())] = 1.0;
  return v;
}

// Per event: hash buckets over its string set, one-hot of the type, and
// the bucketed dwell time since the previous real event. Blank padding
// encodes to all zeros. Metadata is normalized per feature.
inline EncodedInstance encode_instance(const Instance& instance, const EncoderConfig& config) {
  EncodedInstance out;
  out.sequence.reserve(instance.events.size());
  int64_t prev_ts = 0;
  for (const auto& e : instance.events) {
    if (e.is_blank()) {
      out.sequence.emplace_back(static_cast<size_t>(config.event_dim()), 0.0);
      continue;
    }
    FeatureVector v = hash_buckets(event_string_set(e), config.hash_dim, config.salt);
    FeatureVector type_v = encode_event_type(e.type, config.type_vocab);
    double dwell_s = prev_ts == 0 ? 0.0 : static_cast<double>(e.timestamp - prev_ts) / 1000.0;
    FeatureVector dwell_v = bucket_vector(dwell_s, config.dwell_spec);
    prev_ts = e.timestamp;
    v.insert(v.end(), type_v.begin(), type_v.end());
    v.insert(v.end(), dwell_v.begin(), dwell_v.end());
    if (static_cast<int>(v.size()) != config.event_dim())
      throw EncodingError("event vector dimension mismatch");
    out.sequence.push_back(std::move(v));
  }

  out.metadata.reserve(config.metadata_specs.size());
  for (const auto& spec : config.metadata_specs) {
    auto it = instance.metadata.find(spec.name);
    double value = it == instance.metadata.end() ? 0.0 : it->second;
    out.metadata.push_back(normalize(value, spec.min, spec.max));
  }
  return out;
}

// Instance construction as the model sees it, shared verbatim by the
// training cut path and the serving recent-events path.
inline Instance build_model_instance(const std::vector<Event>& events, const EncoderConfig& config,
                                     size_t max_len) {
  return make_instance(events, config.instance_filters(), max_len);
}

}  // namespace clickcast
