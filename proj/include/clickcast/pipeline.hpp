#pragma once

#include <string>
#include <utility>
#include <vector>

#include "clickcast/config.hpp"
#include "clickcast/serving.hpp"

namespace clickcast {

// One labeled example stripped down to what training, evaluation, and
// verification need; the raw pre-cut event slice is kept for replay.
struct DatasetRow {
  std::string anonymous_id;
  std::vector<Event> source_events;
  std::map<std::string, double> stats;
  int label = 0;
  int64_t cut_timestamp = 0;
};

struct Dataset {
  std::vector<DatasetRow> rows;
  std::vector<EncodedExample> encoded;  // parallel to rows
  SessionizeStats session_stats;

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.label);
    return out;
  }
};

// events -> sessions -> examples -> encoded vectors, one pass.
inline Dataset build_dataset(std::vector<Event> events, const AppConfig& cfg) {
  SessionizeConfig session_cfg;
  session_cfg.max_session_len = cfg.max_session_len;
  Dataset ds;
  auto sessions = sessionize(std::move(events), session_cfg, &ds.session_stats);

  auto generator = make_generator(cfg.examples.generator, cfg.encoder.positive_event_type);
  std::vector<EventFilter> filters = {drop_types_filter(cfg.encoder.filtered_event_types)};
  auto max_len = static_cast<size_t>(cfg.model.seq_len);

  for (auto& session : sessions) {
    auto examples =
        generate_examples(session, *generator, filters, max_len, cfg.encoder.positive_event_type);
    auto cuts = generator->scan(session);
    for (size_t i = 0; i < examples.size(); ++i) {
      DatasetRow row;
      row.anonymous_id = session.anonymous_id;
      row.source_events.assign(session.events.begin(),
                               session.events.begin() + static_cast<ptrdiff_t>(cuts[i].cut_index));
      row.stats = examples[i].instance.stats;
      row.label = examples[i].label;
      row.cut_timestamp = examples[i].cut_timestamp;
      ds.encoded.push_back(
          compress_encoded(encode_instance(examples[i].instance, cfg.encoder), examples[i].label));
      ds.rows.push_back(std::move(row));
    }
    session.events.clear();
    session.events.shrink_to_fit();
  }
  return ds;
}

// Hyperparameter search plus matrix-scaling calibration on half of the
// winner's validation split; the other half scores the before/after ECE.
inline TrainedModel train_candidate(const Dataset& ds, const AppConfig& cfg,
                                    const std::string& family_id, const std::string& version_id) {
  TrainedModel model = hyperparameter_search(ds.encoded, cfg.model, cfg.grid, cfg.encoder,
                                             cfg.lifecycle.search_threads);
  model.family_id = family_id;
  model.version_id = version_id;

  auto labels = ds.labels();
  auto split = stratified_split(labels, derive_seed(model.config.seed, 0xa11ce));
  std::vector<int> val_labels;
  val_labels.reserve(split.validation.size());
  for (size_t i : split.validation) val_labels.push_back(labels[i]);

  auto val_logits = predict_logits(ds.encoded, split.validation, model.params, model.config);
  auto fit = matrix_scaling_fit(val_logits, val_labels, cfg.calibration.fit_fraction,
                                cfg.calibration.schedule, cfg.calibration.seed);

  std::vector<double> before, after;
  std::vector<int> holdout_labels;
  for (size_t i : fit.holdout_indices) {
    before.push_back(softmax2(val_logits[i])[1]);
    after.push_back(apply_matrix_scaling(val_logits[i], fit.scaling)[1]);
    holdout_labels.push_back(val_labels[i]);
  }
  if (!before.empty()) {
    model.stats.holdout_ece_before = ece(before, holdout_labels, cfg.calibration.ece_bins);
    model.stats.holdout_ece_after = ece(after, holdout_labels, cfg.calibration.ece_bins);
  }
  model.calibration = fit.scaling;
  return model;
}

struct EvalInputs {
  std::vector<double> predictions;  // served probabilities on the validation split
  std::vector<int> labels;
  std::vector<std::map<std::string, double>> stats;
};

// Recovers the model's own validation split (the split seed travels in the
// frozen config) and predicts through the serving-equivalent transform.
inline EvalInputs validation_inputs(const Dataset& ds, const TrainedModel& model) {
  auto labels = ds.labels();
  auto split = stratified_split(labels, derive_seed(model.config.seed, 0xa11ce));
  EvalInputs in;
  auto logits = predict_logits(ds.encoded, split.validation, model.params, model.config);
  in.predictions.reserve(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) {
    Probs2 p = model.calibration ? apply_matrix_scaling(logits[k], *model.calibration)
                                 : softmax2(logits[k]);
    in.predictions.push_back(p[1]);
  }
  for (size_t i : split.validation) {
    in.labels.push_back(labels[i]);
    in.stats.push_back(ds.rows[i].stats);
  }
  return in;
}

inline EvalReport evaluate_model(const Dataset& ds, const TrainedModel& model, const AppConfig& cfg) {
  EvalInputs in = validation_inputs(ds, model);
  EvalReport report =
      evaluate_predictions(in.predictions, in.labels, cfg.calibration.ece_bins,
                           cfg.evaluation.n_segments, cfg.evaluation.histogram_bins,
                           cfg.calibration.min_positives);
  for (const auto& cohort : cfg.evaluation.cohorts) {
    report.cohorts.push_back(cohort_report(in.predictions, in.labels, in.stats, cohort.predicate(),
                                           cohort.name, cfg.calibration.min_positives));
  }
  return report;
}

}  // namespace clickcast
