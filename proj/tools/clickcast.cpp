// clickcast: synthetic-site clickstream pipeline — generate traffic, train
// and calibrate a purchase-intent model, evaluate it, serve it over REST,
// and retrain it on a rolling window.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>

#include "clickcast/http.hpp"
#include "clickcast/lifecycle.hpp"
#include "clickcast/pipeline.hpp"
#include "clickcast/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace clickcast;

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> port;
};

AppConfig resolve_config(const CommonOpts& opts) {
  AppConfig cfg = opts.config_path.empty() ? parse_config(json::object()) : load_config(opts.config_path);
  if (opts.seed) {
    json overlay = json::object();
    overlay["seed"] = *opts.seed;
    AppConfig reseeded = cfg;
    reseeded.seed = *opts.seed;
    reseeded.model.seed = *opts.seed;
    reseeded.synth.seed = derive_seed(*opts.seed, 0x57);
    reseeded.calibration.seed = derive_seed(*opts.seed, 0xca1);
    cfg = reseeded;
  }
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  if (opts.port) cfg.serving.port = *opts.port;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

Dataset load_dataset(const AppConfig& cfg) {
  if (!fs::exists(cfg.events_path())) throw InsufficientDataError("no events archive at " + cfg.events_path());
  auto events = read_archive(cfg.events_path());
  auto dataset = build_dataset(std::move(events), cfg);
  if (dataset.rows.empty()) throw InsufficientDataError("archive produced no examples");
  return dataset;
}

TrainedModel load_active_model(const AppConfig& cfg) {
  ModelArchive archive(cfg.archive_dir());
  auto active = archive.active_version(cfg.lifecycle.family_id);
  if (!active) throw NotFoundError("no active model for family " + cfg.lifecycle.family_id);
  return archive.load_version(cfg.lifecycle.family_id, *active);
}

int cmd_generate(const AppConfig& cfg) {
  auto result = generate_sessions_to_file(cfg.synth, cfg.events_path());
  write_truth_file(cfg.truth_path(), result.truth);
  int64_t positives = 0;
  for (const auto& r : result.truth) positives += r.label;
  std::cout << "generated " << result.events_written << " events for " << cfg.synth.n_users
            << " users (" << result.bot_users << " bots) -> " << cfg.events_path() << "\n"
            << "positive users: " << positives << " / " << result.truth.size() << "\n";
  return 0;
}

int cmd_train(const AppConfig& cfg) {
  Dataset dataset = load_dataset(cfg);
  int64_t positives = 0;
  for (const auto& r : dataset.rows) positives += r.label;
  if (dataset.rows.size() < cfg.lifecycle.min_examples || positives == 0 ||
      positives == static_cast<int64_t>(dataset.rows.size()))
    throw InsufficientDataError(std::to_string(dataset.rows.size()) + " examples, " +
                                std::to_string(positives) + " positive");

  ModelArchive archive(cfg.archive_dir());
  std::string version = archive.next_version_id(cfg.lifecycle.family_id);
  TrainedModel model = train_candidate(dataset, cfg, cfg.lifecycle.family_id, version);

  std::vector<std::vector<Event>> slices;
  std::vector<std::string> ids;
  for (const auto& r : dataset.rows) {
    slices.push_back(r.source_events);
    ids.push_back(r.anonymous_id);
  }
  auto verification =
      build_verification_set(model, slices, ids, cfg.lifecycle.verification_sample_size,
                             derive_seed(cfg.seed, 0x7e81f));
  archive.save_version(model, verification);

  TrainedModel loaded = archive.load_version(cfg.lifecycle.family_id, version);
  auto verdict = verify_model(loaded, archive.load_verification(cfg.lifecycle.family_id, version));
  if (!verdict.passed) throw ModelError("post-archive verification failed for " + version);
  archive.set_active(cfg.lifecycle.family_id, version);

  std::cout << "trained " << cfg.lifecycle.family_id << "/" << version << " on "
            << dataset.rows.size() << " examples (" << positives << " positive)\n"
            << "validation AUC " << model.stats.val_auc << ", ECE " << model.stats.val_ece
            << ", holdout ECE " << model.stats.holdout_ece_before << " -> "
            << model.stats.holdout_ece_after << "\n"
            << "gru_units=" << model.config.gru_units << " l2=" << model.config.l2_lambda
            << " dropout=" << model.config.dropout_rate << "\n";
  return 0;
}

int cmd_evaluate(const AppConfig& cfg) {
  Dataset dataset = load_dataset(cfg);
  TrainedModel model = load_active_model(cfg);
  EvalReport report = evaluate_model(dataset, model, cfg);

  fs::create_directories(cfg.reports_dir());
  std::ofstream out(cfg.reports_dir() + "/report.json", std::ios::trunc);
  out << eval_report_to_json(report).dump(2) << '\n';
  write_report_series(cfg.reports_dir(), report);

  std::cout << "evaluated " << model.family_id << "/" << model.version_id << " on " << report.n
            << " held-out examples\n"
            << "AUC " << report.auc << ", ECE " << report.ece << "\n";
  for (const auto& s : report.segments)
    std::cout << "segment " << s.bucket_index + 1 << ": odds " << s.odds_ratio << "x ("
              << s.positive_rate << " vs base)\n";
  std::cout << "report -> " << cfg.reports_dir() << "/report.json\n";
  return 0;
}

int cmd_calibrate(const AppConfig& cfg) {
  Dataset dataset = load_dataset(cfg);
  TrainedModel model = load_active_model(cfg);

  auto labels = dataset.labels();
  auto split = stratified_split(labels, derive_seed(model.config.seed, 0xa11ce));
  std::vector<int> val_labels;
  for (size_t i : split.validation) val_labels.push_back(labels[i]);
  auto logits = predict_logits(dataset.encoded, split.validation, model.params, model.config);
  auto fit = matrix_scaling_fit(logits, val_labels, cfg.calibration.fit_fraction,
                                cfg.calibration.schedule, cfg.calibration.seed);

  std::vector<double> before, after;
  std::vector<int> holdout;
  for (size_t i : fit.holdout_indices) {
    before.push_back(softmax2(logits[i])[1]);
    after.push_back(apply_matrix_scaling(logits[i], fit.scaling)[1]);
    holdout.push_back(val_labels[i]);
  }
  double ece_before = ece(before, holdout, cfg.calibration.ece_bins);
  double ece_after = ece(after, holdout, cfg.calibration.ece_bins);

  model.calibration = fit.scaling;
  model.stats.holdout_ece_before = ece_before;
  model.stats.holdout_ece_after = ece_after;
  ModelArchive archive(cfg.archive_dir());
  std::string version = archive.next_version_id(cfg.lifecycle.family_id);
  std::string previous = model.version_id;
  model.version_id = version;

  std::vector<std::vector<Event>> slices;
  std::vector<std::string> ids;
  for (const auto& r : dataset.rows) {
    slices.push_back(r.source_events);
    ids.push_back(r.anonymous_id);
  }
  auto verification =
      build_verification_set(model, slices, ids, cfg.lifecycle.verification_sample_size,
                             derive_seed(cfg.seed, 0x7e81f));
  archive.save_version(model, verification);
  archive.set_active(cfg.lifecycle.family_id, version);

  std::cout << "recalibrated " << cfg.lifecycle.family_id << "/" << previous << " -> " << version
            << "\nholdout ECE before " << ece_before << ", after " << ece_after << "\n";
  return 0;
}

volatile std::sig_atomic_t g_stop_requested = 0;
HttpServer* g_server = nullptr;

int cmd_serve(const AppConfig& cfg) {
  ModelArchive archive(cfg.archive_dir());
  ModelRegistry registry;
  for (const auto& family : archive.families()) {
    auto active = archive.active_version(family);
    if (!active) continue;
    registry.load_model(archive.read_version_bytes(family, *active), /*activate=*/true);
  }

  InMemoryEventStore store(cfg.serving.store);
  PredictionLog log(cfg.prediction_log_path(), cfg.serving.prediction_log_max_bytes);
  PredictionService service(registry, store, cfg.events_path(), log);
  HttpServer server(service, &archive);

  int port = server.start("0.0.0.0", cfg.serving.port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    g_stop_requested = 1;
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    g_stop_requested = 1;
    if (g_server) g_server->stop();
  });

  std::cout << "serving " << registry.families().size() << " model family(ies) on port " << port
            << "\n";
  server.listen_after_bind();
  std::cout << "server stopped\n";
  return 0;
}

int cmd_retrain(const AppConfig& cfg) {
  ModelArchive archive(cfg.archive_dir());
  RetrainOutcome outcome = retrain_cycle(cfg, archive);
  std::cout << "retrain " << cfg.lifecycle.family_id << ": " << to_string(outcome.status);
  if (!outcome.version_id.empty()) std::cout << " version " << outcome.version_id;
  if (!outcome.reason.empty()) std::cout << " (" << outcome.reason << ")";
  std::cout << "\n";
  if (outcome.status == RetrainStatus::deployed) return 0;
  std::cerr << json{{"error", to_string(outcome.status)}, {"message", outcome.reason}}.dump() << "\n";
  return 1;
}

int cmd_report(const AppConfig& cfg) {
  if (cfg.evaluation.cohorts.empty())
    throw ConfigError("report needs evaluation.cohorts in the config");
  Dataset dataset = load_dataset(cfg);
  TrainedModel model = load_active_model(cfg);
  EvalInputs in = validation_inputs(dataset, model);

  fs::create_directories(cfg.reports_dir());
  auto all_users = cohort_report(in.predictions, in.labels, in.stats,
                                 [](const std::map<std::string, double>&) { return true; },
                                 "all_users", cfg.calibration.min_positives);
  write_calibration_series(cfg.reports_dir() + "/calibration_all_users", all_users.curve);

  json doc;
  doc["reportVersion"] = 1;
  doc["allUsers"] = {{"count", all_users.count},
                     {"topDecilePositiveRate", all_users.top_decile_positive_rate}};
  std::cout << "all_users: n=" << all_users.count
            << " top-decile positive rate=" << all_users.top_decile_positive_rate << "\n";
  for (const auto& spec : cfg.evaluation.cohorts) {
    auto cohort = cohort_report(in.predictions, in.labels, in.stats, spec.predicate(), spec.name,
                                cfg.calibration.min_positives);
    write_calibration_series(cfg.reports_dir() + "/calibration_cohort_" + spec.name, cohort.curve);
    doc["cohorts"][spec.name] = {{"count", cohort.count},
                                 {"topDecilePositiveRate", cohort.top_decile_positive_rate}};
    std::cout << spec.name << ": n=" << cohort.count
              << " top-decile positive rate=" << cohort.top_decile_positive_rate << "\n";
  }
  std::ofstream out(cfg.reports_dir() + "/cohorts.json", std::ios::trunc);
  out << doc.dump(2) << '\n';
  std::cout << "series files -> " << cfg.reports_dir() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clickstream intent pipeline"};
  app.require_subcommand(1);
  CommonOpts opts;

  auto add_common = [&](CLI::App* sub, bool with_port = false) {
    sub->add_option("--config", opts.config_path, "config file (JSON)");
    sub->add_option("--seed", opts.seed, "override the global seed");
    sub->add_option("--out", opts.out_dir, "working directory for data, models, reports");
    if (with_port) sub->add_option("--port", opts.port, "listen port");
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic event archive");
  auto* train = app.add_subcommand("train", "train, calibrate, and archive a model");
  auto* evaluate = app.add_subcommand("evaluate", "score the active model on held-out examples");
  auto* calibrate = app.add_subcommand("calibrate", "refit matrix scaling on the active model");
  auto* serve = app.add_subcommand("serve", "start the prediction REST service");
  auto* retrain = app.add_subcommand("retrain", "run one automated retrain cycle");
  auto* report = app.add_subcommand("report", "cohort reports from config predicates");
  for (auto* sub : {generate, train, evaluate, calibrate, retrain, report}) add_common(sub);
  add_common(serve, /*with_port=*/true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    AppConfig cfg = resolve_config(opts);
    if (generate->parsed()) return cmd_generate(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (evaluate->parsed()) return cmd_evaluate(cfg);
    if (calibrate->parsed()) return cmd_calibrate(cfg);
    if (serve->parsed()) return cmd_serve(cfg);
    if (retrain->parsed()) return cmd_retrain(cfg);
    if (report->parsed()) return cmd_report(cfg);
  } catch (const clickcast::Error& e) {
    std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}
