#pragma once

#include <memory>
#include <string>

#include "clickcast/lifecycle.hpp"
#include "clickcast/serving.hpp"

// after Eigen: httplib drags in <resolv.h>, whose _res macro mangles
// Eigen internals when it comes first
#include <httplib.h>

namespace clickcast {

// REST surface:
//   POST /v1/events                       array of raw events -> {accepted, rejected}
//   GET  /v1/predict/{family}/{anonymousId}
//   GET  /v1/models/{family}              active version metadata
//   POST /v1/models/{family}/activate     {"versionId": "..."}
class HttpServer {
public:
  HttpServer(PredictionService& service, ModelArchive* archive = nullptr)
      : service_(service), archive_(archive) {
    register_routes();
  }

  // Binds the given port, or an ephemeral one when port == 0.
  int start(const std::string& host, int port) {
    if (port == 0) {
      port = server_.bind_to_any_port(host.c_str());
      if (port < 0) throw IoError("cannot bind an ephemeral port");
    } else if (!server_.bind_to_port(host.c_str(), port)) {
      throw IoError("cannot bind port " + std::to_string(port));
    }
    bound_port_ = port;
    return port;
  }

  // Blocks until stop().
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  int port() const { return bound_port_; }
  httplib::Server& raw() { return server_; }

private:
  static void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& code,
                          const std::string& message) {
    reply_json(res, status, json{{"error", code}, {"message", message}});
  }

  void register_routes() {
    server_.Post("/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const std::exception&) {
        reply_error(res, 400, "bad_request", "body is not valid JSON");
        return;
      }
      try {
        IngestAck ack = service_.ingest(body);
        reply_json(res, 200, json{{"accepted", ack.accepted}, {"rejected", ack.rejected}});
      } catch (const MalformedEventError& e) {
        reply_error(res, 400, "bad_request", e.what());
      } catch (const IoError& e) {
        reply_error(res, 503, "archive_unavailable", e.what());  // retryable
      }
    });

    server_.Get(R"(/v1/predict/([^/]+)/([^/]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  try {
                    auto resp = service_.handle_predict(req.matches[1], req.matches[2]);
                    reply_json(res, 200,
                               json{{"value", resp.value},
                                    {"versionId", resp.version_id},
                                    {"coldStart", resp.cold_start}});
                  } catch (const NotFoundError& e) {
                    reply_error(res, 404, "not_found", e.what());
                  } catch (const std::exception& e) {
                    reply_error(res, 500, "internal", e.what());
                  }
                });

    server_.Get(R"(/v1/models/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto model = service_.registry().active(req.matches[1]);
        reply_json(res, 200,
                   json{{"familyId", model->family_id},
                        {"versionId", model->version_id},
                        {"stats", training_stats_to_json(model->stats)}});
      } catch (const NotFoundError& e) {
        reply_error(res, 404, "not_found", e.what());
      }
    });

    server_.Post(R"(/v1/models/([^/]+)/activate)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   std::string family = req.matches[1];
                   std::string version;
                   try {
                     version = json::parse(req.body).at("versionId").get<std::string>();
                   } catch (const std::exception&) {
                     reply_error(res, 400, "bad_request", "body must carry versionId");
                     return;
                   }
                   try {
                     if (archive_ != nullptr) {
                       rollback(*archive_, family, version, &service_.registry());
                     } else {
                       service_.registry().activate_version(family, version);
                     }
                     reply_json(res, 200, json{{"familyId", family}, {"versionId", version}});
                   } catch (const NotFoundError& e) {
                     reply_error(res, 404, "not_found", e.what());
                   } catch (const std::exception& e) {
                     reply_error(res, 500, "internal", e.what());
                   }
                 });
  }

  PredictionService& service_;
  ModelArchive* archive_;
  httplib::Server server_;
  int bound_port_ = 0;
};

}  // namespace clickcast
