#include "ireg/http_server.hpp"

#include <spdlog/spdlog.h>

#include "httplib.h"

namespace ireg {

namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, Json{{"error", {{"code", code}, {"message", message}}}}, status);
}

template <typename F>
auto guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const std::exception& e) {
      spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ServiceError(400, "invalid_json", e.what());
  }
}

}  // namespace

HttpServer::HttpServer(SessionService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  httplib::Server& s = *server_;
  s.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, service_.create_session(parse_body(req)), 201);
         }));
  s.Post(R"(/api/sessions/([^/]+)/click)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, service_.click(req.matches[1], parse_body(req)));
         }));
  s.Get(R"(/api/sessions/([^/]+)/trace)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, service_.trace(req.matches[1]));
        }));
  s.Get(R"(/api/sessions/([^/]+)/summary)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, service_.summary(req.matches[1]));
        }));
  s.Get("/api/eval/human-summary", guarded([this](const httplib::Request& req, httplib::Response& res) {
          std::optional<std::string> evaluator;
          if (req.has_param("evaluator_id")) evaluator = req.get_param_value("evaluator_id");
          send_json(res, service_.human_summary(evaluator));
        }));
  s.Get(R"(/api/scenes/([^/]+)/render)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          res.set_content(service_.render(req.matches[1]), "image/svg+xml");
        }));
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send_error(res, 404, "not_found", "no route for " + req.path);
  });
}

int HttpServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::listen(const std::string& host, int port) {
  port_ = port;
  spdlog::info("serving on http://{}:{}", host, port);
  if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ireg
