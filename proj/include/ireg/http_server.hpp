#pragma once

#include <memory>
#include <string>
#include <thread>

#include "ireg/session_service.hpp"

namespace httplib {
class Server;
}

namespace ireg {

/// JSON-over-HTTP front end of a SessionService. Errors are returned as
/// {"error": {"code", "message"}} with the matching status.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  SessionService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace ireg
