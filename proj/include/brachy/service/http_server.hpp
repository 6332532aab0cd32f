#pragma once

#include <memory>
#include <optional>
#include <string>

#include "brachy/service/session.hpp"

namespace httplib {
class Server;
}

namespace brachy {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::string> static_dir;  // UI assets served at /
};

/// JSON API over a SessionStore. Errors come back as
/// {"error": {"kind", "message", ...}} with 400 (input), 404 (unknown
/// session), 409 (stale revision) or 422 (stage order / failure).
class ApiServer {
 public:
  ApiServer(SessionStore& store, ServerOptions options);
  ~ApiServer();

  /// Binds the socket; throws Error("bind", ...) on failure. Returns the
  /// bound port.
  int bind();
  /// Serves until stop(); in-flight requests finish before it returns.
  void run();
  void stop();

 private:
  void install_routes();

  SessionStore& store_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

/// Binds, installs SIGINT/SIGTERM handling and serves until signalled.
void serve(SessionStore& store, const ServerOptions& options);

}  // namespace brachy
