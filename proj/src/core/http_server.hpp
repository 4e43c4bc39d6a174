#pragma once

#include <memory>
#include <string>

#include "core/engine.hpp"

namespace freshrec {

// Plain-text-over-HTTP surface:
//   GET  /v1/carousel?user=<id>&policy=<p>[&now=<ts>]  -> slate document
//   GET  /v1/view-all?user=<id>&policy=<p>[&now=<ts>]  -> slate document
//   POST /v1/feedback   body: one record `slate=<id> [click_position=<p>] [ts=<ts>]`
//   GET  /v1/health     -> version info record
// Responses are text/plain in the repo's line-record encoding; errors are a
// single `error=<message>` record with a 4xx status.
class HttpServer {
 public:
  explicit HttpServer(Engine& engine);
  ~HttpServer();

  // Binds and serves until stop(); returns the bound port. With port 0 an
  // ephemeral port is chosen (used by tests). Blocking.
  bool listen(const std::string& host, int port);
  // Binds immediately and returns the port; serving continues on the
  // calling thread via wait-free internal listen loop started by caller.
  int bind(const std::string& host, int port);
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace freshrec
