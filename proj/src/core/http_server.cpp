#include "core/http_server.hpp"

#include <httplib.h>

#include "core/textcodec.hpp"

namespace freshrec {

namespace {

std::string error_doc(const std::string& message) {
  Record rec;
  rec.add("error", message);
  return encode_record(rec) + "\n";
}

int64_t parse_now(const httplib::Request& req, const Engine& engine) {
  if (req.has_param("now")) return std::stoll(req.get_param_value("now"));
  return engine.now();
}

}  // namespace

struct HttpServer::Impl {
  Engine& engine;
  httplib::Server server;
  int bound_port = -1;

  explicit Impl(Engine& e) : engine(e) { routes(); }

  void slate_endpoint(const httplib::Request& req, httplib::Response& res,
                      bool view_all) {
    if (!req.has_param("user") || !req.has_param("policy")) {
      res.status = 400;
      res.set_content(error_doc("missing 'user' or 'policy' parameter"),
                      "text/plain");
      return;
    }
    auto policy = policy_from_name(req.get_param_value("policy"));
    if (!policy) {
      res.status = 400;
      res.set_content(
          error_doc("unknown policy '" + req.get_param_value("policy") + "'"),
          "text/plain");
      return;
    }
    try {
      const std::string user = req.get_param_value("user");
      const int64_t now = parse_now(req, engine);
      Slate slate = view_all ? engine.view_all(user, now, *policy)
                             : engine.build_carousel(user, now, *policy);
      res.set_content(slate.to_document(), "text/plain");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(error_doc(e.what()), "text/plain");
    }
  }

  void routes() {
    server.Get("/v1/carousel",
               [this](const httplib::Request& req, httplib::Response& res) {
                 slate_endpoint(req, res, false);
               });
    server.Get("/v1/view-all",
               [this](const httplib::Request& req, httplib::Response& res) {
                 slate_endpoint(req, res, true);
               });
    server.Post("/v1/feedback", [this](const httplib::Request& req,
                                       httplib::Response& res) {
      try {
        std::string body = req.body;
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r'))
          body.pop_back();
        Record rec = decode_record(body);
        const std::string slate_id = std::string(rec.require("slate"));
        std::optional<int> click;
        if (auto c = rec.get("click_position"))
          click = std::stoi(std::string(*c));
        int64_t ts = engine.now();
        if (auto t = rec.get("ts")) ts = std::stoll(std::string(*t));
        engine.record_display(slate_id, click, ts);
        res.status = 204;
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(error_doc(e.what()), "text/plain");
      }
    });
    server.Get("/v1/health", [this](const httplib::Request&,
                                    httplib::Response& res) {
      Record rec;
      rec.add("status", "ok");
      rec.add("service", "freshrec");
      rec.add("index_version",
              std::to_string(engine.index_snapshot()->version));
      rec.add("prediction_version",
              std::to_string(engine.prediction_version()));
      rec.add("now", std::to_string(engine.now()));
      res.set_content(encode_record(rec) + "\n", "text/plain");
    });
  }
};

HttpServer::HttpServer(Engine& engine) : impl_(new Impl(engine)) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) {
  if (port == 0) {
    if (bind(host, 0) < 0) return false;
    return listen_after_bind();
  }
  return impl_->server.listen(host, port);
}

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->bound_port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  return impl_->bound_port;
}

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace freshrec
