#include <httplib.h>

#include "mfseg/service.hpp"

namespace mfseg {

struct HttpServer::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(2) + "\n", "application/json");
}

QueryParams query_of(const httplib::Request& req) {
  QueryParams q;
  for (const auto& [key, value] : req.params) q.emplace_back(key, value);
  return q;
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  Service& s = impl_->service;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  svr.Post("/api/segment", [&s](const httplib::Request& req, httplib::Response& res) { reply(res, s.segment(req.body)); });
  svr.Get(R"(/api/jobs/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.job(req.matches[1].str()));
  });
  svr.Get("/api/centers", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.centers(query_of(req)));
  });
  svr.Get(R"(/api/features/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.feature(req.matches[1].str(), query_of(req)));
  });
  svr.Post("/api/merge", [&s](const httplib::Request& req, httplib::Response& res) { reply(res, s.merge(req.body)); });
  svr.Get("/api/dataset/meta", [&s](const httplib::Request&, httplib::Response& res) { reply(res, s.dataset_meta()); });
  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, {500, {{"error", what}}});
  });
  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) reply(res, {res.status, {{"error", "no route for " + req.method + " " + req.path}}});
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace mfseg
