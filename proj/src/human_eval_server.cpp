#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "persona_harness/errors.hpp"
#include "persona_harness/human_eval.hpp"

namespace ph {

using nlohmann::json;

struct HumanEvalServer::Impl {
  StudyService& service;
  std::string admin_token;
  httplib::Server server;
  std::thread thread;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;

  Impl(StudyService& s, std::string token) : service(s), admin_token(std::move(token)) {}
};

namespace {

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) return {};
  return h.substr(prefix.size());
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& msg) { reply(res, status, {{"error", msg}}); }

}  // namespace

HumanEvalServer::HumanEvalServer(StudyService& service, std::string admin_token)
    : impl_(std::make_unique<Impl>(service, std::move(admin_token))) {
  if (impl_->admin_token.empty()) throw ConfigError("human evaluation server needs a non-empty admin token");
  auto& srv = impl_->server;
  auto* impl = impl_.get();

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto is_admin = [impl](const httplib::Request& req) { return bearer(req) == impl->admin_token; };
  auto annotator = [impl](const httplib::Request& req) -> std::optional<std::string> {
    const auto t = bearer(req);
    if (t.empty()) return std::nullopt;
    return impl->service.annotator_for_token(t);
  };

  srv.Get("/guidelines", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"guidelines", kAnnotatorGuidelines}});
  });

  srv.Post("/annotators", [impl, is_admin](const httplib::Request& req, httplib::Response& res) {
    if (!is_admin(req)) return error(res, 401, "admin token required");
    const auto [id, token] = impl->service.register_annotator();
    reply(res, 201, {{"annotator_id", id}, {"token", token}});
  });

  srv.Get("/tasks/next", [impl, annotator](const httplib::Request& req, httplib::Response& res) {
    const auto who = annotator(req);
    if (!who) return error(res, 401, "unknown annotator token");
    const auto task = impl->service.next_task(*who);
    if (!task) {
      res.status = 204;
      return;
    }
    reply(res, 200, task_payload(*task, impl->service.item(task->item_id)));
  });

  srv.Post(R"(/tasks/(\d+)/judgment)", [impl, annotator](const httplib::Request& req, httplib::Response& res) {
    const auto who = annotator(req);
    if (!who) return error(res, 401, "unknown annotator token");
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("choice") || !body["choice"].is_string()) {
      return error(res, 400, "body must be a JSON object with a string \"choice\"");
    }
    std::string comment;
    if (body.contains("comment")) {
      if (!body["comment"].is_string()) return error(res, 400, "\"comment\" must be a string");
      comment = body["comment"].get<std::string>();
    }
    const auto task_id = std::stoll(req.matches[1].str());
    const auto r = impl->service.submit_judgment(task_id, *who, body["choice"].get<std::string>(), comment);
    switch (r.status) {
      case SubmitStatus::ok: return reply(res, 200, {{"task_id", task_id}, {"status", "submitted"}});
      case SubmitStatus::not_found: return error(res, 404, r.message);
      case SubmitStatus::bad_request: return error(res, 400, r.message);
      case SubmitStatus::expired: return error(res, 410, r.message);
      case SubmitStatus::conflict: return error(res, 409, r.message);
    }
  });

  srv.Get("/progress", [impl, is_admin](const httplib::Request& req, httplib::Response& res) {
    if (!is_admin(req)) return error(res, 401, "admin token required");
    json strata = json::object();
    std::size_t judgments = 0, target = 0;
    for (const auto& [k, p] : impl->service.progress()) {
      strata[k] = {{"items", p.items},
                   {"completed_items", p.completed_items},
                   {"judgments", p.judgments},
                   {"target_judgments", p.target_judgments},
                   {"in_flight", p.in_flight}};
      judgments += p.judgments;
      target += p.target_judgments;
    }
    reply(res, 200, {{"strata", strata}, {"judgments", judgments}, {"target_judgments", target}});
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      error(res, 500, e.what());
    } catch (...) {
      error(res, 500, "internal error");
    }
  });
}

HumanEvalServer::~HumanEvalServer() { stop(); }

int HumanEvalServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] {
    impl_->server.listen_after_bind();
    std::lock_guard lock(impl_->mutex);
    impl_->stopped = true;
    impl_->stopped_cv.notify_all();
  });
  srv.wait_until_ready();
  return bound;
}

void HumanEvalServer::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

void HumanEvalServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ph
