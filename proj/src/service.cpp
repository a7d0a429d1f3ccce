#include "ecd/service.hpp"

#include <charconv>
#include <fstream>

#include "ecd/error.hpp"
#include "httplib.h"

namespace ecd {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error("config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw Error("config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

Response error_response(int status, const std::string& message, json extra = {}) {
  json body = {{"error", message}};
  if (extra.is_object()) body.update(extra);
  return {status, std::move(body)};
}

// Maps the error hierarchy onto status codes.
template <typename F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const ConflictError& e) {
    return error_response(409, e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("bad request: ") + e.what());
  } catch (const Error& e) {
    return error_response(400, e.what());
  }
}

}  // namespace

ServiceConfig parse_service_config(std::istream& in,
                                   const std::filesystem::path& base_dir) {
  ServiceConfig cfg;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  SessionConfig& s = cfg.session;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key == "host") cfg.host = value;
    else if (key == "port") cfg.port = parse_number<int>(key, value);
    else if (key == "session") cfg.session_path = resolve(value);
    else if (key == "session_id") s.session_id = value;
    else if (key == "train") s.train_path = resolve(value);
    else if (key == "pool") s.pool_path = resolve(value);
    else if (key == "eval") s.eval_path = resolve(value);
    else if (key == "target") s.target = parse_label(value);
    else if (key == "k") s.k = parse_number<std::size_t>(key, value);
    else if (key == "max_rounds") s.al.max_rounds = parse_number<int>(key, value);
    else if (key == "seed") s.al.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "strategy") s.al.strategy = parse_strategy(value);
    else if (key == "epochs") s.al.train.epochs = parse_number<int>(key, value);
    else if (key == "batch_size") s.al.train.batch_size = parse_number<int>(key, value);
    else if (key == "learning_rate") s.al.train.learning_rate = parse_double(key, value);
    else if (key == "dropout") s.al.train.dropout = parse_double(key, value);
    else if (key == "hidden_dim") s.al.train.hidden_dim = parse_number<std::uint32_t>(key, value);
    else if (key == "optimizer") s.al.train.optimizer = parse_optimizer(value);
    else if (key == "labels") s.al.train.label_set = label_set_from_count(parse_number<int>(key, value));
    else if (key == "feature_dim") s.al.encoder.feature_dim = parse_number<std::uint32_t>(key, value);
    else if (key == "context_window") s.al.encoder.context_window = parse_number<int>(key, value);
    else throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (cfg.session_path.empty()) throw Error("config: 'session' is required");
  if (cfg.port < 0 || cfg.port > 65535) throw Error("config: port out of range");
  s.al.train.validate();
  s.al.encoder.validate();
  return cfg;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  return parse_service_config(in, path.parent_path());
}

AnnotationService::AnnotationService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (std::filesystem::exists(cfg_.session_path)) {
    session_.emplace(Session::open(cfg_.session_path));
    return;
  }
  for (const auto& [key, path] :
       {std::pair{"train", cfg_.session.train_path}, {"pool", cfg_.session.pool_path},
        {"eval", cfg_.session.eval_path}}) {
    if (path.empty()) throw Error(std::string("config: '") + key + "' is required");
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(std::string("cannot read ") + key + " data " + path.string());
    }
  }
  if (!is_target_label(cfg_.session.target)) {
    throw Error("config: target must be coref or ellipsis");
  }
}

AnnotationService::~AnnotationService() { wait_idle(); }

void AnnotationService::wait_idle() {
  std::thread t;
  {
    std::lock_guard lock(mu_);
    t = std::move(worker_);
  }
  if (t.joinable()) t.join();
}

Response AnnotationService::get_session() const {
  std::lock_guard lock(mu_);
  if (!session_) return {200, {{"session", nullptr}, {"status", "none"}}};
  return {200, session_->snapshot()};
}

Response AnnotationService::get_queue() const {
  std::lock_guard lock(mu_);
  if (!session_) {
    return {200, {{"status", "none"}, {"queue", json::array()},
                  {"progress", {{"annotated", 0}, {"total", 0}}}}};
  }
  json snap = session_->snapshot();
  return {200, {{"status", snap["status"]}, {"round", snap["round"]},
                {"target_label", snap["target_label"]}, {"queue", snap["queue"]},
                {"progress", snap["progress"]}}};
}

Response AnnotationService::get_dialogue(const std::string& id) const {
  return guarded([&]() -> Response {
    std::lock_guard lock(mu_);
    if (!session_) throw NotFoundError("no session");
    return {200, session_->dialogue_json(id)};
  });
}

Response AnnotationService::post_annotation(const std::string& body) {
  return guarded([&]() -> Response {
    const json j = json::parse(body);
    std::lock_guard lock(mu_);
    if (!session_) throw NotFoundError("no session");
    AnnotationRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.label = j.contains("label_name")
                  ? parse_label(j.at("label_name").get<std::string>())
                  : session_->config().target;
    r.value = j.at("value").get<int>();
    r.annotator = j.value("annotator", std::string());
    r.timestamp = j.value("timestamp", std::string());
    const AnnotationRecord stored = session_->submit(std::move(r));
    const json snap = session_->snapshot();
    return {200, {{"ack", true}, {"record", to_json(stored)},
                  {"annotated", snap["progress"]["annotated"]},
                  {"total", snap["progress"]["total"]},
                  {"round_complete", snap["status"] == "round_complete"}}};
  });
}

Response AnnotationService::post_advance() {
  return guarded([&]() -> Response {
    std::unique_lock lock(mu_);
    if (busy_) {
      return error_response(409, "a training job is already running",
                            {{"job_id", std::to_string(next_job_ - 1)}});
    }
    if (!session_) session_.emplace(Session::create(cfg_.session_path, cfg_.session));
    if (session_->status() == SessionStatus::kAnnotating) {
      return error_response(409, "round incomplete",
                            {{"missing", session_->missing_annotations()}});
    }
    RoundInput input = session_->prepare_round();
    const std::string id = std::to_string(next_job_++);
    jobs_[id] = {"running", nullptr, {}};
    busy_ = true;
    std::thread previous = std::move(worker_);
    worker_ = std::thread(&AnnotationService::run_job, this, id, std::move(input));
    lock.unlock();
    if (previous.joinable()) previous.join();
    return {202, {{"job_id", id}, {"status", "running"}}};
  });
}

void AnnotationService::run_job(std::string id, RoundInput input) {
  std::optional<RoundOutcome> outcome;
  std::string error;
  try {
    outcome = Session::compute_round(input);
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::lock_guard lock(mu_);
  Job& job = jobs_[id];
  if (outcome) {
    try {
      session_->commit_round(*outcome);
      const json snap = session_->snapshot();
      job = {"succeeded",
             {{"round", snap["round"]}, {"status", snap["status"]},
              {"f1", outcome->state.history.back().f1},
              {"queue_dialogues", snap["queue"].size()}},
             {}};
    } catch (const std::exception& e) {
      error = e.what();
    }
  }
  if (!error.empty()) job = {"failed", nullptr, error};
  busy_ = false;
}

json AnnotationService::job_json(const std::string& id, const Job& job) const {
  json out = {{"job_id", id}, {"status", job.status}};
  if (!job.result.is_null()) out["result"] = job.result;
  if (!job.error.empty()) out["error"] = job.error;
  return out;
}

Response AnnotationService::get_job(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return error_response(404, "no job '" + id + "'");
  return {200, job_json(id, it->second)};
}

Response AnnotationService::get_metrics() const {
  std::lock_guard lock(mu_);
  if (!session_) return {200, {{"session", nullptr}, {"history", json::array()}}};
  json m = session_->metrics();
  m["training"] = busy_;
  return {200, std::move(m)};
}

HttpServer::HttpServer(AnnotationService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  // httplib defaults to SO_REUSEPORT, which lets a second server share the
  // port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get("/session", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.get_session());
  });
  server_->Get("/queue", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.get_queue());
  });
  server_->Get(R"(/dialogues/([^/]+))",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service_.get_dialogue(req.matches[1]));
               });
  server_->Post("/annotations",
                [this, reply](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service_.post_annotation(req.body));
                });
  server_->Post("/rounds/advance",
                [this, reply](const httplib::Request&, httplib::Response& res) {
                  reply(res, service_.post_advance());
                });
  server_->Get(R"(/jobs/([^/]+))",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service_.get_job(req.matches[1]));
               });
  server_->Get("/metrics", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.get_metrics());
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port) +
                " (port busy?)");
  }
  return port;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { run(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ecd
