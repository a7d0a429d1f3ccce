#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ecd/session.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace ecd {

// `key = value` lines; '#' starts a comment. Relative paths are resolved
// against `base_dir`. Unknown keys are an error.
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path session_path;
  SessionConfig session;  // used when the session file does not exist yet
};

ServiceConfig parse_service_config(std::istream& in,
                                   const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

struct Response {
  int status = 200;
  nlohmann::json body;
};

// The endpoint logic, independent of the transport. Reads and submissions
// are serialized through one mutex; training runs on a worker thread and
// only takes the lock to commit.
class AnnotationService {
 public:
  // Opens the session file when it exists; otherwise the first advance
  // creates it.
  explicit AnnotationService(ServiceConfig cfg);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  Response get_session() const;
  Response get_queue() const;
  Response get_dialogue(const std::string& id) const;
  Response post_annotation(const std::string& body);
  Response post_advance();
  Response get_job(const std::string& id) const;
  Response get_metrics() const;

  // Blocks until no training job is running.
  void wait_idle();

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Job {
    std::string status;  // running, succeeded, failed
    nlohmann::json result;
    std::string error;
  };
  nlohmann::json job_json(const std::string& id, const Job& job) const;
  void run_job(std::string id, RoundInput input);

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::optional<Session> session_;
  std::map<std::string, Job> jobs_;
  int next_job_ = 1;
  bool busy_ = false;
  std::thread worker_;
};

class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();

  // Port 0 picks a free port. Returns the bound port; throws Error when the
  // address is unavailable.
  int bind(const std::string& host, int port);
  void run();    // blocks until stop()
  void start();  // run() on a background thread
  void stop();

 private:
  AnnotationService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace ecd
