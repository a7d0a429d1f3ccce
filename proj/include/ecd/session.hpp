#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecd/active_learning.hpp"
#include "json.hpp"

namespace ecd {

struct SessionConfig {
  std::string session_id;
  Label target = Label::kCoref;
  std::filesystem::path train_path;  // labeled GECOR-style instances
  std::filesystem::path pool_path;   // CANARD-style instances
  std::filesystem::path eval_path;
  std::size_t k = 50;  // dialogues per round
  ALConfig al;
};

nlohmann::json to_json(const SessionConfig& cfg);
SessionConfig session_config_from_json(const nlohmann::json& record);

enum class SessionStatus { kFresh, kAnnotating, kRoundComplete, kStopped };

std::string_view status_name(SessionStatus s);

struct QueuedQuestion {
  std::string instance_id;
  double prediction = 0;  // target-label output

  bool operator==(const QueuedQuestion&) const = default;
};

struct QueuedDialogue {
  std::string dialogue_id;
  double certainty = 0;
  std::vector<QueuedQuestion> questions;

  bool operator==(const QueuedDialogue&) const = default;
};

// Everything a round needs, copied out so training can run without holding
// the session.
struct RoundInput {
  ALState state;
  ALConfig config;
  std::shared_ptr<const ALData> data;
};

// One active-learning session on disk:
//   <path>                    session file, rewritten atomically per round
//   <path>.annotations.jsonl  append-only annotation log
// The session file never holds annotations; the log is replayed on open.
// Not thread-safe.
class Session {
 public:
  // Throws Error when the session file already exists.
  static Session create(const std::filesystem::path& path, SessionConfig cfg);
  static Session open(const std::filesystem::path& path);
  static std::filesystem::path log_path(const std::filesystem::path& path);
  static std::filesystem::path model_path(const std::filesystem::path& path);

  const SessionConfig& config() const { return config_; }
  const ALState& state() const { return state_; }
  const std::vector<QueuedDialogue>& queue() const { return queue_; }
  SessionStatus status() const;

  // Validates, appends to the log with fsync, then applies. Fills in round and
  // a missing timestamp. Throws NotFoundError for an instance outside the
  // queue, ConflictError for a duplicate or a finished session, Error for a
  // label other than the target or a value outside {0, 1}.
  AnnotationRecord submit(AnnotationRecord record);

  // Queued instances without an annotation, in queue order.
  std::vector<std::string> missing_annotations() const;

  // Throws ConflictError unless the session is fresh or round-complete; the
  // message lists missing instance ids.
  RoundInput prepare_round() const;
  static RoundOutcome compute_round(const RoundInput& input);
  // Throws ConflictError when the session moved on since prepare_round.
  void commit_round(const RoundOutcome& outcome);
  // prepare + compute + commit.
  void advance();

  nlohmann::json snapshot() const;
  std::string canonical_snapshot() const;
  // Turns and questions of one pool dialogue. Throws NotFoundError.
  nlohmann::json dialogue_json(std::string_view dialogue_id) const;
  nlohmann::json metrics() const;

 private:
  Session() = default;
  void load_data();
  void write_session_file() const;
  bool in_queue(std::string_view instance_id) const;

  std::filesystem::path path_;
  SessionConfig config_;
  ALState state_;
  std::vector<QueuedDialogue> queue_;
  bool stopped_ = false;
  std::optional<nlohmann::json> last_report_;
  std::shared_ptr<const ALData> data_;
  std::map<std::string, const Instance*, std::less<>> pool_by_id_;
};

// Current UTC time, ISO 8601 with seconds.
std::string utc_timestamp();

}  // namespace ecd
