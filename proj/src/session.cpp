#include "ecd/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "ecd/corpus.hpp"
#include "ecd/error.hpp"

namespace ecd {
namespace {

using nlohmann::json;

constexpr int kSessionFormatVersion = 1;

[[noreturn]] void fail_io(const std::string& what, const std::filesystem::path& p) {
  throw Error(what + " " + p.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view bytes, const std::filesystem::path& p) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_io("write failed for", p);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) fail_io("cannot write", tmp);
  write_all(fd, bytes, tmp);
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail_io("fsync failed for", tmp);
  }
  ::close(fd);
  std::filesystem::rename(tmp, path);
  fsync_dir(path.parent_path());
}

void append_durable(const std::filesystem::path& path, std::string_view line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) fail_io("cannot append to", path);
  write_all(fd, line, path);
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail_io("fsync failed for", path);
  }
  ::close(fd);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json history_json(const std::vector<HistoryEntry>& history) {
  json out = json::array();
  for (const HistoryEntry& h : history) out.push_back({{"round", h.round}, {"f1", h.f1}});
  return out;
}

json queue_json(const std::vector<QueuedDialogue>& queue) {
  json out = json::array();
  for (const QueuedDialogue& d : queue) {
    json questions = json::array();
    for (const QueuedQuestion& q : d.questions) {
      questions.push_back({{"instance_id", q.instance_id}, {"prediction", q.prediction}});
    }
    out.push_back({{"dialogue_id", d.dialogue_id},
                   {"certainty", d.certainty},
                   {"questions", std::move(questions)}});
  }
  return out;
}

std::vector<QueuedDialogue> queue_from_json(const json& j) {
  std::vector<QueuedDialogue> out;
  for (const json& d : j) {
    QueuedDialogue qd;
    qd.dialogue_id = d.at("dialogue_id").get<std::string>();
    qd.certainty = d.at("certainty").get<double>();
    for (const json& q : d.at("questions")) {
      qd.questions.push_back(
          {q.at("instance_id").get<std::string>(), q.at("prediction").get<double>()});
    }
    out.push_back(std::move(qd));
  }
  return out;
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json to_json(const SessionConfig& cfg) {
  return {{"session_id", cfg.session_id},
          {"target_label", label_name(cfg.target)},
          {"train_path", cfg.train_path.string()},
          {"pool_path", cfg.pool_path.string()},
          {"eval_path", cfg.eval_path.string()},
          {"k", cfg.k},
          {"max_rounds", cfg.al.max_rounds},
          {"strategy", strategy_name(cfg.al.strategy)},
          {"seed", cfg.al.seed},
          {"train", to_json(cfg.al.train)},
          {"encoder", to_json(cfg.al.encoder)}};
}

SessionConfig session_config_from_json(const json& j) {
  SessionConfig cfg;
  cfg.session_id = j.at("session_id").get<std::string>();
  cfg.target = parse_label(j.at("target_label").get<std::string>());
  cfg.train_path = j.at("train_path").get<std::string>();
  cfg.pool_path = j.at("pool_path").get<std::string>();
  cfg.eval_path = j.at("eval_path").get<std::string>();
  cfg.k = j.value("k", cfg.k);
  cfg.al.max_rounds = j.value("max_rounds", cfg.al.max_rounds);
  cfg.al.strategy = parse_strategy(j.value("strategy", std::string("uncertainty")));
  cfg.al.seed = j.value("seed", cfg.al.seed);
  cfg.al.train = train_config_from_json(j.value("train", json::object()));
  cfg.al.encoder = encoder_spec_from_json(j.value("encoder", json::object()));
  return cfg;
}

std::string_view status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::kFresh: return "fresh";
    case SessionStatus::kAnnotating: return "annotating";
    case SessionStatus::kRoundComplete: return "round_complete";
    case SessionStatus::kStopped: return "stopped";
  }
  return "?";
}

std::filesystem::path Session::log_path(const std::filesystem::path& path) {
  return path.string() + ".annotations.jsonl";
}

std::filesystem::path Session::model_path(const std::filesystem::path& path) {
  return path.string() + ".model";
}

Session Session::create(const std::filesystem::path& path, SessionConfig cfg) {
  if (std::filesystem::exists(path)) {
    throw Error("session file already exists: " + path.string());
  }
  if (!is_target_label(cfg.target)) {
    throw Error("session target must be coref or ellipsis");
  }
  if (cfg.k == 0) throw Error("k must be at least 1");
  if (cfg.al.max_rounds < 0) throw Error("max_rounds must be >= 0");
  cfg.al.train.validate();
  cfg.al.encoder.validate();
  cfg.train_path = std::filesystem::absolute(cfg.train_path);
  cfg.pool_path = std::filesystem::absolute(cfg.pool_path);
  cfg.eval_path = std::filesystem::absolute(cfg.eval_path);
  if (cfg.session_id.empty()) cfg.session_id = path.stem().string();

  Session s;
  s.path_ = path;
  s.config_ = std::move(cfg);
  s.state_.target = s.config_.target;
  s.state_.batch_size_dialogues = s.config_.k;
  s.load_data();
  const auto log = log_path(path);
  if (std::filesystem::exists(log) && std::filesystem::file_size(log) > 0) {
    throw Error("annotation log already exists: " + log.string());
  }
  append_durable(log, "");
  s.write_session_file();
  return s;
}

Session Session::open(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("corrupt session file " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "ecd-session" ||
      j.value("version", 0) != kSessionFormatVersion) {
    throw Error("not a session file: " + path.string());
  }
  Session s;
  s.path_ = path;
  s.config_ = session_config_from_json(j.at("config"));
  s.state_.target = s.config_.target;
  s.state_.batch_size_dialogues = s.config_.k;
  s.state_.round = j.at("round").get<int>();
  for (const json& h : j.at("history")) {
    s.state_.history.push_back({h.at("round").get<int>(), h.at("f1").get<double>()});
  }
  s.queue_ = queue_from_json(j.at("queue"));
  s.stopped_ = j.at("stopped").get<bool>();
  if (j.contains("last_report") && !j.at("last_report").is_null()) {
    s.last_report_ = j.at("last_report");
  }
  s.load_data();

  const auto log = log_path(path);
  if (!std::filesystem::exists(log)) return s;
  const std::string text = read_file(log);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      // A torn final write was never acknowledged; drop it so later appends
      // start on a fresh line.
      std::filesystem::resize_file(log, pos);
      break;
    }
    ++line_no;
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    AnnotationRecord r;
    try {
      r = annotation_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw Error(log.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!s.pool_by_id_.contains(r.instance_id)) {
      throw Error(log.string() + ":" + std::to_string(line_no) +
                  ": unknown instance '" + r.instance_id + "'");
    }
    s.state_.add_annotation(std::move(r));
  }
  return s;
}

void Session::load_data() {
  auto data = std::make_shared<ALData>();
  data->gecor = read_instances(config_.train_path);
  data->canard = read_instances(config_.pool_path);
  data->eval = read_instances(config_.eval_path);
  data_ = data;
  pool_by_id_.clear();
  for (const Instance& inst : data_->canard) {
    if (inst.labels[config_.target] == -1) pool_by_id_.emplace(inst.id, &inst);
  }
}

void Session::write_session_file() const {
  json j = {{"format", "ecd-session"},
            {"version", kSessionFormatVersion},
            {"config", to_json(config_)},
            {"round", state_.round},
            {"history", history_json(state_.history)},
            {"queue", queue_json(queue_)},
            {"stopped", stopped_},
            {"last_report", last_report_ ? *last_report_ : json(nullptr)}};
  atomic_write(path_, j.dump(2) + "\n");
}

bool Session::in_queue(std::string_view instance_id) const {
  for (const QueuedDialogue& d : queue_) {
    for (const QueuedQuestion& q : d.questions) {
      if (q.instance_id == instance_id) return true;
    }
  }
  return false;
}

SessionStatus Session::status() const {
  if (stopped_) return SessionStatus::kStopped;
  if (queue_.empty()) return SessionStatus::kFresh;
  return missing_annotations().empty() ? SessionStatus::kRoundComplete
                                       : SessionStatus::kAnnotating;
}

std::vector<std::string> Session::missing_annotations() const {
  std::vector<std::string> out;
  for (const QueuedDialogue& d : queue_) {
    for (const QueuedQuestion& q : d.questions) {
      if (!state_.has_annotation(q.instance_id, config_.target)) {
        out.push_back(q.instance_id);
      }
    }
  }
  return out;
}

AnnotationRecord Session::submit(AnnotationRecord record) {
  if (stopped_) throw ConflictError("session is stopped");
  if (record.label != config_.target) {
    throw Error("label " + std::string(label_name(record.label)) +
                " does not match the session target " +
                std::string(label_name(config_.target)));
  }
  if (record.value != 0 && record.value != 1) {
    throw Error("annotation value must be 0 or 1");
  }
  if (!in_queue(record.instance_id)) {
    throw NotFoundError("instance '" + record.instance_id + "' is not in the queue");
  }
  if (state_.has_annotation(record.instance_id, record.label)) {
    throw ConflictError("instance '" + record.instance_id + "' is already annotated");
  }
  record.round = state_.round - 1;
  if (record.timestamp.empty()) record.timestamp = utc_timestamp();
  append_durable(log_path(path_), to_json(record).dump() + "\n");
  state_.add_annotation(record);
  return record;
}

RoundInput Session::prepare_round() const {
  switch (status()) {
    case SessionStatus::kFresh:
    case SessionStatus::kRoundComplete:
      break;
    case SessionStatus::kStopped:
      throw ConflictError("session is stopped");
    case SessionStatus::kAnnotating: {
      std::string msg = "round incomplete; missing annotations:";
      for (const std::string& id : missing_annotations()) msg += " " + id;
      throw ConflictError(msg);
    }
  }
  return {state_, config_.al, data_};
}

RoundOutcome Session::compute_round(const RoundInput& input) {
  return run_round(input.state, *input.data, input.config);
}

void Session::commit_round(const RoundOutcome& outcome) {
  if (outcome.state.round != state_.round + 1 ||
      outcome.state.labeled_so_far != state_.labeled_so_far) {
    throw ConflictError("session changed while the round was computed");
  }
  std::vector<QueuedDialogue> queue;
  for (std::size_t i = 0; i < outcome.queue.size(); ++i) {
    QueuedDialogue d{outcome.queue[i], outcome.queue_certainty[i], {}};
    for (const PoolEntry& e : outcome.queued) {
      if (e.dialogue_id == d.dialogue_id) {
        d.questions.push_back({e.instance.id, (*e.prediction)[config_.target]});
      }
    }
    queue.push_back(std::move(d));
  }
  const bool stop = should_stop(outcome.state.history, config_.al.max_rounds);

  Model model{config_.al.encoder, config_.al.train.label_set, outcome.params};
  save_model(model, model_path(path_));

  state_ = outcome.state;
  stopped_ = stop;
  queue_ = stop ? std::vector<QueuedDialogue>{} : std::move(queue);
  Report report;
  report.rows.push_back(outcome.report);
  last_report_ = report.to_json();
  write_session_file();
}

void Session::advance() { commit_round(compute_round(prepare_round())); }

json Session::snapshot() const {
  json queue = json::array();
  std::size_t annotated = 0, total = 0;
  for (const QueuedDialogue& d : queue_) {
    json questions = json::array();
    for (const QueuedQuestion& q : d.questions) {
      const Instance* inst = pool_by_id_.at(q.instance_id);
      json value = nullptr;
      for (const AnnotationRecord& r : state_.labeled_so_far) {
        if (r.instance_id == q.instance_id && r.label == config_.target) value = r.value;
      }
      const bool done = !value.is_null();
      annotated += done ? 1 : 0;
      ++total;
      questions.push_back({{"instance_id", q.instance_id},
                           {"index", static_cast<int>(inst->context.size()) / 2 + 1},
                           {"question", inst->question},
                           {"prediction", q.prediction},
                           {"certainty", std::abs(q.prediction - 0.5)},
                           {"annotated", done},
                           {"value", value}});
    }
    queue.push_back({{"dialogue_id", d.dialogue_id},
                     {"certainty", d.certainty},
                     {"questions", std::move(questions)}});
  }
  return {{"session_id", config_.session_id},
          {"target_label", label_name(config_.target)},
          {"round", state_.round},
          {"status", status_name(status())},
          {"queue", std::move(queue)},
          {"progress", {{"annotated", annotated}, {"total", total}}},
          {"annotations", state_.labeled_so_far.size()},
          {"history", history_json(state_.history)},
          {"config", to_json(config_)}};
}

std::string Session::canonical_snapshot() const { return snapshot().dump(); }

json Session::dialogue_json(std::string_view dialogue_id) const {
  std::vector<const Instance*> originals;
  for (const Instance& inst : data_->canard) {
    if (inst.dialogue_id == dialogue_id && inst.variant_kind != VariantKind::kComplete) {
      originals.push_back(&inst);
    }
  }
  if (originals.empty()) {
    throw NotFoundError("no dialogue '" + std::string(dialogue_id) + "' in the pool");
  }
  const Instance* longest = originals.front();
  for (const Instance* inst : originals) {
    if (inst->context.size() > longest->context.size()) longest = inst;
  }
  json turns = json::array();
  for (const Turn& t : longest->context) {
    turns.push_back({{"index", t.index}, {"speaker", speaker_name(t.speaker)},
                     {"text", t.text}});
  }
  turns.push_back({{"index", static_cast<int>(longest->context.size()) + 1},
                   {"speaker", speaker_name(Speaker::kQuestion)},
                   {"text", longest->question}});

  std::map<std::string, double, std::less<>> predictions;
  for (const QueuedDialogue& d : queue_) {
    if (d.dialogue_id != dialogue_id) continue;
    for (const QueuedQuestion& q : d.questions) predictions[q.instance_id] = q.prediction;
  }
  json questions = json::array();
  for (const Instance* inst : originals) {
    json value = nullptr;
    for (const AnnotationRecord& r : state_.labeled_so_far) {
      if (r.instance_id == inst->id && r.label == config_.target) value = r.value;
    }
    auto it = predictions.find(inst->id);
    questions.push_back(
        {{"instance_id", inst->id},
         {"index", static_cast<int>(inst->context.size()) / 2 + 1},
         {"question", inst->question},
         {"queued", it != predictions.end()},
         {"prediction", it != predictions.end() ? json(it->second) : json(nullptr)},
         {"known", inst->labels[config_.target] != -1},
         {"annotated", !value.is_null()},
         {"value", value}});
  }
  return {{"dialogue_id", std::string(dialogue_id)},
          {"turns", std::move(turns)},
          {"questions", std::move(questions)}};
}

json Session::metrics() const {
  return {{"session_id", config_.session_id},
          {"target_label", label_name(config_.target)},
          {"status", status_name(status())},
          {"round", state_.round},
          {"history", history_json(state_.history)},
          {"annotations", state_.labeled_so_far.size()},
          {"last_report", last_report_ ? *last_report_ : json(nullptr)}};
}

}  // namespace ecd
