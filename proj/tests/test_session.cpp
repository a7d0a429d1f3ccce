#include <fstream>

#include "al_fixture.hpp"
#include "doctest.h"
#include "ecd/error.hpp"
#include "ecd/session.hpp"

using namespace ecd;
using ecd::testing::TempDir;

namespace {

const ALBenchmark& bench() {
  static const ALBenchmark b = make_al_benchmark(Label::kCoref, 3);
  return b;
}

AnnotationRecord gold(const std::string& id) {
  AnnotationRecord r;
  r.instance_id = id;
  r.label = Label::kCoref;
  r.value = bench().truth.at(id)[Label::kCoref];
  r.annotator = "oracle";
  r.timestamp = "2026-01-01T00:00:00Z";
  return r;
}

void annotate_all(Session& s) {
  for (const std::string& id : s.missing_annotations()) s.submit(gold(id));
}

}  // namespace

TEST_CASE("a new session is fresh and persists its configuration") {
  TempDir dir;
  const SessionConfig cfg = ecd::testing::write_benchmark(dir, bench());
  const auto path = dir / "s.json";
  Session s = Session::create(path, cfg);
  CHECK(s.status() == SessionStatus::kFresh);
  CHECK(s.queue().empty());
  CHECK(std::filesystem::exists(Session::log_path(path)));
  CHECK(Session::open(path).canonical_snapshot() == s.canonical_snapshot());
  CHECK_THROWS_AS(Session::create(path, cfg), Error);

  SessionConfig bad = cfg;
  bad.target = Label::kPronoun;
  CHECK_THROWS_AS(Session::create(dir / "t.json", bad), Error);
  bad = cfg;
  bad.k = 0;
  CHECK_THROWS_AS(Session::create(dir / "u.json", bad), Error);
  bad = cfg;
  bad.pool_path = dir / "missing.jsonl";
  CHECK_THROWS_AS(Session::create(dir / "v.json", bad), Error);
  CHECK(session_config_from_json(to_json(cfg)).k == cfg.k);
}

TEST_CASE("restarting replays the log into an identical snapshot") {
  TempDir dir;
  const auto path = dir / "s.json";
  Session s = Session::create(path, ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  CHECK(s.status() == SessionStatus::kAnnotating);
  CHECK(s.queue().size() == 3);
  CHECK(Session::open(path).canonical_snapshot() == s.canonical_snapshot());
  CHECK(std::filesystem::exists(Session::model_path(path)));

  // Partly annotated.
  const auto missing = s.missing_annotations();
  REQUIRE(missing.size() >= 2);
  s.submit(gold(missing[0]));
  s.submit(gold(missing[1]));
  const std::string partial = s.canonical_snapshot();
  Session reopened = Session::open(path);
  CHECK(reopened.canonical_snapshot() == partial);
  CHECK(reopened.state() == s.state());
  CHECK(reopened.queue() == s.queue());

  // The reopened session carries on, and a second restart sees both halves.
  annotate_all(reopened);
  CHECK(reopened.status() == SessionStatus::kRoundComplete);
  CHECK(Session::open(path).canonical_snapshot() == reopened.canonical_snapshot());
  reopened.advance();
  const Session after = Session::open(path);
  CHECK(after.canonical_snapshot() == reopened.canonical_snapshot());
  CHECK(after.state().round == 2);
  CHECK(after.state().history.size() == 2);
  CHECK(after.metrics()["last_report"]["rows"].size() == 1);
}

TEST_CASE("submission checks") {
  TempDir dir;
  const auto path = dir / "s.json";
  Session s = Session::create(path, ecd::testing::write_benchmark(dir, bench()));
  CHECK_THROWS_AS(s.submit(gold(bench().truth.begin()->first)), NotFoundError);
  s.advance();
  const std::string id = s.missing_annotations().front();

  AnnotationRecord wrong_label = gold(id);
  wrong_label.label = Label::kEllipsis;
  CHECK_THROWS_AS(s.submit(wrong_label), Error);
  AnnotationRecord bad_value = gold(id);
  bad_value.value = 3;
  CHECK_THROWS_AS(s.submit(bad_value), Error);
  AnnotationRecord outside = gold(id);
  outside.instance_id = "nope";
  CHECK_THROWS_AS(s.submit(outside), NotFoundError);

  AnnotationRecord no_time = gold(id);
  no_time.timestamp.clear();
  const AnnotationRecord stored = s.submit(no_time);
  CHECK(stored.round == 0);
  CHECK(stored.timestamp.size() == 20);
  CHECK_THROWS_AS(s.submit(gold(id)), ConflictError);
  CHECK(s.state().labeled_so_far.size() == 1);
}

TEST_CASE("advancing an incomplete round lists the missing instances") {
  TempDir dir;
  Session s = Session::create(dir / "s.json", ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  const auto missing = s.missing_annotations();
  s.submit(gold(missing[0]));
  try {
    s.advance();
    FAIL("expected a conflict");
  } catch (const ConflictError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(missing[0]) == std::string::npos);
    for (std::size_t i = 1; i < missing.size(); ++i) CHECK(msg.find(missing[i]) != std::string::npos);
  }
}

TEST_CASE("the status flips when the last queued question is annotated") {
  TempDir dir;
  Session s = Session::create(dir / "s.json", ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  auto missing = s.missing_annotations();
  const std::string last = missing.back();
  missing.pop_back();
  for (const auto& id : missing) s.submit(gold(id));
  CHECK(s.status() == SessionStatus::kAnnotating);
  CHECK(s.snapshot()["progress"]["annotated"] == missing.size());
  s.submit(gold(last));
  CHECK(s.status() == SessionStatus::kRoundComplete);
  CHECK(s.snapshot()["status"] == "round_complete");
}

TEST_CASE("a torn final log line is dropped on open") {
  TempDir dir;
  const auto path = dir / "s.json";
  Session s = Session::create(path, ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  const auto missing = s.missing_annotations();
  s.submit(gold(missing[0]));
  const std::string before = s.canonical_snapshot();
  const auto log = Session::log_path(path);
  const auto size = std::filesystem::file_size(log);
  {
    std::ofstream out(log, std::ios::app);
    out << R"({"instance_id":")" << missing[1] << R"(","label_na)";
  }
  Session reopened = Session::open(path);
  CHECK(reopened.canonical_snapshot() == before);
  CHECK(std::filesystem::file_size(log) == size);
  reopened.submit(gold(missing[1]));
  CHECK(Session::open(path).state().labeled_so_far.size() == 2);

  // Damage before the end is not silently dropped.
  {
    std::ofstream out(log, std::ios::app);
    out << "garbage\n";
  }
  CHECK_THROWS_AS(Session::open(path), Error);
}

TEST_CASE("a session stops at the round cap and refuses more work") {
  TempDir dir;
  SessionConfig cfg = ecd::testing::write_benchmark(dir, bench());
  cfg.al.max_rounds = 0;
  const auto path = dir / "s.json";
  Session s = Session::create(path, cfg);
  s.advance();
  CHECK(s.status() == SessionStatus::kStopped);
  CHECK(s.queue().empty());
  CHECK_THROWS_AS(s.advance(), ConflictError);
  CHECK_THROWS_AS(s.submit(gold(bench().truth.begin()->first)), ConflictError);
  CHECK(Session::open(path).status() == SessionStatus::kStopped);
}

TEST_CASE("a stale round outcome is not committed") {
  TempDir dir;
  Session s = Session::create(dir / "s.json", ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  annotate_all(s);
  const RoundInput input = s.prepare_round();
  const RoundOutcome outcome = Session::compute_round(input);
  s.commit_round(outcome);
  CHECK_THROWS_AS(s.commit_round(outcome), ConflictError);
}

TEST_CASE("dialogue view") {
  TempDir dir;
  Session s = Session::create(dir / "s.json", ecd::testing::write_benchmark(dir, bench()));
  s.advance();
  const QueuedDialogue& d = s.queue().front();
  s.submit(gold(d.questions.front().instance_id));
  const auto j = s.dialogue_json(d.dialogue_id);
  CHECK(j["dialogue_id"] == d.dialogue_id);
  REQUIRE(j["turns"].size() >= 3);
  CHECK(j["turns"][0]["speaker"] == "question");
  CHECK(j["turns"][0]["index"] == 1);
  int queued = 0, annotated = 0;
  for (const auto& q : j["questions"]) {
    queued += q["queued"].get<bool>();
    annotated += q["annotated"].get<bool>();
    if (!q["queued"].get<bool>()) CHECK(q["known"] == true);
  }
  CHECK(queued == static_cast<int>(d.questions.size()));
  CHECK(annotated == 1);
  CHECK_THROWS_AS(s.dialogue_json("no-such-dialogue"), NotFoundError);
}
