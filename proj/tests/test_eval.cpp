#include <cmath>
#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "ecd/error.hpp"
#include "ecd/eval.hpp"
#include "ecd/rng.hpp"
#include "oracles.hpp"

using namespace ecd;

namespace {

void check_score(double got, bool undefined, double expected) {
  CHECK(oracle::score_matches(got, undefined, expected));
}

std::vector<IdLabels> ids(const std::vector<LabelVector>& v) {
  std::vector<IdLabels> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({"i" + std::to_string(i), v[i]});
  return out;
}

LabelVector coref(int v) { return {v, -1, -1, -1}; }

}  // namespace

TEST_CASE("prf1 on enumerated confusion fixtures") {
  for (const auto& f : oracle::score_fixtures()) {
    CAPTURE(f.counts.tp);
    CAPTURE(f.counts.fp);
    CAPTURE(f.counts.fn);
    const Scores s = prf1(f.counts);
    check_score(s.precision, s.precision_undefined, f.p);
    check_score(s.recall, s.recall_undefined, f.r);
    check_score(s.f1, s.f1_undefined, f.f1);
  }
}

TEST_CASE("scores are invariant to scaling the counts") {
  for (const auto& f : oracle::score_fixtures()) {
    const Scores a = prf1(f.counts);
    for (std::int64_t k : {2, 7, 1000}) {
      const ConfusionCounts c{f.counts.tp * k, f.counts.fp * k, f.counts.fn * k,
                              f.counts.tn * k};
      const Scores b = prf1(c);
      CHECK(std::abs(a.f1 - b.f1) <= 1e-9);
      CHECK(std::abs(a.precision - b.precision) <= 1e-9);
      CHECK(a.f1_undefined == b.f1_undefined);
    }
  }
}

TEST_CASE("a hand-tallied seven-instance set") {
  // gold:  1  1  0  0  1 -1  0
  // pred:  1  0  1  0  1  1  0
  const auto golds = ids({coref(1), coref(1), coref(0), coref(0), coref(1), coref(-1), coref(0)});
  const auto preds = ids({coref(1), coref(0), coref(1), coref(0), coref(1), coref(1), coref(0)});
  const ConfusionCounts c = confusion(preds, golds, Label::kCoref);
  CHECK(c == ConfusionCounts{2, 1, 1, 2});
  const Scores s = prf1(c);
  CHECK(s.precision == doctest::Approx(200.0 / 3));
  CHECK(s.recall == doctest::Approx(200.0 / 3));
  CHECK(s.f1 == doctest::Approx(200.0 / 3));
}

TEST_CASE("two true positives, one false positive, two false negatives") {
  const Scores s = prf1({2, 1, 2, 0});
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f %.1f %.1f", s.precision, s.recall, s.f1);
  CHECK(std::string(buf) == "66.7 50.0 57.1");
}

TEST_CASE("unknown golds are skipped whatever the prediction") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabelVector> gold, pred;
    for (int i = 0; i < 30; ++i) {
      gold.push_back(coref(static_cast<int>(rng.below(2))));
      pred.push_back(coref(static_cast<int>(rng.below(2))));
    }
    const ConfusionCounts base = confusion(ids(pred), ids(gold), Label::kCoref);
    for (int i = 0; i < 10; ++i) {
      gold.push_back(coref(-1));
      pred.push_back(coref(static_cast<int>(rng.below(2))));
    }
    CHECK(confusion(ids(pred), ids(gold), Label::kCoref) == base);
    CHECK(base.total() == 30);
  }
}

TEST_CASE("pairing is by id and rejects mismatches") {
  std::vector<IdLabels> preds = {{"b", coref(1)}, {"a", coref(0)}};
  std::vector<IdLabels> golds = {{"a", coref(1)}, {"b", coref(1)}};
  CHECK(confusion(preds, golds, Label::kCoref) == ConfusionCounts{1, 0, 1, 0});
  CHECK_THROWS_AS(confusion(preds, std::vector<IdLabels>{{"a", coref(1)}}, Label::kCoref), Error);
  std::vector<IdLabels> dup = {{"a", coref(1)}, {"a", coref(0)}};
  CHECK_THROWS_AS(confusion(dup, golds, Label::kCoref), Error);
  CHECK_THROWS_AS(confusion(preds, dup, Label::kCoref), Error);
  std::vector<IdLabels> other = {{"a", coref(1)}, {"c", coref(1)}};
  CHECK_THROWS_AS(confusion(preds, other, Label::kCoref), Error);
}

TEST_CASE("text and JSON reports agree") {
  const auto golds = ids({{1, 0, 1, 1}, {0, 1, 1, 0}, {0, 0, 0, 0}, {1, 1, 1, 0}});
  const auto preds = ids({{1, 0, 1, 1}, {1, 1, 1, 0}, {0, 0, 0, 0}, {0, 1, 1, 0}});
  Report report;
  const std::vector<Label> cols = {Label::kCoref, Label::kEllipsis};
  report.rows.push_back(evaluate_predictions(preds, golds, cols, "GECOR"));
  report.rows.push_back(evaluate_predictions(preds, ids({coref(0), coref(0), coref(0), coref(0)}),
                                             cols, "all negative"));
  const std::string text = report.to_text();
  const nlohmann::json j = report.to_json();
  CHECK(j["labels"] == nlohmann::json::array({"coref", "ellipsis"}));
  REQUIRE(j["rows"].size() == 2);

  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line.find("Coreference") != std::string::npos);
  CHECK(line.find("Ellipsis") != std::string::npos);
  std::getline(lines, line);
  for (const auto& row : j["rows"]) {
    std::getline(lines, line);
    CHECK(line.rfind(row["name"].get<std::string>(), 0) == 0);
    for (const char* label : {"coref", "ellipsis"}) {
      for (const char* key : {"P", "R", "F1"}) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", row[label][key].get<double>());
        CHECK(line.find(buf) != std::string::npos);
      }
    }
  }
  CHECK(j["rows"][0]["coref"]["F1"].get<double>() == doctest::Approx(50.0));
  CHECK(j["rows"][0]["ellipsis"]["tp"] == 2);
  // No positives in gold: recall and F1 undefined, flagged in the text.
  CHECK(j["rows"][1]["coref"]["recall_undefined"] == true);
  CHECK(j["rows"][1]["ellipsis"]["tp"] == 0);
  CHECK(text.find('*') != std::string::npos);
  CHECK_THROWS_AS(report.rows[0].at(Label::kInc), Error);
}
