#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecd/dialogue.hpp"
#include "ecd/encoder.hpp"
#include "ecd/label_vector.hpp"
#include "ecd/model.hpp"
#include "json.hpp"

namespace ecd {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct IdLabels {
  std::string id;
  LabelVector labels;
};

// Pairs predictions with golds by id; golds equal to -1 for `label` are
// skipped. Throws Error if the id sets differ or contain duplicates.
ConfusionCounts confusion(std::span<const IdLabels> preds,
                          std::span<const IdLabels> golds, Label label);

// Percentages. An undefined ratio is reported as 0 with its flag set.
struct Scores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  bool degenerate() const {
    return precision_undefined || recall_undefined || f1_undefined;
  }
};

Scores prf1(const ConfusionCounts& c);

struct LabelReport {
  Label label;
  ConfusionCounts counts;
  Scores scores;
};

struct ReportRow {
  std::string name;
  std::vector<LabelReport> labels;

  const LabelReport& at(Label label) const;
};

struct ErrorCase {
  std::string instance_id;
  Label label;
  bool false_positive;  // otherwise a false negative
  double prediction;
  std::string question;
};

// P/R/F1 columns per label, one row per configuration.
struct Report {
  std::vector<Label> labels = {Label::kCoref, Label::kEllipsis};
  std::vector<ReportRow> rows;

  // Aligned table, one decimal.
  std::string to_text() const;
  // Full precision.
  nlohmann::json to_json() const;
};

// Evaluates one model; appends false positives/negatives to `errors` when
// non-null.
ReportRow evaluate(const ModelParams& params, const Encoder& encoder,
                   std::span<const Instance> test, std::span<const Label> labels,
                   std::string name, std::vector<ErrorCase>* errors = nullptr);

ReportRow evaluate_predictions(std::span<const IdLabels> binarized,
                               std::span<const IdLabels> golds,
                               std::span<const Label> labels, std::string name);

nlohmann::json to_json(const ErrorCase& e);

}  // namespace ecd
