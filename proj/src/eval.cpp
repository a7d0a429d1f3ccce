#include "ecd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "ecd/error.hpp"

namespace ecd {

ConfusionCounts confusion(std::span<const IdLabels> preds,
                          std::span<const IdLabels> golds, Label label) {
  if (preds.size() != golds.size()) {
    throw Error("prediction and gold lists differ in length (" +
                std::to_string(preds.size()) + " vs " +
                std::to_string(golds.size()) + ")");
  }
  std::unordered_map<std::string_view, const LabelVector*> by_id;
  for (const IdLabels& p : preds) {
    if (!by_id.emplace(p.id, &p.labels).second) {
      throw Error("duplicate prediction id '" + p.id + "'");
    }
  }
  ConfusionCounts c;
  std::unordered_map<std::string_view, bool> seen;
  for (const IdLabels& g : golds) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw Error("no prediction for instance '" + g.id + "'");
    if (!seen.emplace(g.id, true).second) {
      throw Error("duplicate gold id '" + g.id + "'");
    }
    const int gold = g.labels[label];
    if (gold == -1) continue;
    const bool predicted = (*it->second)[label] == 1;
    if (gold == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Scores prf1(const ConfusionCounts& c) {
  Scores s;
  if (c.tp + c.fp > 0) {
    s.precision = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    s.precision_undefined = true;
  }
  if (c.tp + c.fn > 0) {
    s.recall = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    s.recall_undefined = true;
  }
  if (!s.precision_undefined && !s.recall_undefined && s.precision + s.recall > 0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  } else {
    s.f1_undefined = true;
  }
  return s;
}

const LabelReport& ReportRow::at(Label label) const {
  for (const LabelReport& r : labels) {
    if (r.label == label) return r;
  }
  throw Error("report row '" + name + "' has no column for " +
              std::string(label_name(label)));
}

ReportRow evaluate_predictions(std::span<const IdLabels> binarized,
                               std::span<const IdLabels> golds,
                               std::span<const Label> labels, std::string name) {
  ReportRow row;
  row.name = std::move(name);
  for (Label l : labels) {
    ConfusionCounts c = confusion(binarized, golds, l);
    row.labels.push_back({l, c, prf1(c)});
  }
  return row;
}

ReportRow evaluate(const ModelParams& params, const Encoder& encoder,
                   std::span<const Instance> test, std::span<const Label> labels,
                   std::string name, std::vector<ErrorCase>* errors) {
  std::vector<IdLabels> preds, golds;
  preds.reserve(test.size());
  golds.reserve(test.size());
  for (const Instance& inst : test) {
    const Prediction p = predict(params, encoder, inst);
    const LabelVector b = binarize(p);
    preds.push_back({inst.id, b});
    golds.push_back({inst.id, inst.labels});
    if (!errors) continue;
    for (Label l : labels) {
      const int gold = inst.labels[l];
      if (gold == -1 || gold == b[l]) continue;
      errors->push_back({inst.id, l, b[l] == 1, p[l], inst.question});
    }
  }
  return evaluate_predictions(preds, golds, labels, std::move(name));
}

namespace {

std::string_view column_title(Label l) {
  switch (l) {
    case Label::kCoref: return "Coreference";
    case Label::kEllipsis: return "Ellipsis";
    case Label::kInc: return "Incomp.";
    case Label::kPronoun: return "Pronoun";
  }
  return "?";
}

std::string pad(std::string s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ')
              : std::string(width - s.size(), ' ') + s;
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

nlohmann::json scores_json(const LabelReport& r) {
  const Scores& s = r.scores;
  return {{"P", s.precision},
          {"R", s.recall},
          {"F1", s.f1},
          {"precision_undefined", s.precision_undefined},
          {"recall_undefined", s.recall_undefined},
          {"f1_undefined", s.f1_undefined},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"fn", r.counts.fn},
          {"tn", r.counts.tn}};
}

}  // namespace

std::string Report::to_text() const {
  std::size_t name_width = 13;
  for (const ReportRow& r : rows) name_width = std::max(name_width, r.name.size());
  constexpr std::size_t kCell = 7;
  std::string head1 = pad("", name_width, true);
  std::string head2 = pad("", name_width, true);
  for (Label l : labels) {
    std::string title(column_title(l));
    head1 += " |" + pad(title, kCell * 3 - 1, true) + " ";
    head2 += " |" + pad("P", kCell - 1) + pad("R", kCell) + pad("F1", kCell);
  }
  std::string out = head1 + "\n" + head2 + "\n";
  for (const ReportRow& row : rows) {
    std::string line = pad(row.name, name_width, true);
    for (Label l : labels) {
      const Scores& s = row.at(l).scores;
      auto cell = [](double v, bool undefined) {
        return one_decimal(v) + (undefined ? "*" : "");
      };
      line += " |" + pad(cell(s.precision, s.precision_undefined), kCell - 1) +
              pad(cell(s.recall, s.recall_undefined), kCell) +
              pad(cell(s.f1, s.f1_undefined), kCell);
    }
    out += line + "\n";
  }
  bool any_undefined = false;
  for (const ReportRow& row : rows) {
    for (const LabelReport& r : row.labels) any_undefined |= r.scores.degenerate();
  }
  if (any_undefined) out += "(* undefined ratio, reported as 0)\n";
  return out;
}

nlohmann::json Report::to_json() const {
  nlohmann::json out;
  nlohmann::json cols = nlohmann::json::array();
  for (Label l : labels) cols.push_back(label_name(l));
  out["labels"] = std::move(cols);
  nlohmann::json rows_json = nlohmann::json::array();
  for (const ReportRow& row : rows) {
    nlohmann::json r = {{"name", row.name}};
    for (const LabelReport& lr : row.labels) {
      r[std::string(label_name(lr.label))] = scores_json(lr);
    }
    rows_json.push_back(std::move(r));
  }
  out["rows"] = std::move(rows_json);
  return out;
}

nlohmann::json to_json(const ErrorCase& e) {
  return {{"instance_id", e.instance_id},
          {"label", label_name(e.label)},
          {"kind", e.false_positive ? "false_positive" : "false_negative"},
          {"prediction", e.prediction},
          {"question", e.question}};
}

}  // namespace ecd
