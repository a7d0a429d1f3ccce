#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecd/dialogue.hpp"
#include "json.hpp"

namespace ecd {

struct LabelSummary {
  // Known proportion per split; nullopt for an empty split.
  std::vector<std::optional<double>> known_proportion;
  std::size_t known = 0;     // over the union of splits
  std::size_t positive = 0;  // among known
  // positive / known over the union; nullopt when nothing is known.
  std::optional<double> positive_rate;
};

struct DatasetSummary {
  std::vector<std::size_t> split_sizes;
  std::array<LabelSummary, kNumLabels> labels;

  // One line, "a/b/c d" per label.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

DatasetSummary dataset_summary(std::span<const std::vector<Instance>> splits);
DatasetSummary dataset_summary(std::span<const Instance> instances);

// 1 -> "1", 0.8 -> ".8", 0.754 -> ".75", undefined -> "-".
std::string format_ratio(std::optional<double> value);

}  // namespace ecd
