#include "ecd/summary.hpp"

#include <cmath>
#include <cstdio>

namespace ecd {

std::string format_ratio(std::optional<double> value) {
  if (!value) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *value);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s.size() > 1 && s[0] == '0' && s[1] == '.') s.erase(0, 1);
  return s;
}

DatasetSummary dataset_summary(std::span<const std::vector<Instance>> splits) {
  DatasetSummary out;
  for (const auto& split : splits) out.split_sizes.push_back(split.size());
  for (Label l : kAllLabels) {
    LabelSummary& ls = out.labels[static_cast<int>(l)];
    for (const auto& split : splits) {
      std::size_t known = 0;
      for (const Instance& inst : split) {
        if (!inst.labels.known(l)) continue;
        ++known;
        if (inst.labels[l] == 1) ++ls.positive;
      }
      ls.known += known;
      ls.known_proportion.push_back(
          split.empty() ? std::nullopt
                        : std::optional<double>(static_cast<double>(known) /
                                                static_cast<double>(split.size())));
    }
    if (ls.known > 0) {
      ls.positive_rate =
          static_cast<double>(ls.positive) / static_cast<double>(ls.known);
    }
  }
  return out;
}

DatasetSummary dataset_summary(std::span<const Instance> instances) {
  std::vector<std::vector<Instance>> one{{instances.begin(), instances.end()}};
  return dataset_summary(one);
}

std::string DatasetSummary::to_text() const {
  std::string sizes;
  for (std::size_t i = 0; i < split_sizes.size(); ++i) {
    if (i) sizes += "/";
    sizes += std::to_string(split_sizes[i]);
  }
  std::string out = "# instances " + sizes;
  for (Label l : kAllLabels) {
    const LabelSummary& ls = labels[static_cast<int>(l)];
    std::string known;
    for (std::size_t i = 0; i < ls.known_proportion.size(); ++i) {
      if (i) known += "/";
      known += format_ratio(ls.known_proportion[i]);
    }
    out += "  ";
    out += label_name(l);
    out += " " + known + " " + format_ratio(ls.positive_rate);
  }
  return out;
}

nlohmann::json DatasetSummary::to_json() const {
  nlohmann::json out;
  out["split_sizes"] = split_sizes;
  nlohmann::json labels_json = nlohmann::json::object();
  for (Label l : kAllLabels) {
    const LabelSummary& ls = labels[static_cast<int>(l)];
    nlohmann::json known = nlohmann::json::array();
    for (const auto& p : ls.known_proportion) {
      known.push_back(p ? nlohmann::json(*p) : nlohmann::json());
    }
    labels_json[std::string(label_name(l))] = {
        {"known_proportion", std::move(known)},
        {"known", ls.known},
        {"positive", ls.positive},
        {"positive_rate", ls.positive_rate ? nlohmann::json(*ls.positive_rate)
                                           : nlohmann::json()}};
  }
  out["labels"] = std::move(labels_json);
  return out;
}

}  // namespace ecd
