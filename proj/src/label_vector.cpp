#include "ecd/label_vector.hpp"

#include "ecd/error.hpp"

namespace ecd {

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kCoref: return "coref";
    case Label::kEllipsis: return "ellipsis";
    case Label::kInc: return "inc";
    case Label::kPronoun: return "pronoun";
  }
  return "?";
}

Label parse_label(std::string_view name) {
  for (Label l : kAllLabels) {
    if (label_name(l) == name) return l;
  }
  throw Error("unknown label '" + std::string(name) + "'");
}

std::string to_string(const LabelVector& v) {
  std::string out = "(";
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (i) out += ", ";
    out += std::to_string(v.values[i]);
  }
  return out + ")";
}

}  // namespace ecd
