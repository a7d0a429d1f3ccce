#pragma once

#include <array>
#include <string>
#include <string_view>

namespace ecd {

enum class Label : int { kCoref = 0, kEllipsis = 1, kInc = 2, kPronoun = 3 };

inline constexpr std::size_t kNumLabels = 4;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::kCoref, Label::kEllipsis, Label::kInc, Label::kPronoun};

// "coref", "ellipsis", "inc", "pronoun".
std::string_view label_name(Label label);
Label parse_label(std::string_view name);

// Four ternary labels. -1 is "unknown", never a class.
struct LabelVector {
  std::array<int, kNumLabels> values{-1, -1, -1, -1};

  LabelVector() = default;
  LabelVector(int coref, int ellipsis, int inc, int pronoun)
      : values{coref, ellipsis, inc, pronoun} {}

  int operator[](Label l) const { return values[static_cast<int>(l)]; }
  int& operator[](Label l) { return values[static_cast<int>(l)]; }
  bool known(Label l) const { return (*this)[l] != -1; }

  bool operator==(const LabelVector&) const = default;
};

// "(1, 0, -1, 1)".
std::string to_string(const LabelVector& v);

}  // namespace ecd
