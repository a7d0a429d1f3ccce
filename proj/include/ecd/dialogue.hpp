#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecd/label_vector.hpp"

namespace ecd {

enum class Speaker { kQuestion, kAnswer };

struct Turn {
  Speaker speaker = Speaker::kQuestion;
  std::string text;
  int index = 0;  // 1-based position within the dialogue

  bool operator==(const Turn&) const = default;
};

// Alternative surface forms of one question. Empty strings are stored as
// absent.
struct VariantSet {
  std::optional<std::string> elliptical;
  std::optional<std::string> coreferential;
  std::optional<std::string> complete;

  bool empty() const { return !elliptical && !coreferential && !complete; }
  bool operator==(const VariantSet&) const = default;
};

enum class Source { kConvQuestions, kGecor, kCanard, kSynthetic };

struct Dialogue {
  std::string id;
  Source source = Source::kSynthetic;
  std::optional<std::string> topic_entity;
  std::vector<Turn> turns;
  // Keyed by 1-based question index.
  std::map<int, VariantSet> variants;

  int num_questions() const { return static_cast<int>(turns.size() / 2); }
  // Question q_i, 1-based.
  const Turn& question(int i) const { return turns[2 * (i - 1)]; }
  // (q_1, a_1, ..., q_{i-1}, a_{i-1}).
  std::vector<Turn> context_before(int i) const {
    return {turns.begin(), turns.begin() + 2 * (i - 1)};
  }

  bool operator==(const Dialogue&) const = default;
};

enum class VariantKind { kOriginal, kElliptical, kCoreferential, kComplete };

// A question in its context: the unit of classification.
struct Instance {
  std::string id;
  std::string dialogue_id;
  std::vector<Turn> context;
  std::string question;
  VariantKind variant_kind = VariantKind::kOriginal;
  LabelVector labels;

  bool operator==(const Instance&) const = default;
};

std::string_view speaker_name(Speaker s);
Speaker parse_speaker(std::string_view name);
std::string_view source_name(Source s);
Source parse_source(std::string_view name);
std::string_view variant_kind_name(VariantKind k);
VariantKind parse_variant_kind(std::string_view name);

}  // namespace ecd
