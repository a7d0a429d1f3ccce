#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ecd/dialogue.hpp"
#include "ecd/label_vector.hpp"

namespace ecd {

// Closed, case-insensitive set of anaphoric pronouns.
class PronounLexicon {
 public:
  // Third-person and demonstrative pronouns.
  PronounLexicon();
  explicit PronounLexicon(std::set<std::string> words);

  // One pronoun per line; blank lines and '#' comments are ignored.
  static PronounLexicon load(const std::filesystem::path& path);

  bool contains(std::string_view lowercase_word) const;
  const std::set<std::string, std::less<>>& words() const { return words_; }

 private:
  std::set<std::string, std::less<>> words_;
};

const PronounLexicon& default_lexicon();

// Whitespace split, leading/trailing non-alphanumerics stripped, ASCII
// lowercased. Bytes >= 0x80 count as alphanumeric.
std::vector<std::string> pronoun_tokens(std::string_view text);

int detect_pronoun(std::string_view question,
                   const PronounLexicon& lexicon = default_lexicon());

// Applies, once each and in order:
//   1. pronoun = 1 => coref <- 1
//   2. coref = 1 or ellipsis = 1 => inc <- 1
//   3. coref = 0 and ellipsis = 0 => inc <- 0
//   4. inc = 0 => coref <- 0, ellipsis <- 0
// Only -1 values are replaced. Throws ConsistencyError when a rule would
// overwrite a known value.
LabelVector fill_labels(LabelVector v);

// True iff some assignment of the unknown values satisfies
// pronoun => coref and inc <=> (coref or ellipsis).
bool is_consistent(const LabelVector& v);

// Sets pronoun by detection where unknown, then fills every instance.
void fill_instances(std::vector<Instance>& instances,
                    const PronounLexicon& lexicon = default_lexicon());

}  // namespace ecd
