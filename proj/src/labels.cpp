#include "ecd/labels.hpp"

#include <cctype>
#include <fstream>

#include "ecd/error.hpp"

namespace ecd {
namespace {

bool word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

void set_or_conflict(LabelVector& v, Label l, int value, int rule) {
  if (v[l] != -1 && v[l] != value) {
    throw ConsistencyError(
        rule, "rule " + std::to_string(rule) + " needs " +
                  std::string(label_name(l)) + " = " + std::to_string(value) +
                  " but it is " + std::to_string(v[l]) + " in " + to_string(v));
  }
  v[l] = value;
}

}  // namespace

PronounLexicon::PronounLexicon()
    : words_{"it",    "its",   "itself",     "he",    "him",    "his",
             "himself", "she", "her",        "hers",  "herself", "they",
             "them",  "their", "theirs",     "themselves", "this", "that",
             "these", "those", "one",        "ones"} {}

PronounLexicon::PronounLexicon(std::set<std::string> words) {
  for (const std::string& w : words) {
    std::string lower = w;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words_.insert(std::move(lower));
  }
}

PronounLexicon PronounLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read lexicon " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto tokens = pronoun_tokens(line);
    if (!tokens.empty()) words.insert(tokens.front());
  }
  return PronounLexicon(std::move(words));
}

bool PronounLexicon::contains(std::string_view lowercase_word) const {
  return words_.find(lowercase_word) != words_.end();
}

const PronounLexicon& default_lexicon() {
  static const PronounLexicon lexicon;
  return lexicon;
}

std::vector<std::string> pronoun_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view raw = text.substr(i, j - i);
    while (!raw.empty() && !word_char(raw.front())) raw.remove_prefix(1);
    while (!raw.empty() && !word_char(raw.back())) raw.remove_suffix(1);
    if (!raw.empty()) {
      std::string token(raw);
      for (char& c : token) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      out.push_back(std::move(token));
    }
    i = j;
  }
  return out;
}

int detect_pronoun(std::string_view question, const PronounLexicon& lexicon) {
  for (const std::string& token : pronoun_tokens(question)) {
    if (lexicon.contains(token)) return 1;
  }
  return 0;
}

LabelVector fill_labels(LabelVector v) {
  if (v[Label::kPronoun] == 1) set_or_conflict(v, Label::kCoref, 1, 1);
  if (v[Label::kCoref] == 1 || v[Label::kEllipsis] == 1) {
    set_or_conflict(v, Label::kInc, 1, 2);
  }
  if (v[Label::kCoref] == 0 && v[Label::kEllipsis] == 0) {
    set_or_conflict(v, Label::kInc, 0, 3);
  }
  if (v[Label::kInc] == 0) {
    set_or_conflict(v, Label::kCoref, 0, 4);
    set_or_conflict(v, Label::kEllipsis, 0, 4);
  }
  return v;
}

bool is_consistent(const LabelVector& v) {
  // pronoun = 1 forces coref = 1.
  int coref = v[Label::kCoref];
  if (v[Label::kPronoun] == 1) {
    if (coref == 0) return false;
    coref = 1;
  }
  const int ellipsis = v[Label::kEllipsis];
  switch (v[Label::kInc]) {
    case 1: return !(coref == 0 && ellipsis == 0);
    case 0: return coref != 1 && ellipsis != 1;
    default: return true;
  }
}

void fill_instances(std::vector<Instance>& instances,
                    const PronounLexicon& lexicon) {
  for (Instance& inst : instances) {
    if (inst.labels[Label::kPronoun] == -1) {
      inst.labels[Label::kPronoun] = detect_pronoun(inst.question, lexicon);
    }
    try {
      inst.labels = fill_labels(inst.labels);
    } catch (const ConsistencyError& e) {
      throw ConsistencyError(e.rule(), "instance '" + inst.id + "': " + e.what());
    }
  }
}

}  // namespace ecd
