#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecd/dialogue.hpp"
#include "json.hpp"

namespace ecd {

struct Diagnostic {
  std::size_t line = 0;  // 1-based line in the input file
  std::string record_id;
  std::string message;
};

struct ParseResult {
  std::vector<Dialogue> dialogues;
  std::vector<Diagnostic> warnings;
  std::vector<Diagnostic> errors;

  bool ok() const { return errors.empty(); }
};

// Reads a canonical dialogue file (one JSON object per line). Malformed
// records are reported in `errors` and skipped; dialogues ending on a question
// are truncated to the last complete pair with a warning. Throws Error if the
// file cannot be opened.
ParseResult parse_dialogues(const std::filesystem::path& path, Source source);
ParseResult parse_dialogues(std::istream& in, Source source);

// Throws SchemaError. Truncation notices are appended to `warnings`.
Dialogue dialogue_from_json(const nlohmann::json& record, Source source,
                            std::vector<std::string>* warnings = nullptr);
nlohmann::json to_json(const Dialogue& dialogue);

// Keeps one dialogue per topic entity: the one with the smallest id. Output
// follows input order.
std::vector<Dialogue> subset_one_per_entity(std::span<const Dialogue> dialogues);

// Whitespace trim followed by Unicode NFC. Used for variant equality.
std::string normalize_variant(std::string_view text);

struct GoldLabel {
  int coref = -1;
  int ellipsis = -1;
};
// (dialogue id, question index) -> gold labels.
using GoldTable = std::map<std::pair<std::string, int>, GoldLabel>;

GoldTable parse_gold_table(std::istream& in);
GoldTable load_gold_table(const std::filesystem::path& path);

std::vector<Instance> extract_convquestions(const Dialogue& dialogue,
                                            const GoldTable* gold = nullptr);
std::vector<Instance> extract_gecor(const Dialogue& dialogue,
                                    std::vector<std::string>* warnings = nullptr);
std::vector<Instance> extract_canard(const Dialogue& dialogue,
                                     std::vector<std::string>* warnings = nullptr);
// Dispatches on dialogue.source. Synthetic dialogues are extracted like
// ConvQuestions.
std::vector<Instance> extract_instances(const Dialogue& dialogue,
                                        const GoldTable* gold = nullptr,
                                        std::vector<std::string>* warnings = nullptr);

std::string instance_id(const std::string& dialogue_id, int question_index,
                        VariantKind kind);

nlohmann::json to_json(const Instance& instance);
Instance instance_from_json(const nlohmann::json& record);
nlohmann::json to_json(const LabelVector& labels);
LabelVector label_vector_from_json(const nlohmann::json& record);

std::vector<Instance> read_instances(std::istream& in);
std::vector<Instance> read_instances(const std::filesystem::path& path);
void write_instances(std::ostream& out, std::span<const Instance> instances);
void write_instances(const std::filesystem::path& path,
                     std::span<const Instance> instances);

}  // namespace ecd
