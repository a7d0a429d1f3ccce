#include "ecd/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "ecd/error.hpp"

namespace ecd {
namespace {

using nlohmann::json;

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) {
    throw SchemaError(std::string("field '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

std::optional<std::string> optional_variant(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw SchemaError(std::string("variant '") + key + "' must be a string");
  }
  std::string text = it->get<std::string>();
  if (trim(text).empty()) return std::nullopt;
  return text;
}

int parse_question_index(const std::string& key) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(key, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != key.size() || key.empty()) {
    throw SchemaError("variant key '" + key + "' is not an integer");
  }
  return value;
}

Instance make_instance(const Dialogue& d, int i, VariantKind kind,
                       std::string question, LabelVector labels) {
  Instance inst;
  inst.id = instance_id(d.id, i, kind);
  inst.dialogue_id = d.id;
  inst.context = d.context_before(i);
  inst.question = std::move(question);
  inst.variant_kind = kind;
  inst.labels = labels;
  return inst;
}

}  // namespace

std::string normalize_variant(std::string_view text) {
  std::string_view trimmed = trim(text);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(trimmed.data(), static_cast<int32_t>(trimmed.size())));
  icu::UnicodeString normalized = nfc->normalize(s, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

Dialogue dialogue_from_json(const json& record, Source source,
                            std::vector<std::string>* warnings) {
  if (!record.is_object()) throw SchemaError("record is not a JSON object");
  Dialogue d;
  d.id = require_string(record, "id");
  if (d.id.empty()) throw SchemaError("empty dialogue id");
  Source declared = parse_source(require_string(record, "source"));
  if (declared != source) {
    throw SchemaError("source '" + std::string(source_name(declared)) +
                      "' does not match expected '" +
                      std::string(source_name(source)) + "'");
  }
  d.source = declared;

  if (auto it = record.find("topic_entity");
      it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError("topic_entity must be a string");
    std::string entity = it->get<std::string>();
    if (!trim(entity).empty()) d.topic_entity = std::move(entity);
  }
  if ((d.source == Source::kConvQuestions) != d.topic_entity.has_value()) {
    throw SchemaError(d.source == Source::kConvQuestions
                          ? "convquestions dialogue without topic_entity"
                          : "topic_entity is only allowed for convquestions");
  }

  const json& turns = require(record, "turns");
  if (!turns.is_array() || turns.empty()) {
    throw SchemaError("turns must be a non-empty array");
  }
  for (std::size_t k = 0; k < turns.size(); ++k) {
    const json& t = turns[k];
    if (!t.is_object()) throw SchemaError("turn is not an object");
    Turn turn;
    turn.speaker = parse_speaker(require_string(t, "speaker"));
    turn.text = require_string(t, "text");
    turn.index = static_cast<int>(k) + 1;
    Speaker expected = k % 2 == 0 ? Speaker::kQuestion : Speaker::kAnswer;
    if (turn.speaker != expected) {
      throw SchemaError("turn " + std::to_string(k + 1) + " should be a" +
                        (expected == Speaker::kQuestion ? " question"
                                                        : "n answer") +
                        " (speakers must alternate, starting with a question)");
    }
    if (trim(turn.text).empty()) {
      throw SchemaError("turn " + std::to_string(k + 1) + " has empty text");
    }
    d.turns.push_back(std::move(turn));
  }
  const int declared_questions = static_cast<int>((d.turns.size() + 1) / 2);
  if (d.turns.size() % 2 == 1) {
    d.turns.pop_back();
    if (warnings) {
      warnings->push_back("dialogue ends on a question; truncated to " +
                          std::to_string(d.turns.size()) + " turns");
    }
  }
  if (d.turns.empty()) {
    throw SchemaError("no complete question/answer pair");
  }

  if (auto it = record.find("variants"); it != record.end() && !it->is_null()) {
    if (!it->is_object()) throw SchemaError("variants must be an object");
    for (const auto& [key, value] : it->items()) {
      const int i = parse_question_index(key);
      if (i < 1 || i > declared_questions) {
        throw SchemaError("variants reference question " + key +
                          " outside 1.." + std::to_string(declared_questions));
      }
      if (!value.is_object()) throw SchemaError("variant set must be an object");
      VariantSet set;
      set.elliptical = optional_variant(value, "elliptical");
      set.coreferential = optional_variant(value, "coreferential");
      set.complete = optional_variant(value, "complete");
      if (set.empty()) continue;
      if (i > d.num_questions()) {
        if (warnings) {
          warnings->push_back("dropped variants of truncated question " + key);
        }
        continue;
      }
      d.variants[i] = std::move(set);
    }
  }
  return d;
}

json to_json(const Dialogue& d) {
  json out = json::object();
  out["id"] = d.id;
  out["source"] = source_name(d.source);
  if (d.topic_entity) out["topic_entity"] = *d.topic_entity;
  json turns = json::array();
  for (const Turn& t : d.turns) {
    turns.push_back({{"speaker", speaker_name(t.speaker)}, {"text", t.text}});
  }
  out["turns"] = std::move(turns);
  if (!d.variants.empty()) {
    json variants = json::object();
    for (const auto& [i, set] : d.variants) {
      json v = json::object();
      if (set.elliptical) v["elliptical"] = *set.elliptical;
      if (set.coreferential) v["coreferential"] = *set.coreferential;
      if (set.complete) v["complete"] = *set.complete;
      variants[std::to_string(i)] = std::move(v);
    }
    out["variants"] = std::move(variants);
  }
  return out;
}

ParseResult parse_dialogues(std::istream& in, Source source) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string record_id;
    try {
      json record = json::parse(line);
      if (record.is_object()) {
        auto it = record.find("id");
        if (it != record.end() && it->is_string()) record_id = *it;
      }
      std::vector<std::string> warnings;
      Dialogue d = dialogue_from_json(record, source, &warnings);
      for (auto& w : warnings) {
        result.warnings.push_back({line_no, record_id, std::move(w)});
      }
      result.dialogues.push_back(std::move(d));
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, record_id, e.what()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, record_id, e.what()});
    }
  }
  return result;
}

ParseResult parse_dialogues(const std::filesystem::path& path, Source source) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return parse_dialogues(in, source);
}

std::vector<Dialogue> subset_one_per_entity(std::span<const Dialogue> dialogues) {
  std::unordered_map<std::string, const Dialogue*> best;
  for (const Dialogue& d : dialogues) {
    if (!d.topic_entity) {
      throw Error("dialogue '" + d.id + "' has no topic_entity");
    }
    auto [it, inserted] = best.emplace(*d.topic_entity, &d);
    if (!inserted && d.id < it->second->id) it->second = &d;
  }
  std::vector<Dialogue> out;
  for (const Dialogue& d : dialogues) {
    if (best.at(*d.topic_entity) == &d) out.push_back(d);
  }
  return out;
}

GoldTable parse_gold_table(std::istream& in) {
  GoldTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "gold line " + std::to_string(line_no) + ": ";
    try {
      json r = json::parse(line);
      std::string id = require_string(r, "dialogue_id");
      int index = require(r, "question_index").get<int>();
      GoldLabel g{require(r, "coref").get<int>(), require(r, "ellipsis").get<int>()};
      for (int v : {g.coref, g.ellipsis}) {
        if (v != 0 && v != 1) throw SchemaError("gold values must be 0 or 1");
      }
      if (!table.emplace(std::make_pair(id, index), g).second) {
        throw SchemaError("duplicate entry for " + id + " q" +
                          std::to_string(index));
      }
    } catch (const json::exception& e) {
      throw SchemaError(where + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(where + e.what());
    }
  }
  return table;
}

GoldTable load_gold_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return parse_gold_table(in);
}

std::string instance_id(const std::string& dialogue_id, int question_index,
                        VariantKind kind) {
  std::string id = dialogue_id + ":q" + std::to_string(question_index);
  switch (kind) {
    case VariantKind::kOriginal: break;
    case VariantKind::kElliptical: id += ":e"; break;
    case VariantKind::kCoreferential: id += ":r"; break;
    case VariantKind::kComplete: id += ":c"; break;
  }
  return id;
}

std::vector<Instance> extract_convquestions(const Dialogue& d,
                                            const GoldTable* gold) {
  const int n = d.num_questions();
  if (gold) {
    for (auto it = gold->lower_bound({d.id, std::numeric_limits<int>::min()});
         it != gold->end() && it->first.first == d.id; ++it) {
      const int i = it->first.second;
      if (i < 2 || i > n) {
        throw Error("gold annotation for dialogue '" + d.id +
                    "' references question " + std::to_string(i) +
                    ", which has no instance (valid: 2.." + std::to_string(n) +
                    ")");
      }
    }
  }
  std::vector<Instance> out;
  for (int i = 2; i <= n; ++i) {
    LabelVector labels;
    if (gold) {
      if (auto it = gold->find({d.id, i}); it != gold->end()) {
        labels[Label::kCoref] = it->second.coref;
        labels[Label::kEllipsis] = it->second.ellipsis;
      }
    }
    out.push_back(make_instance(d, i, VariantKind::kOriginal,
                                d.question(i).text, labels));
  }
  return out;
}

std::vector<Instance> extract_gecor(const Dialogue& d,
                                    std::vector<std::string>* warnings) {
  const int n = d.num_questions();
  std::vector<Instance> out;
  for (const auto& [i, set] : d.variants) {
    if (i > n || i < 1) {
      throw Error("dialogue '" + d.id + "' has variants for question " +
                  std::to_string(i) + " outside 1.." + std::to_string(n));
    }
    if (i == 1) {
      // q_1 has no context; its variants never form an instance.
      if (warnings) {
        warnings->push_back("dialogue '" + d.id +
                            "': ignoring variants of question 1");
      }
      continue;
    }
    const bool has_e = set.elliptical.has_value();
    const bool has_r = set.coreferential.has_value();
    const bool same = has_e && has_r &&
                      normalize_variant(*set.elliptical) ==
                          normalize_variant(*set.coreferential);
    if (has_e) {
      LabelVector v;
      v[Label::kEllipsis] = 1;
      if (same) v[Label::kCoref] = 1;
      if (!has_r) v[Label::kCoref] = 0;
      out.push_back(make_instance(d, i, VariantKind::kElliptical,
                                  *set.elliptical, v));
    }
    if (has_r) {
      LabelVector v;
      v[Label::kCoref] = 1;
      if (same) v[Label::kEllipsis] = 1;
      if (!has_e) v[Label::kEllipsis] = 0;
      out.push_back(make_instance(d, i, VariantKind::kCoreferential,
                                  *set.coreferential, v));
    }
    if (set.complete) {
      LabelVector v;
      v[Label::kCoref] = 0;
      v[Label::kEllipsis] = 0;
      out.push_back(make_instance(d, i, VariantKind::kComplete,
                                  *set.complete, v));
    }
  }
  return out;
}

std::vector<Instance> extract_canard(const Dialogue& d,
                                     std::vector<std::string>* warnings) {
  std::vector<Instance> out;
  for (int i = 2; i <= d.num_questions(); ++i) {
    auto it = d.variants.find(i);
    if (it == d.variants.end() || !it->second.complete) {
      if (warnings) {
        warnings->push_back("dialogue '" + d.id + "': question " +
                            std::to_string(i) +
                            " has no complete variant; skipped");
      }
      continue;
    }
    out.push_back(make_instance(d, i, VariantKind::kOriginal,
                                d.question(i).text, LabelVector{}));
    LabelVector complete;
    complete[Label::kCoref] = 0;
    complete[Label::kEllipsis] = 0;
    out.push_back(make_instance(d, i, VariantKind::kComplete,
                                *it->second.complete, complete));
  }
  return out;
}

std::vector<Instance> extract_instances(const Dialogue& d, const GoldTable* gold,
                                        std::vector<std::string>* warnings) {
  switch (d.source) {
    case Source::kGecor: return extract_gecor(d, warnings);
    case Source::kCanard: return extract_canard(d, warnings);
    case Source::kConvQuestions:
    case Source::kSynthetic: return extract_convquestions(d, gold);
  }
  return {};
}

json to_json(const LabelVector& labels) {
  json out = json::object();
  for (Label l : kAllLabels) out[std::string(label_name(l))] = labels[l];
  return out;
}

LabelVector label_vector_from_json(const json& record) {
  LabelVector v;
  for (Label l : kAllLabels) {
    auto it = record.find(std::string(label_name(l)));
    if (it == record.end()) continue;
    int value = it->get<int>();
    if (value < -1 || value > 1) {
      throw SchemaError("label " + std::string(label_name(l)) +
                        " out of range: " + std::to_string(value));
    }
    v[l] = value;
  }
  return v;
}

json to_json(const Instance& inst) {
  json context = json::array();
  for (const Turn& t : inst.context) {
    context.push_back({{"speaker", speaker_name(t.speaker)}, {"text", t.text}});
  }
  return {{"id", inst.id},
          {"dialogue_id", inst.dialogue_id},
          {"context", std::move(context)},
          {"question", inst.question},
          {"variant_kind", variant_kind_name(inst.variant_kind)},
          {"labels", to_json(inst.labels)}};
}

Instance instance_from_json(const json& record) {
  if (!record.is_object()) throw SchemaError("instance is not a JSON object");
  Instance inst;
  inst.id = require_string(record, "id");
  inst.dialogue_id = require_string(record, "dialogue_id");
  int index = 0;
  for (const json& t : require(record, "context")) {
    Turn turn;
    turn.speaker = parse_speaker(require_string(t, "speaker"));
    turn.text = require_string(t, "text");
    turn.index = ++index;
    inst.context.push_back(std::move(turn));
  }
  inst.question = require_string(record, "question");
  if (trim(inst.question).empty()) throw SchemaError("empty question");
  inst.variant_kind = parse_variant_kind(require_string(record, "variant_kind"));
  if (auto it = record.find("labels"); it != record.end()) {
    inst.labels = label_vector_from_json(*it);
  }
  return inst;
}

std::vector<Instance> read_instances(std::istream& in) {
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw SchemaError("instance line " + std::to_string(line_no) + ": " +
                        e.what());
    } catch (const Error& e) {
      throw SchemaError("instance line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return out;
}

std::vector<Instance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_instances(in);
}

void write_instances(std::ostream& out, std::span<const Instance> instances) {
  for (const Instance& inst : instances) out << to_json(inst).dump() << '\n';
}

void write_instances(const std::filesystem::path& path,
                     std::span<const Instance> instances) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_instances(out, instances);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace ecd
