#include "ecd/dialogue.hpp"

#include "ecd/error.hpp"

namespace ecd {

std::string_view speaker_name(Speaker s) {
  return s == Speaker::kQuestion ? "question" : "answer";
}

Speaker parse_speaker(std::string_view name) {
  if (name == "question") return Speaker::kQuestion;
  if (name == "answer") return Speaker::kAnswer;
  throw Error("unknown speaker '" + std::string(name) + "'");
}

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kConvQuestions: return "convquestions";
    case Source::kGecor: return "gecor";
    case Source::kCanard: return "canard";
    case Source::kSynthetic: return "synthetic";
  }
  return "?";
}

Source parse_source(std::string_view name) {
  for (Source s : {Source::kConvQuestions, Source::kGecor, Source::kCanard,
                   Source::kSynthetic}) {
    if (source_name(s) == name) return s;
  }
  throw Error("unknown source '" + std::string(name) + "'");
}

std::string_view variant_kind_name(VariantKind k) {
  switch (k) {
    case VariantKind::kOriginal: return "original";
    case VariantKind::kElliptical: return "elliptical";
    case VariantKind::kCoreferential: return "coreferential";
    case VariantKind::kComplete: return "complete";
  }
  return "?";
}

VariantKind parse_variant_kind(std::string_view name) {
  for (VariantKind k : {VariantKind::kOriginal, VariantKind::kElliptical,
                        VariantKind::kCoreferential, VariantKind::kComplete}) {
    if (variant_kind_name(k) == name) return k;
  }
  throw Error("unknown variant kind '" + std::string(name) + "'");
}

}  // namespace ecd
