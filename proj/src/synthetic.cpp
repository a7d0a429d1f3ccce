#include "ecd/synthetic.hpp"

#include <array>
#include <string_view>

#include "ecd/corpus.hpp"
#include "ecd/error.hpp"
#include "ecd/labels.hpp"
#include "ecd/rng.hpp"

namespace ecd {
namespace {

constexpr std::array<std::string_view, 16> kEntities = {
    "zorvia",   "kelmont",  "brightwater", "novastar", "quillon", "derwick",
    "halvard",  "ostrava",  "marbeck",     "tennford", "calloway", "ravnik",
    "pellucid", "wexham",   "sundgren",    "armitage"};

struct Relation {
  std::string_view prefix;
  std::string_view suffix;
};

constexpr std::array<Relation, 8> kRelations = {{{"who founded", ""},
                                                 {"when was", "founded"},
                                                 {"where is", "located"},
                                                 {"who manages", ""},
                                                 {"how old is", ""},
                                                 {"what genre is", ""},
                                                 {"how big is", ""},
                                                 {"who owns", ""}}};

constexpr std::array<std::string_view, 4> kPronouns = {"it", "they", "he", "she"};
constexpr std::array<std::string_view, 4> kTypes = {"the band", "the country",
                                                    "the company", "the team"};
constexpr std::array<std::string_view, 4> kRareTypes = {"the nation", "the group",
                                                        "the outfit", "the club"};
constexpr std::array<std::string_view, 3> kMarkers = {"what about", "how about",
                                                      "and"};
constexpr std::array<std::string_view, 3> kRareMarkers = {"same for", "likewise for",
                                                          "then for"};

constexpr std::array<std::string_view, 8> kAnswers = {
    "in 1987", "berlin", "a record label", "rock", "some 40 people",
    "a local firm", "since 2003", "in the north"};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& items) {
  return items[rng.below(N)];
}

std::string join(std::string_view a, std::string_view b) {
  if (a.empty()) return std::string(b);
  if (b.empty()) return std::string(a);
  return std::string(a) + " " + std::string(b);
}

std::string relation_question(const Relation& r, std::string_view subject) {
  return join(join(r.prefix, subject), r.suffix);
}

struct Generated {
  Dialogue dialogue;
  std::map<int, LabelVector> labels;     // by question index, i >= 2
  std::map<int, std::string> complete;   // rewrite without context
};

// rare_prob is the chance that a positive coref (non-pronoun) or ellipsis
// question uses a marker outside the common lists.
Generated generate(Rng& rng, std::string id, int questions, double rare_prob,
                   Source source) {
  Generated g;
  g.dialogue.id = std::move(id);
  g.dialogue.source = source;
  const std::string_view entity = pick(rng, kEntities);
  if (source == Source::kConvQuestions) g.dialogue.topic_entity = std::string(entity);

  auto add_turns = [&](std::string question) {
    const int index = static_cast<int>(g.dialogue.turns.size()) + 1;
    g.dialogue.turns.push_back({Speaker::kQuestion, std::move(question), index});
    g.dialogue.turns.push_back(
        {Speaker::kAnswer, std::string(pick(rng, kAnswers)), index + 1});
  };

  add_turns(relation_question(kRelations[rng.below(kRelations.size())], entity));
  for (int i = 2; i <= questions; ++i) {
    // 40% neither, 25% coref only, 25% ellipsis only, 10% both.
    const double u = rng.uniform();
    const bool coref = (u >= 0.4 && u < 0.65) || u >= 0.9;
    const bool ellipsis = u >= 0.65;
    const Relation& rel = kRelations[rng.below(kRelations.size())];

    std::string subject(entity);
    if (coref) {
      if (rng.below(2) == 1) {
        subject = pick(rng, kPronouns);
      } else {
        subject = rng.uniform() < rare_prob ? pick(rng, kRareTypes) : pick(rng, kTypes);
      }
    }
    std::string question;
    if (ellipsis) {
      const std::string_view marker =
          rng.uniform() < rare_prob ? pick(rng, kRareMarkers) : pick(rng, kMarkers);
      question = join(marker, subject);
    } else {
      question = relation_question(rel, subject);
    }

    LabelVector v(coref ? 1 : 0, ellipsis ? 1 : 0, (coref || ellipsis) ? 1 : 0,
                  detect_pronoun(question));
    g.labels[i] = v;
    g.complete[i] = relation_question(rel, entity);
    add_turns(std::move(question));
  }
  return g;
}

void check_options(const SyntheticOptions& o) {
  if (o.questions_per_dialogue < 2) {
    throw Error("questions_per_dialogue must be at least 2");
  }
}

std::vector<Instance> labeled_instances(const Generated& g) {
  std::vector<Instance> out = extract_convquestions(g.dialogue);
  for (Instance& inst : out) {
    const int i = static_cast<int>(inst.context.size()) / 2 + 1;
    inst.labels = g.labels.at(i);
  }
  return out;
}

std::vector<Instance> labeled_set(Rng& rng, const std::string& prefix,
                                  std::size_t dialogues, double rare_prob) {
  std::vector<Instance> out;
  for (std::size_t d = 0; d < dialogues; ++d) {
    Generated g = generate(rng, prefix + std::to_string(d), 5, rare_prob,
                           Source::kSynthetic);
    auto part = labeled_instances(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace

std::vector<Dialogue> make_synthetic_dialogues(const SyntheticOptions& options) {
  check_options(options);
  Rng rng(options.seed);
  std::vector<Dialogue> out;
  for (std::size_t d = 0; d < options.dialogues; ++d) {
    out.push_back(generate(rng, options.id_prefix + std::to_string(d),
                           options.questions_per_dialogue, 0.0, Source::kSynthetic)
                      .dialogue);
  }
  return out;
}

std::vector<Instance> make_synthetic_instances(const SyntheticOptions& options) {
  check_options(options);
  Rng rng(options.seed);
  std::vector<Instance> out;
  for (std::size_t d = 0; d < options.dialogues; ++d) {
    Generated g = generate(rng, options.id_prefix + std::to_string(d),
                           options.questions_per_dialogue, 0.0, Source::kSynthetic);
    auto part = labeled_instances(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

ALBenchmark make_al_benchmark(Label target, std::uint64_t seed) {
  if (target != Label::kCoref && target != Label::kEllipsis) {
    throw Error("benchmark target must be coref or ellipsis");
  }
  Rng rng(seed);
  ALBenchmark b;
  b.gecor = labeled_set(rng, "gec", 40, 0.0);

  for (std::size_t d = 0; d < 150; ++d) {
    Generated g = generate(rng, "can" + std::to_string(d), 5, 0.5, Source::kCanard);
    for (int i = 2; i <= g.dialogue.num_questions(); ++i) {
      const LabelVector truth = g.labels.at(i);
      LabelVector original;
      original[Label::kPronoun] = truth[Label::kPronoun];
      LabelVector complete(0, 0, -1, -1);
      complete[Label::kPronoun] = detect_pronoun(g.complete.at(i));

      Instance orig{instance_id(g.dialogue.id, i, VariantKind::kOriginal),
                    g.dialogue.id, g.dialogue.context_before(i),
                    g.dialogue.question(i).text, VariantKind::kOriginal,
                    fill_labels(original)};
      Instance comp{instance_id(g.dialogue.id, i, VariantKind::kComplete),
                    g.dialogue.id, g.dialogue.context_before(i), g.complete.at(i),
                    VariantKind::kComplete, fill_labels(complete)};
      b.truth[orig.id] = truth;
      b.canard.push_back(std::move(orig));
      b.canard.push_back(std::move(comp));
    }
  }

  b.eval = labeled_set(rng, "evl", 80, 0.8);
  for (Instance& inst : b.eval) {
    inst.labels = fill_labels(LabelVector(inst.labels[Label::kCoref],
                                          inst.labels[Label::kEllipsis], -1, -1));
  }
  return b;
}

}  // namespace ecd
