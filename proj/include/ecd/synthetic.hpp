#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecd/dialogue.hpp"

namespace ecd {

// Keyword-generated dialogues whose four labels follow from the question's
// surface form:
//   coref    - a third-person pronoun, or a definite type reference
//              ("the band", "the country")
//   ellipsis - a fragment opener ("what about", "how about", "and")
//   inc      - coref or ellipsis
//   pronoun  - a lexicon pronoun
struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t dialogues = 125;
  int questions_per_dialogue = 5;  // yields questions_per_dialogue - 1 instances
  std::string id_prefix = "syn";
};

std::vector<Dialogue> make_synthetic_dialogues(const SyntheticOptions& options);

// Instances of the generated dialogues with all four labels known.
std::vector<Instance> make_synthetic_instances(const SyntheticOptions& options);

// A small active-learning benchmark. `gecor` is fully labeled but only uses
// the common ellipsis/coref markers; the CANARD-like `canard` pool hides the
// target label and also contains rarer markers, which dominate `eval`.
// `truth` holds the hidden labels for gold-replay annotation.
struct ALBenchmark {
  std::vector<Instance> gecor;
  std::vector<Instance> canard;
  std::vector<Instance> eval;
  std::map<std::string, LabelVector> truth;
};

ALBenchmark make_al_benchmark(Label target, std::uint64_t seed);

}  // namespace ecd
