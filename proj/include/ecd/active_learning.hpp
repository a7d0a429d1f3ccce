#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecd/dialogue.hpp"
#include "ecd/eval.hpp"
#include "ecd/model.hpp"
#include "ecd/train.hpp"
#include "json.hpp"

namespace ecd {

struct PoolEntry {
  Instance instance;
  std::optional<Prediction> prediction;
  std::string dialogue_id;
};

// |pred[label] - 0.5|, in [0, 0.5].
double certainty(const Prediction& pred, Label label);

// Mean certainty over the dialogue's entries. Throws Error on an empty list
// or an unscored entry.
double dialogue_certainty(std::span<const PoolEntry> entries, Label label);

struct AnnotationRecord {
  std::string instance_id;
  Label label = Label::kCoref;
  int value = 0;
  int round = 0;
  std::string annotator;
  std::string timestamp;

  bool operator==(const AnnotationRecord&) const = default;
};

nlohmann::json to_json(const AnnotationRecord& record);
AnnotationRecord annotation_from_json(const nlohmann::json& record);

// Labels an annotator may target.
bool is_target_label(Label label);

// The k dialogues with the lowest dialogue_certainty, ascending, ties by id.
// Dialogues holding an instance already annotated for `label` are excluded
// first. Throws Error when nothing is left to select or k == 0.
std::vector<std::string> select_dialogues(
    std::span<const PoolEntry> pool, Label label, std::size_t k,
    std::span<const AnnotationRecord> annotations);

// Seeded uniform choice among the same candidates, sorted by id. Baseline for
// measuring what uncertainty selection buys.
std::vector<std::string> select_random_dialogues(
    std::span<const PoolEntry> pool, Label label, std::size_t k,
    std::span<const AnnotationRecord> annotations, std::uint64_t seed);

enum class SelectionStrategy { kUncertainty, kRandom };

std::string_view strategy_name(SelectionStrategy s);
SelectionStrategy parse_strategy(std::string_view name);

struct HistoryEntry {
  int round = 0;
  double f1 = 0;  // percentage, target label on the eval set

  bool operator==(const HistoryEntry&) const = default;
};

struct ALState {
  int round = 0;  // next round to run
  Label target = Label::kCoref;
  std::vector<AnnotationRecord> labeled_so_far;
  std::vector<HistoryEntry> history;
  std::size_t batch_size_dialogues = 50;

  bool has_annotation(std::string_view instance_id, Label label) const;
  // Append-only. Throws ConflictError on a second record for the same
  // (instance, label) and Error on a value outside {0, 1}.
  void add_annotation(AnnotationRecord record);

  bool operator==(const ALState&) const = default;
};

// Applies the records in order to `base`.
ALState replay_annotations(ALState base, std::span<const AnnotationRecord> log);

struct ALConfig {
  TrainConfig train;
  EncoderSpec encoder;
  int max_rounds = 3;
  SelectionStrategy strategy = SelectionStrategy::kUncertainty;
  std::uint64_t seed = 0;
};

struct ALData {
  std::vector<Instance> gecor;   // labeled training data
  std::vector<Instance> canard;  // pool source, also mixed into training
  std::vector<Instance> eval;
};

// Writes the record's value into its label field, which must be -1.
Instance merge_annotation(Instance instance, const AnnotationRecord& record);

// CANARD instances whose `target` label is unknown before any annotation.
std::vector<PoolEntry> build_pool(std::span<const Instance> canard, Label target);

// GECOR + "as many from CANARD" (seeded) + every annotated CANARD instance,
// with annotations merged and labels re-filled.
std::vector<Instance> round_training_set(
    const ALData& data, std::span<const AnnotationRecord> annotations,
    std::uint64_t seed);

struct RoundOutcome {
  ALState state;                       // round advanced, history appended
  std::vector<std::string> queue;      // selected dialogue ids
  std::vector<PoolEntry> queued;       // scored entries of those dialogues
  std::vector<double> queue_certainty; // per queued dialogue
  ModelParams params;
  ReportRow report;
};

// Seeds used by round `round` for training and CANARD subsampling.
std::uint64_t round_seed(std::uint64_t base, int round);

// Train on the round's training set, evaluate on data.eval, score the pool,
// select state.batch_size_dialogues dialogues.
RoundOutcome run_round(const ALState& state, const ALData& data,
                       const ALConfig& cfg);

// True when the latest F1 is not above the previous one, or the latest round
// index has reached max_rounds.
bool should_stop(std::span<const HistoryEntry> history, int max_rounds = 3);

}  // namespace ecd
