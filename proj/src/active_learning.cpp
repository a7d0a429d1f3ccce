#include "ecd/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ecd/error.hpp"
#include "ecd/labels.hpp"
#include "ecd/rng.hpp"

namespace ecd {
namespace {

std::unordered_set<std::string> annotated_dialogues(
    std::span<const PoolEntry> pool, Label label,
    std::span<const AnnotationRecord> annotations) {
  std::unordered_map<std::string_view, std::string_view> dialogue_of;
  for (const PoolEntry& e : pool) dialogue_of.emplace(e.instance.id, e.dialogue_id);
  std::unordered_set<std::string> out;
  for (const AnnotationRecord& r : annotations) {
    if (r.label != label) continue;
    if (auto it = dialogue_of.find(r.instance_id); it != dialogue_of.end()) {
      out.emplace(it->second);
    }
  }
  return out;
}

// Candidate dialogues in id order, each with its entries in pool order.
std::map<std::string, std::vector<const PoolEntry*>> candidates(
    std::span<const PoolEntry> pool, Label label,
    std::span<const AnnotationRecord> annotations) {
  const auto excluded = annotated_dialogues(pool, label, annotations);
  std::map<std::string, std::vector<const PoolEntry*>> out;
  for (const PoolEntry& e : pool) {
    if (!excluded.contains(e.dialogue_id)) out[e.dialogue_id].push_back(&e);
  }
  if (out.empty()) {
    throw Error("no unannotated dialogue left in the pool for " +
                std::string(label_name(label)));
  }
  return out;
}

double mean_certainty(const std::vector<const PoolEntry*>& entries, Label label) {
  double sum = 0;
  for (const PoolEntry* e : entries) {
    if (!e->prediction) {
      throw Error("pool entry '" + e->instance.id + "' has not been scored");
    }
    sum += certainty(*e->prediction, label);
  }
  return sum / static_cast<double>(entries.size());
}

}  // namespace

double certainty(const Prediction& pred, Label label) {
  return std::abs(pred[label] - 0.5);
}

double dialogue_certainty(std::span<const PoolEntry> entries, Label label) {
  if (entries.empty()) throw Error("dialogue_certainty of an empty dialogue");
  std::vector<const PoolEntry*> ptrs;
  for (const PoolEntry& e : entries) ptrs.push_back(&e);
  return mean_certainty(ptrs, label);
}

bool is_target_label(Label label) {
  return label == Label::kCoref || label == Label::kEllipsis;
}

nlohmann::json to_json(const AnnotationRecord& r) {
  return {{"instance_id", r.instance_id}, {"label_name", label_name(r.label)},
          {"value", r.value},             {"round", r.round},
          {"annotator", r.annotator},     {"timestamp", r.timestamp}};
}

AnnotationRecord annotation_from_json(const nlohmann::json& j) {
  AnnotationRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.label = parse_label(j.at("label_name").get<std::string>());
  r.value = j.at("value").get<int>();
  r.round = j.value("round", 0);
  r.annotator = j.value("annotator", std::string());
  r.timestamp = j.value("timestamp", std::string());
  return r;
}

std::vector<std::string> select_dialogues(
    std::span<const PoolEntry> pool, Label label, std::size_t k,
    std::span<const AnnotationRecord> annotations) {
  if (k == 0) throw Error("k must be at least 1");
  const auto groups = candidates(pool, label, annotations);
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& [id, entries] : groups) {
    scored.emplace_back(mean_certainty(entries, label), id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
    out.push_back(scored[i].second);
  }
  return out;
}

std::vector<std::string> select_random_dialogues(
    std::span<const PoolEntry> pool, Label label, std::size_t k,
    std::span<const AnnotationRecord> annotations, std::uint64_t seed) {
  if (k == 0) throw Error("k must be at least 1");
  const auto groups = candidates(pool, label, annotations);
  std::vector<std::string> ids;
  for (const auto& [id, entries] : groups) ids.push_back(id);
  Rng rng(seed);
  rng.shuffle(ids);
  ids.resize(std::min(k, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string_view strategy_name(SelectionStrategy s) {
  return s == SelectionStrategy::kUncertainty ? "uncertainty" : "random";
}

SelectionStrategy parse_strategy(std::string_view name) {
  if (name == "uncertainty") return SelectionStrategy::kUncertainty;
  if (name == "random") return SelectionStrategy::kRandom;
  throw Error("unknown selection strategy '" + std::string(name) + "'");
}

bool ALState::has_annotation(std::string_view instance_id, Label label) const {
  return std::any_of(labeled_so_far.begin(), labeled_so_far.end(),
                     [&](const AnnotationRecord& r) {
                       return r.instance_id == instance_id && r.label == label;
                     });
}

void ALState::add_annotation(AnnotationRecord record) {
  if (record.value != 0 && record.value != 1) {
    throw Error("annotation value must be 0 or 1, got " +
                std::to_string(record.value));
  }
  if (has_annotation(record.instance_id, record.label)) {
    throw ConflictError("instance '" + record.instance_id +
                        "' is already annotated for " +
                        std::string(label_name(record.label)));
  }
  labeled_so_far.push_back(std::move(record));
}

ALState replay_annotations(ALState base, std::span<const AnnotationRecord> log) {
  for (const AnnotationRecord& r : log) base.add_annotation(r);
  return base;
}

Instance merge_annotation(Instance instance, const AnnotationRecord& record) {
  if (instance.id != record.instance_id) {
    throw Error("annotation for '" + record.instance_id + "' applied to '" +
                instance.id + "'");
  }
  if (instance.labels[record.label] != -1) {
    throw Error("instance '" + instance.id + "' already has a known " +
                std::string(label_name(record.label)) + " label");
  }
  instance.labels[record.label] = record.value;
  return instance;
}

std::vector<PoolEntry> build_pool(std::span<const Instance> canard, Label target) {
  std::vector<PoolEntry> pool;
  for (const Instance& inst : canard) {
    if (inst.labels[target] == -1) pool.push_back({inst, std::nullopt, inst.dialogue_id});
  }
  return pool;
}

std::vector<Instance> round_training_set(
    const ALData& data, std::span<const AnnotationRecord> annotations,
    std::uint64_t seed) {
  std::unordered_map<std::string_view, std::vector<const AnnotationRecord*>> by_id;
  for (const AnnotationRecord& r : annotations) by_id[r.instance_id].push_back(&r);

  std::vector<Instance> rest, annotated;
  std::size_t matched = 0;
  for (const Instance& inst : data.canard) {
    auto it = by_id.find(inst.id);
    if (it == by_id.end()) {
      rest.push_back(inst);
      continue;
    }
    ++matched;
    Instance merged = inst;
    for (const AnnotationRecord* r : it->second) merged = merge_annotation(merged, *r);
    try {
      merged.labels = fill_labels(merged.labels);
    } catch (const ConsistencyError& e) {
      throw ConsistencyError(e.rule(), "annotated instance '" + inst.id +
                                           "': " + e.what());
    }
    annotated.push_back(std::move(merged));
  }
  if (matched != by_id.size()) {
    throw Error("annotations reference instances outside the pool");
  }
  std::vector<Instance> out = canard_gecor_mixture(data.gecor, rest, seed);
  out.insert(out.end(), std::make_move_iterator(annotated.begin()),
             std::make_move_iterator(annotated.end()));
  return out;
}

std::uint64_t round_seed(std::uint64_t base, int round) {
  return mix64(base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(round + 1));
}

RoundOutcome run_round(const ALState& state, const ALData& data,
                       const ALConfig& cfg) {
  const Label target = state.target;
  if (!is_target_label(target)) {
    throw Error("active learning targets coref or ellipsis only");
  }
  if (std::none_of(data.eval.begin(), data.eval.end(),
                   [&](const Instance& i) { return i.labels.known(target); })) {
    throw Error("eval set has no known " + std::string(label_name(target)) +
                " label");
  }

  const std::uint64_t seed = round_seed(cfg.seed, state.round);
  const std::vector<Instance> train_set =
      round_training_set(data, state.labeled_so_far, seed);
  TrainConfig tc = cfg.train;
  tc.shuffle_seed = seed;
  tc.init_seed = mix64(seed ^ 0x1);
  const auto encoder = make_encoder(cfg.encoder);

  RoundOutcome out;
  out.params = train(train_set, *encoder, tc).params;
  const std::vector<Label> columns = {Label::kCoref, Label::kEllipsis};
  out.report = evaluate(out.params, *encoder, data.eval, columns,
                        "round " + std::to_string(state.round));
  const double f1 = out.report.at(target).scores.f1;

  std::vector<PoolEntry> pool = build_pool(data.canard, target);
  const auto excluded = annotated_dialogues(pool, target, state.labeled_so_far);
  for (PoolEntry& e : pool) {
    if (!excluded.contains(e.dialogue_id)) {
      e.prediction = predict(out.params, *encoder, e.instance);
    }
  }
  out.queue = cfg.strategy == SelectionStrategy::kUncertainty
                  ? select_dialogues(pool, target, state.batch_size_dialogues,
                                     state.labeled_so_far)
                  : select_random_dialogues(pool, target,
                                            state.batch_size_dialogues,
                                            state.labeled_so_far, mix64(seed ^ 0x2));
  if (out.queue.empty()) throw Error("empty annotation queue");

  for (const std::string& id : out.queue) {
    std::vector<PoolEntry> entries;
    for (const PoolEntry& e : pool) {
      if (e.dialogue_id == id) entries.push_back(e);
    }
    out.queue_certainty.push_back(dialogue_certainty(entries, target));
    out.queued.insert(out.queued.end(), entries.begin(), entries.end());
  }

  out.state = state;
  out.state.history.push_back({state.round, f1});
  out.state.round = state.round + 1;
  return out;
}

bool should_stop(std::span<const HistoryEntry> history, int max_rounds) {
  if (history.empty()) return false;
  const HistoryEntry& latest = history.back();
  if (latest.round >= max_rounds) return true;
  return history.size() >= 2 && latest.f1 <= history[history.size() - 2].f1;
}

}  // namespace ecd
