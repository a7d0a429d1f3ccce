#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ecd/dialogue.hpp"
#include "ecd/encoder.hpp"
#include "ecd/model.hpp"
#include "json.hpp"

namespace ecd {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double dropout = 0.1;
  LabelSet label_set = LabelSet::kFourLabels;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint32_t hidden_dim = 768;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults. Validates the result.
TrainConfig train_config_from_json(const nlohmann::json& record);

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean per-example loss of each epoch
  LabelWeights weights;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Mini-batch training on the class-weighted masked MSE. When `init` is given
// training continues from it (fine-tuning); otherwise parameters are
// initialized from cfg.init_seed. Throws Error when no active head has a
// known label, or when the loss becomes non-finite.
TrainResult train(std::span<const Instance> instances, const Encoder& encoder,
                  const TrainConfig& cfg, const ModelParams* init = nullptr,
                  const EpochCallback& on_epoch = {});

// Class weights used by train(): balanced per active head, (1, 1) for a head
// missing one of the classes.
LabelWeights training_weights(std::span<const Instance> instances, LabelSet set);

// All of `gecor` plus a seeded uniform sample of `canard` of the same size
// (all of it when smaller). Sampled instances keep their input order.
std::vector<Instance> canard_gecor_mixture(std::span<const Instance> gecor,
                                           std::span<const Instance> canard,
                                           std::uint64_t seed);

}  // namespace ecd
