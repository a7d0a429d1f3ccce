#include "ecd/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "ecd/error.hpp"
#include "ecd/rng.hpp"

namespace ecd {
namespace {

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ModelParams& params)
      : cfg_(cfg),
        b1_(params.hidden_dim()),
        w2_(params.w2().size()),
        b2_(kNumHeads) {}

  void step(ModelParams& params, const Gradients& grad) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      const double lr = cfg_.learning_rate;
      for (std::size_t j = 0; j < grad.b1.size(); ++j) params.b1()[j] -= lr * grad.b1[j];
      for (std::size_t j = 0; j < grad.w2.size(); ++j) params.w2()[j] -= lr * grad.w2[j];
      for (std::size_t l = 0; l < kNumHeads; ++l) params.b2()[l] -= lr * grad.b2[l];
      for (const auto& [row, g] : grad.w1_rows) {
        auto w = params.w1_row(row);
        for (std::size_t j = 0; j < g.size(); ++j) w[j] -= lr * g[j];
      }
      return;
    }
    bias1_ = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    bias2_ = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    adam(params.b1(), grad.b1, b1_);
    adam(params.w2(), grad.w2, w2_);
    adam(params.b2(), grad.b2, b2_);
    // Lazy: W1 rows absent from the batch keep their moments untouched.
    for (const auto& [row, g] : grad.w1_rows) {
      auto [it, inserted] = rows_.try_emplace(row);
      if (inserted) it->second = AdamMoments(g.size());
      adam(params.w1_row(row), g, it->second);
    }
  }

 private:
  template <typename Params, typename Grad>
  void adam(Params&& w, const Grad& g, AdamMoments& s) {
    const double lr = cfg_.learning_rate;
    const double beta1 = cfg_.adam_beta1, beta2 = cfg_.adam_beta2;
    for (std::size_t j = 0; j < std::size(g); ++j) {
      s.m[j] = beta1 * s.m[j] + (1.0 - beta1) * g[j];
      s.v[j] = beta2 * s.v[j] + (1.0 - beta2) * g[j] * g[j];
      const double m_hat = s.m[j] / bias1_;
      const double v_hat = s.v[j] / bias2_;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_epsilon);
    }
  }

  const TrainConfig& cfg_;
  long t_ = 0;
  double bias1_ = 1, bias2_ = 1;
  AdamMoments b1_, w2_, b2_;
  std::unordered_map<std::uint32_t, AdamMoments> rows_;
};

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw Error("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw Error("epochs must be positive");
  if (batch_size <= 0) throw Error("batch_size must be positive");
  if (!(learning_rate >= 0)) throw Error("learning_rate must be >= 0");
  if (!(dropout >= 0 && dropout < 1)) throw Error("dropout must be in [0, 1)");
  if (hidden_dim == 0) throw Error("hidden_dim must be positive");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"dropout", cfg.dropout},
          {"labels", label_count(cfg.label_set)},
          {"shuffle_seed", cfg.shuffle_seed},
          {"init_seed", cfg.init_seed},
          {"hidden_dim", cfg.hidden_dim},
          {"optimizer", optimizer_name(cfg.optimizer)},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_epsilon", cfg.adam_epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& record) {
  TrainConfig cfg;
  cfg.epochs = record.value("epochs", cfg.epochs);
  cfg.batch_size = record.value("batch_size", cfg.batch_size);
  cfg.learning_rate = record.value("learning_rate", cfg.learning_rate);
  cfg.dropout = record.value("dropout", cfg.dropout);
  if (auto it = record.find("labels"); it != record.end()) {
    cfg.label_set = label_set_from_count(it->get<int>());
  }
  cfg.shuffle_seed = record.value("shuffle_seed", cfg.shuffle_seed);
  cfg.init_seed = record.value("init_seed", cfg.init_seed);
  cfg.hidden_dim = record.value("hidden_dim", cfg.hidden_dim);
  if (auto it = record.find("optimizer"); it != record.end()) {
    cfg.optimizer = parse_optimizer(it->get<std::string>());
  }
  cfg.adam_beta1 = record.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = record.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_epsilon = record.value("adam_epsilon", cfg.adam_epsilon);
  cfg.validate();
  return cfg;
}

LabelWeights training_weights(std::span<const Instance> instances, LabelSet set) {
  LabelWeights weights = unit_weights();
  bool any_known = false;
  for (Label l : kAllLabels) {
    if (!head_active(set, l)) continue;
    std::int64_t n_pos = 0, n_neg = 0;
    for (const Instance& inst : instances) {
      if (inst.labels[l] == 1) ++n_pos;
      if (inst.labels[l] == 0) ++n_neg;
    }
    any_known = any_known || n_pos + n_neg > 0;
    if (n_pos > 0 && n_neg > 0) {
      weights[static_cast<int>(l)] = ClassWeights::balanced(n_pos, n_neg);
    }
  }
  if (!any_known) throw Error("training set has no known label");
  return weights;
}

TrainResult train(std::span<const Instance> instances, const Encoder& encoder,
                  const TrainConfig& cfg, const ModelParams* init,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (instances.empty()) throw Error("empty training set");
  TrainResult result;
  result.weights = training_weights(instances, cfg.label_set);

  const std::uint32_t feature_dim = encoder.spec().feature_dim;
  if (init) {
    if (init->feature_dim() != feature_dim) {
      throw Error("initial model feature_dim does not match the encoder");
    }
    result.params = *init;
  } else {
    result.params = ModelParams::glorot(feature_dim, cfg.hidden_dim, cfg.init_seed);
  }
  ModelParams& params = result.params;

  std::vector<Example> examples;
  examples.reserve(instances.size());
  for (const Instance& inst : instances) {
    examples.push_back({encoder.encode(inst.context, inst.question), inst.labels});
  }

  Optimizer optimizer(cfg, params);
  Rng order_rng(cfg.shuffle_seed);
  Rng dropout_rng(mix64(cfg.shuffle_seed ^ 0x2545f4914f6cdd1dULL));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Example> batch;
  std::vector<DropoutMask> masks;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      masks.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(examples[order[k]]);
        if (cfg.dropout > 0) {
          masks.push_back(DropoutMask::sample(params.hidden_dim(), cfg.dropout,
                                              dropout_rng));
        }
      }
      double batch_loss_value = 0;
      Gradients grad;
      try {
        grad = batch_gradient(params, batch, masks, result.weights,
                              cfg.label_set, &batch_loss_value);
      } catch (const Error& e) {
        throw Error(std::string("training diverged: ") + e.what());
      }
      if (!std::isfinite(batch_loss_value)) {
        throw Error("training diverged: non-finite loss in epoch " +
                    std::to_string(epoch + 1));
      }
      epoch_total += batch_loss_value * static_cast<double>(end - start);
      optimizer.step(params, grad);
    }
    const double mean = epoch_total / static_cast<double>(examples.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

std::vector<Instance> canard_gecor_mixture(std::span<const Instance> gecor,
                                           std::span<const Instance> canard,
                                           std::uint64_t seed) {
  std::vector<Instance> out(gecor.begin(), gecor.end());
  if (canard.size() <= gecor.size()) {
    out.insert(out.end(), canard.begin(), canard.end());
    return out;
  }
  std::vector<std::size_t> idx(canard.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first gecor.size() slots are the sample.
  for (std::size_t i = 0; i < gecor.size(); ++i) {
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  }
  idx.resize(gecor.size());
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) out.push_back(canard[i]);
  return out;
}

}  // namespace ecd
