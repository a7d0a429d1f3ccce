#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecd/dialogue.hpp"
#include "ecd/encoder.hpp"
#include "ecd/label_vector.hpp"
#include "ecd/rng.hpp"

namespace ecd {

inline constexpr std::size_t kNumHeads = kNumLabels;

// Which heads receive loss. Four outputs are always produced.
enum class LabelSet { kTwoLabels, kFourLabels };

bool head_active(LabelSet set, Label label);
int label_count(LabelSet set);
LabelSet label_set_from_count(int count);

enum class InitScheme { kGlorotUniform, kZero };

// Weights of the hidden layer and the 4-unit sigmoid head.
//
// W1 is feature_dim x hidden_dim, which at the default 2^18 x 768 is far too
// large to hold densely. Rows are therefore materialized on first write; a
// row that was never written holds its initial value, generated from
// (seed, row) on demand. Every observable value is identical to a dense
// matrix initialized the same way.
class ModelParams {
 public:
  ModelParams() = default;

  // W1 and W2 uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); biases 0.
  static ModelParams glorot(std::uint32_t feature_dim, std::uint32_t hidden_dim,
                            std::uint64_t seed);
  static ModelParams zeros(std::uint32_t feature_dim, std::uint32_t hidden_dim);

  std::uint32_t feature_dim() const { return feature_dim_; }
  std::uint32_t hidden_dim() const { return hidden_dim_; }
  std::uint64_t seed() const { return seed_; }
  InitScheme init() const { return init_; }

  double w1(std::uint32_t row, std::uint32_t col) const;
  // Copies row `row` of W1 into `out` (size hidden_dim).
  void read_w1_row(std::uint32_t row, std::span<double> out) const;
  // Mutable row; materializes it.
  std::span<double> w1_row(std::uint32_t row);
  bool row_materialized(std::uint32_t row) const {
    return slot_of_row_[row] >= 0;
  }
  // Materialized rows in materialization order.
  const std::vector<std::uint32_t>& materialized_rows() const {
    return row_of_slot_;
  }

  std::vector<double>& b1() { return b1_; }
  const std::vector<double>& b1() const { return b1_; }
  // hidden_dim x 4, row-major: w2()[j * 4 + head].
  std::vector<double>& w2() { return w2_; }
  const std::vector<double>& w2() const { return w2_; }
  std::array<double, kNumHeads>& b2() { return b2_; }
  const std::array<double, kNumHeads>& b2() const { return b2_; }

  // Throws Error naming the first non-finite parameter.
  void check_finite() const;

  // Equality of effective values (materialization is not observable).
  bool operator==(const ModelParams& other) const;

  double w1_init_bound() const;
  double w1_initial(std::uint32_t row, std::uint32_t col) const;

 private:
  ModelParams(std::uint32_t feature_dim, std::uint32_t hidden_dim,
              std::uint64_t seed, InitScheme init);

  std::uint32_t feature_dim_ = 0;
  std::uint32_t hidden_dim_ = 0;
  std::uint64_t seed_ = 0;
  InitScheme init_ = InitScheme::kZero;

  std::vector<std::int32_t> slot_of_row_;
  std::vector<std::uint32_t> row_of_slot_;
  std::vector<double> rows_;

  std::vector<double> b1_;
  std::vector<double> w2_;
  std::array<double, kNumHeads> b2_{};

  friend std::string serialize_params(const ModelParams&);
  friend ModelParams deserialize_params(std::string_view&);
};

struct Prediction {
  std::array<double, kNumHeads> values{};

  double operator[](Label l) const { return values[static_cast<int>(l)]; }
  bool operator==(const Prediction&) const = default;
};

// Per-unit multiplier applied to the hidden activation: 0 for dropped units,
// 1 / (1 - p) for kept ones.
struct DropoutMask {
  std::vector<double> scale;

  static DropoutMask sample(std::size_t hidden_dim, double p, Rng& rng);
};

struct Activations {
  std::vector<double> pre_hidden;  // W1^T x + b1
  std::vector<double> hidden;      // relu, after dropout
  std::array<double, kNumHeads> logits{};
  std::array<double, kNumHeads> output{};
};

// sigmoid(W2^T relu(W1^T x + b1) + b2). Throws Error on shape mismatch or a
// non-finite parameter on the evaluated path.
Prediction forward(const ModelParams& params, const SparseVector& x,
                   const DropoutMask* mask = nullptr);
Prediction forward(const ModelParams& params, const SparseVector& x,
                   const DropoutMask* mask, Activations& acts);

// Exact rational, kept reduced.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Rational operator*(std::int64_t k) const;
  bool operator==(const Rational&) const = default;
};

// Balanced class weights. With n_pos and n_neg known values,
// w_pos = (n_pos + n_neg) / (2 n_pos), w_neg = (n_pos + n_neg) / (2 n_neg),
// held exactly so that w_pos * n_pos == w_neg * n_neg.
struct ClassWeights {
  Rational pos = {1, 1};
  Rational neg = {1, 1};

  static ClassWeights balanced(std::int64_t n_pos, std::int64_t n_neg);
  double w_pos() const { return pos.value(); }
  double w_neg() const { return neg.value(); }
};

using LabelWeights = std::array<ClassWeights, kNumHeads>;

inline LabelWeights unit_weights() { return {}; }

// Throws Error naming the label when either class has no known instance.
ClassWeights compute_class_weights(std::span<const Instance> train, Label label);

// Sum over active heads with known gold of w(gold) * (pred - gold)^2.
double loss(const Prediction& pred, const LabelVector& gold,
            const LabelWeights& weights, LabelSet set);

struct Example {
  SparseVector features;
  LabelVector gold;
};

// Accumulated gradient. W1 rows are sparse: only rows with a nonzero input
// feature in the batch appear.
struct Gradients {
  std::uint32_t hidden_dim = 0;
  std::unordered_map<std::uint32_t, std::vector<double>> w1_rows;
  std::vector<double> b1;
  std::vector<double> w2;
  std::array<double, kNumHeads> b2{};

  explicit Gradients(std::uint32_t hidden = 0);
  std::vector<double>& w1_row(std::uint32_t row);
  double w1(std::uint32_t row, std::uint32_t col) const;
};

// Mean per-example loss over the batch. `masks` is empty (no dropout) or one
// mask per example.
double batch_loss(const ModelParams& params, std::span<const Example> batch,
                  std::span<const DropoutMask> masks,
                  const LabelWeights& weights, LabelSet set);

// Gradient of batch_loss. Writes the loss to *loss_out when non-null.
Gradients batch_gradient(const ModelParams& params,
                         std::span<const Example> batch,
                         std::span<const DropoutMask> masks,
                         const LabelWeights& weights, LabelSet set,
                         double* loss_out = nullptr);

// Trained classifier plus everything needed to re-encode inputs.
struct Model {
  EncoderSpec encoder;
  LabelSet label_set = LabelSet::kFourLabels;
  ModelParams params;
};

// Versioned binary container: magic, version, JSON header (encoder spec,
// shapes, seed), then raw little-endian parameter arrays.
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Forward pass without dropout.
Prediction predict(const ModelParams& params, const Encoder& encoder,
                   const Instance& instance);

// 1 iff value >= threshold.
LabelVector binarize(const Prediction& pred, double threshold = 0.5);

}  // namespace ecd
