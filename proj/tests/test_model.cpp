#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "ecd/error.hpp"
#include "ecd/model.hpp"
#include "oracles.hpp"

using namespace ecd;

using oracle::random_features;
using oracle::random_params;
using oracle::random_gold;
using oracle::random_weights;
constexpr std::uint32_t kFeatures = oracle::kGradFeatures;
constexpr std::uint32_t kHidden = oracle::kGradHidden;

TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    CHECK(oracle::gradient_check(seed) <= 1e-4);
  }
}

TEST_CASE("unknown gold values contribute nothing") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ModelParams params = random_params(rng);
    std::vector<Example> batch;
    for (int i = 0; i < 6; ++i) batch.push_back({random_features(rng), random_gold(rng)});
    batch[0].gold = LabelVector(1, -1, 0, -1);
    const LabelWeights weights = random_weights(rng);
    double base_loss = 0;
    const Gradients base = batch_gradient(params, batch, {}, weights,
                                          LabelSet::kFourLabels, &base_loss);

    // Whatever the model predicts for an unknown head, nothing changes.
    for (Label masked : {Label::kEllipsis, Label::kPronoun}) {
      const int h = static_cast<int>(masked);
      for (auto& ex : batch) ex.gold[masked] = -1;
      ModelParams moved = params;
      double unused = 0;
      const Gradients before = batch_gradient(params, batch, {}, weights,
                                              LabelSet::kFourLabels, &unused);
      moved.b2()[h] += 3.0;
      for (std::uint32_t j = 0; j < kHidden; ++j) moved.w2()[j * kNumHeads + h] -= 1.5;
      double moved_loss = 0;
      const Gradients after = batch_gradient(moved, batch, {}, weights,
                                             LabelSet::kFourLabels, &moved_loss);
      CHECK(moved_loss == unused);
      CHECK(moved_loss ==
            doctest::Approx(batch_loss(params, batch, {}, weights, LabelSet::kFourLabels)));
      CHECK(after.b2[h] == 0.0);
      for (std::size_t l = 0; l < kNumHeads; ++l) {
        if (static_cast<int>(l) != h) CHECK(after.b2[l] == before.b2[l]);
      }
      CHECK(after.b1 == before.b1);
      for (std::uint32_t j = 0; j < kHidden; ++j) {
        CHECK(after.w2[j * kNumHeads + h] == 0.0);
      }
      for (std::uint32_t r = 0; r < kFeatures; ++r) {
        for (std::uint32_t c = 0; c < kHidden; ++c) CHECK(after.w1(r, c) == before.w1(r, c));
      }
    }

    // An example with no known gold is inert regardless of its input.
    std::vector<Example> a = batch, b = batch;
    a.push_back({random_features(rng), LabelVector()});
    b.push_back({random_features(rng), LabelVector()});
    double la = 0, lb = 0;
    const Gradients ga = batch_gradient(params, a, {}, weights, LabelSet::kFourLabels, &la);
    const Gradients gb = batch_gradient(params, b, {}, weights, LabelSet::kFourLabels, &lb);
    CHECK(la == lb);
    CHECK(ga.b1 == gb.b1);
    CHECK(ga.w2 == gb.w2);
    CHECK(ga.b2 == gb.b2);
    for (std::uint32_t r = 0; r < kFeatures; ++r) {
      for (std::uint32_t c = 0; c < kHidden; ++c) CHECK(ga.w1(r, c) == gb.w1(r, c));
    }
    CHECK(base_loss >= 0);
    CHECK(base.hidden_dim == kHidden);
  }
}

TEST_CASE("heads outside the two-label set receive no loss") {
  Rng rng(3);
  const ModelParams params = random_params(rng);
  const Prediction pred = forward(params, random_features(rng));
  const LabelWeights w = unit_weights();
  const double two = loss(pred, {1, 0, 1, 1}, w, LabelSet::kTwoLabels);
  CHECK(two == loss(pred, {1, 0, 0, 0}, w, LabelSet::kTwoLabels));
  const double expected = (pred[Label::kCoref] - 1) * (pred[Label::kCoref] - 1) +
                          pred[Label::kEllipsis] * pred[Label::kEllipsis];
  CHECK(two == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("balanced class weights give both classes equal total weight") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto n_pos = static_cast<std::int64_t>(1 + rng.below(1000000));
    const auto n_neg = static_cast<std::int64_t>(1 + rng.below(1000000));
    const ClassWeights w = ClassWeights::balanced(n_pos, n_neg);
    CHECK(w.pos * n_pos == w.neg * n_neg);
    CHECK(w.pos * n_pos == Rational::make(n_pos + n_neg, 2));
  }
  const ClassWeights w = ClassWeights::balanced(1, 3);
  CHECK(w.pos == Rational{2, 1});
  CHECK(w.neg == Rational{2, 3});
  CHECK_THROWS_AS(ClassWeights::balanced(0, 3), Error);
}

TEST_CASE("class weights count only known values") {
  std::vector<Instance> train(5);
  train[0].labels = {1, -1, 1, 1};
  train[1].labels = {0, 1, 1, 0};
  train[2].labels = {0, 0, 0, 0};
  train[3].labels = {-1, 1, 1, 0};
  train[4].labels = {0, -1, 1, -1};
  const ClassWeights coref = compute_class_weights(train, Label::kCoref);
  CHECK(coref.pos == Rational{2, 1});
  CHECK(coref.neg == Rational{2, 3});
  const ClassWeights pron = compute_class_weights(train, Label::kPronoun);
  CHECK(pron.pos * 1 == pron.neg * 3);
  train[2].labels = {0, 0, -1, 0};
  CHECK_THROWS_AS(compute_class_weights(train, Label::kInc), Error);
}

TEST_CASE("dropout masks scale kept units") {
  Rng rng(5);
  const DropoutMask m = DropoutMask::sample(1000, 0.1, rng);
  int dropped = 0;
  for (double s : m.scale) {
    if (s == 0.0) ++dropped;
    else CHECK(s == doctest::Approx(1 / 0.9));
  }
  CHECK(dropped > 60);
  CHECK(dropped < 140);
  const DropoutMask none = DropoutMask::sample(10, 0.0, rng);
  CHECK(none.scale == std::vector<double>(10, 1.0));
}

TEST_CASE("lazy rows read as their initial values") {
  ModelParams p = ModelParams::glorot(1u << 18, 16, 99);
  const double bound = std::sqrt(6.0 / ((1u << 18) + 16));
  CHECK(p.w1_init_bound() == doctest::Approx(bound));
  const double before = p.w1(12345, 3);
  CHECK(std::abs(before) <= bound);
  CHECK_FALSE(p.row_materialized(12345));
  const ModelParams copy = p;
  p.w1_row(12345);
  CHECK(p.row_materialized(12345));
  CHECK(p.w1(12345, 3) == before);
  CHECK(p == copy);
  p.w1_row(12345)[3] += 1;
  CHECK_FALSE(p == copy);
  CHECK(ModelParams::glorot(1u << 18, 16, 99).w1(7, 0) == copy.w1(7, 0));
  CHECK(ModelParams::glorot(1u << 18, 16, 100).w1(7, 0) != copy.w1(7, 0));
}

TEST_CASE("model files round-trip") {
  Rng rng(21);
  Model m;
  m.encoder.feature_dim = kFeatures;
  m.encoder.context_window = 3;
  m.label_set = LabelSet::kTwoLabels;
  m.params = random_params(rng);
  m.params.w1_row(5)[2] = 0.25;
  m.params.w1_row(1)[0] = -4;

  const std::string bytes = serialize_model(m);
  const Model back = deserialize_model(bytes);
  CHECK(back.encoder == m.encoder);
  CHECK(back.label_set == m.label_set);
  CHECK(back.params == m.params);
  CHECK(back.params.seed() == m.params.seed());
  const SparseVector x = random_features(rng);
  CHECK(forward(back.params, x) == forward(m.params, x));

  const auto path = std::filesystem::temp_directory_path() / "ecd_model_test.bin";
  save_model(m, path);
  CHECK(load_model(path).params == m.params);
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[0] ^= 0x5a;
  CHECK_THROWS_AS(deserialize_model(bad), Error);
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(deserialize_model(bytes + "x"), Error);
  CHECK_THROWS_AS(load_model("/nonexistent/model.bin"), Error);

  Model zero;
  zero.encoder.feature_dim = kFeatures;
  zero.params = ModelParams::zeros(kFeatures, kHidden);
  CHECK(deserialize_model(serialize_model(zero)).params == zero.params);
}

TEST_CASE("non-finite parameters are rejected") {
  Rng rng(8);
  const SparseVector x = random_features(rng);
  ModelParams p = random_params(rng);
  CHECK_NOTHROW(p.check_finite());
  p.b1()[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(p.check_finite(), Error);
  CHECK_THROWS_AS(forward(p, x), Error);

  p = random_params(rng);
  p.w1_row(x.index[0])[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(p.check_finite(), Error);
  CHECK_THROWS_AS(forward(p, x), Error);

  p = random_params(rng);
  p.w2()[5] = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(forward(p, x), Error);
}

TEST_CASE("forward checks shapes and binarize uses the threshold") {
  Rng rng(4);
  const ModelParams p = random_params(rng);
  SparseVector out_of_range;
  out_of_range.index = {kFeatures};
  out_of_range.value = {1.0};
  CHECK_THROWS_AS(forward(p, out_of_range), Error);
  DropoutMask wrong;
  wrong.scale.assign(kHidden + 1, 1.0);
  CHECK_THROWS_AS(forward(p, random_features(rng), &wrong), Error);

  Prediction pred;
  pred.values = {0.5, 0.4999, 0.9, 0.0};
  CHECK(binarize(pred) == LabelVector(1, 0, 1, 0));
  CHECK(binarize(pred, 0.95) == LabelVector(0, 0, 0, 0));
}
