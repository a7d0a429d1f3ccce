#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "ecd/error.hpp"
#include "ecd/synthetic.hpp"
#include "ecd/train.hpp"

using namespace ecd;

namespace {

EncoderSpec small_encoder() {
  EncoderSpec spec;
  spec.feature_dim = 1u << 12;
  return spec;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-2;
  cfg.shuffle_seed = 5;
  cfg.init_seed = 6;
  return cfg;
}

std::vector<Instance> corpus(std::size_t dialogues = 20) {
  SyntheticOptions opt;
  opt.seed = 3;
  opt.dialogues = dialogues;
  return make_synthetic_instances(opt);
}

}  // namespace

TEST_CASE("training is deterministic given the seeds") {
  const auto data = corpus();
  HashedNgramEncoder enc(small_encoder());
  const TrainConfig cfg = small_config();
  const TrainResult a = train(data, enc, cfg);
  const TrainResult b = train(data, enc, cfg);
  CHECK(a.params == b.params);
  CHECK(a.epoch_loss == b.epoch_loss);

  TrainConfig other = cfg;
  other.shuffle_seed = 99;
  CHECK_FALSE(train(data, enc, other).params == a.params);
  other = cfg;
  other.init_seed = 99;
  CHECK_FALSE(train(data, enc, other).params == a.params);
}

TEST_CASE("training lowers the loss and reports each epoch") {
  const auto data = corpus();
  HashedNgramEncoder enc(small_encoder());
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  std::vector<int> seen;
  const TrainResult r =
      train(data, enc, cfg, nullptr, [&](int epoch, double) { seen.push_back(epoch); });
  CHECK(seen == std::vector<int>{1, 2, 3, 4, 5});
  REQUIRE(r.epoch_loss.size() == 5);
  for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) {
    CHECK(r.epoch_loss[i] < r.epoch_loss[i - 1]);
  }
}

TEST_CASE("one full-batch SGD step is a plain gradient step") {
  const auto data = corpus(4);
  HashedNgramEncoder enc(small_encoder());
  TrainConfig cfg = small_config();
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.epochs = 1;
  cfg.dropout = 0;
  cfg.batch_size = static_cast<int>(data.size());
  cfg.learning_rate = 0.5;
  const TrainResult r = train(data, enc, cfg);

  const ModelParams init = ModelParams::glorot(enc.spec().feature_dim, cfg.hidden_dim,
                                               cfg.init_seed);
  std::vector<Example> examples;
  for (const Instance& inst : data) {
    examples.push_back({enc.encode(inst.context, inst.question), inst.labels});
  }
  const Gradients g = batch_gradient(init, examples, {}, r.weights, cfg.label_set);
  for (std::size_t l = 0; l < kNumHeads; ++l) {
    CHECK(r.params.b2()[l] == doctest::Approx(init.b2()[l] - 0.5 * g.b2[l]).epsilon(1e-9));
  }
  for (std::size_t j = 0; j < g.w2.size(); ++j) {
    CHECK(r.params.w2()[j] == doctest::Approx(init.w2()[j] - 0.5 * g.w2[j]).epsilon(1e-9));
  }
  for (const auto& [row, grow] : g.w1_rows) {
    for (std::uint32_t c = 0; c < cfg.hidden_dim; ++c) {
      CHECK(r.params.w1(row, c) ==
            doctest::Approx(init.w1(row, c) - 0.5 * grow[c]).epsilon(1e-9));
    }
  }
}

TEST_CASE("the first Adam step moves each touched parameter by about the learning rate") {
  const auto data = corpus(4);
  HashedNgramEncoder enc(small_encoder());
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.dropout = 0;
  cfg.batch_size = static_cast<int>(data.size());
  cfg.learning_rate = 1e-3;
  const TrainResult r = train(data, enc, cfg);
  const ModelParams init = ModelParams::glorot(enc.spec().feature_dim, cfg.hidden_dim,
                                               cfg.init_seed);
  for (std::size_t l = 0; l < kNumHeads; ++l) {
    CHECK(std::abs(r.params.b2()[l] - init.b2()[l]) == doctest::Approx(1e-3).epsilon(1e-3));
  }
}

TEST_CASE("fine-tuning starts from the given parameters") {
  const auto data = corpus();
  HashedNgramEncoder enc(small_encoder());
  TrainConfig cfg = small_config();
  const TrainResult first = train(data, enc, cfg);
  TrainConfig frozen = cfg;
  frozen.learning_rate = 0;
  CHECK(train(data, enc, frozen, &first.params).params == first.params);
  const TrainResult more = train(data, enc, cfg, &first.params);
  CHECK(more.epoch_loss.front() < first.epoch_loss.front());

  const ModelParams wrong = ModelParams::zeros(1u << 10, cfg.hidden_dim);
  CHECK_THROWS_AS(train(data, enc, cfg, &wrong), Error);
}

TEST_CASE("training errors") {
  HashedNgramEncoder enc(small_encoder());
  const TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train({}, enc, cfg), Error);

  std::vector<Instance> unknown = corpus(2);
  for (Instance& inst : unknown) inst.labels = {};
  CHECK_THROWS_AS(train(unknown, enc, cfg), Error);
  // Known values only on heads outside the two-label set.
  for (Instance& inst : unknown) inst.labels = {-1, -1, 1, 0};
  TrainConfig two = cfg;
  two.label_set = LabelSet::kTwoLabels;
  CHECK_THROWS_AS(train(unknown, enc, two), Error);

  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.epochs = 0; },
           [](TrainConfig& c) { c.batch_size = 0; },
           [](TrainConfig& c) { c.learning_rate = -1; },
           [](TrainConfig& c) { c.learning_rate = std::nan(""); },
           [](TrainConfig& c) { c.dropout = 1; },
           [](TrainConfig& c) { c.hidden_dim = 0; }}) {
    TrainConfig bad = cfg;
    mutate(bad);
    CHECK_THROWS_AS(train(corpus(2), enc, bad), Error);
  }

  ModelParams poisoned = ModelParams::glorot(enc.spec().feature_dim, cfg.hidden_dim, 1);
  poisoned.b2()[0] = std::numeric_limits<double>::infinity();
  try {
    train(corpus(2), enc, cfg, &poisoned);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("a head missing a class falls back to unit weights") {
  std::vector<Instance> data(3);
  data[0].labels = {1, 0, 1, 0};
  data[1].labels = {0, 0, 0, 0};
  data[2].labels = {0, -1, -1, 0};
  const LabelWeights w = training_weights(data, LabelSet::kFourLabels);
  CHECK(w[0].pos == Rational{3, 2});
  CHECK(w[0].neg == Rational{3, 4});
  CHECK(w[1].pos == Rational{1, 1});
  CHECK(w[1].neg == Rational{1, 1});
  CHECK(w[3].pos == Rational{1, 1});
}

TEST_CASE("the mixture pairs all of gecor with an equal-size canard sample") {
  std::vector<Instance> gecor(3), canard(10);
  for (int i = 0; i < 3; ++i) gecor[i].id = "g" + std::to_string(i);
  for (int i = 0; i < 10; ++i) canard[i].id = "c" + std::to_string(i);

  const auto mix = canard_gecor_mixture(gecor, canard, 17);
  REQUIRE(mix.size() == 6);
  for (int i = 0; i < 3; ++i) CHECK(mix[i].id == gecor[i].id);
  std::set<std::string> sampled;
  for (int i = 3; i < 6; ++i) {
    CHECK(mix[i].id[0] == 'c');
    sampled.insert(mix[i].id);
    if (i > 3) CHECK(std::stoi(mix[i - 1].id.substr(1)) < std::stoi(mix[i].id.substr(1)));
  }
  CHECK(sampled.size() == 3);
  CHECK(canard_gecor_mixture(gecor, canard, 17) == mix);

  // Different seeds eventually pick different samples.
  bool differs = false;
  for (std::uint64_t s = 0; s < 20 && !differs; ++s) {
    differs = canard_gecor_mixture(gecor, canard, s) != mix;
  }
  CHECK(differs);

  const auto all = canard_gecor_mixture(canard, gecor, 1);
  CHECK(all.size() == 13);
}

TEST_CASE("train config JSON round trip") {
  TrainConfig cfg = small_config();
  cfg.label_set = LabelSet::kTwoLabels;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.dropout = 0.25;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(to_json(train_config_from_json(nlohmann::json::object())) == to_json(TrainConfig{}));
  CHECK_THROWS_AS(train_config_from_json({{"optimizer", "rmsprop"}}), Error);
  CHECK_THROWS_AS(train_config_from_json({{"labels", 3}}), Error);
}
