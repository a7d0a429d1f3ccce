#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "ecd/encoder.hpp"
#include "ecd/error.hpp"
#include "ecd/rng.hpp"

using namespace ecd;

namespace {

std::vector<Turn> turns(std::initializer_list<const char*> texts) {
  std::vector<Turn> out;
  int i = 1;
  for (const char* t : texts) {
    out.push_back({i % 2 ? Speaker::kQuestion : Speaker::kAnswer, t, i});
    ++i;
  }
  return out;
}

std::string random_text(Rng& rng, const std::vector<std::string>& vocab, int words) {
  std::string out;
  for (int i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[rng.below(vocab.size())];
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Who founded it?") == std::vector<std::string>{"who", "founded", "it", "?"});
  CHECK(tokenize("  a,b  ") == std::vector<std::string>{"a", ",", "b"});
  CHECK(tokenize("Ünï CODE") == std::vector<std::string>{"Ünï", "code"});
  CHECK(tokenize("").empty());
}

TEST_CASE("feature hash is FNV-1a followed by the splitmix finalizer") {
  CHECK(feature_hash("") == mix64(0xcbf29ce484222325ULL));
  CHECK(feature_hash("a") == mix64(0xaf63dc4c8601ec8cULL));
  CHECK(feature_hash("foobar") == mix64(0x85944171f73967e8ULL));
}

TEST_CASE("an encoding has cosine 1 with itself and unit norm") {
  HashedNgramEncoder enc({});
  const auto ctx = turns({"who founded zorvia", "kelmont"});
  const SparseVector v = enc.encode(ctx, "when was it founded?");
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v.index[i - 1] < v.index[i]);
  for (double x : v.value) CHECK(x != 0.0);
  CHECK(enc.encode(ctx, "when was it founded?") == v);
}

TEST_CASE("disjoint vocabularies are orthogonal in expectation") {
  std::vector<std::string> left, right;
  for (int i = 0; i < 200; ++i) {
    left.push_back("l" + std::to_string(i));
    right.push_back("r" + std::to_string(i));
  }
  HashedNgramEncoder enc({});
  Rng rng(7);
  double sum = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const auto ca = turns({random_text(rng, left, 10).c_str()});
    const auto cb = turns({random_text(rng, right, 10).c_str()});
    const SparseVector a = enc.encode(ca, random_text(rng, left, 6));
    const SparseVector b = enc.encode(cb, random_text(rng, right, 6));
    sum += std::abs(cosine(a, b));
  }
  CHECK(sum / 100 < 0.05);
}

TEST_CASE("question words and context words hash to different features") {
  HashedNgramEncoder enc({});
  const SparseVector q = enc.encode({}, "zorvia");
  const auto ctx = turns({"zorvia"});
  const SparseVector both = enc.encode(ctx, "zorvia");
  // The question feature survives alongside the context one.
  CHECK(both.size() > q.size());
  CHECK(q.size() == 1);
  CHECK(cosine(q, both) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("a long context does not drown out the question") {
  HashedNgramEncoder enc({});
  std::string filler;
  for (int i = 0; i < 60; ++i) filler += "w" + std::to_string(i) + " ";
  const auto ctx = turns({filler.c_str()});
  const SparseVector with = enc.encode(ctx, "how old is he");
  const SparseVector alone = enc.encode({}, "how old is he");
  CHECK(cosine(with, alone) > 0.6);
}

TEST_CASE("only the last context_window turns are used") {
  EncoderSpec spec;
  spec.context_window = 2;
  HashedNgramEncoder enc(spec);
  const auto long_ctx = turns({"alpha beta", "gamma", "delta", "epsilon"});
  const auto short_ctx = turns({"delta", "epsilon"});
  CHECK(enc.encode(long_ctx, "q") == enc.encode(short_ctx, "q"));

  spec.context_window = 0;
  HashedNgramEncoder none(spec);
  CHECK(none.encode(long_ctx, "q") == none.encode({}, "q"));
}

TEST_CASE("empty input encodes to the zero vector") {
  HashedNgramEncoder enc({});
  const SparseVector v = enc.encode({}, "");
  CHECK(v.size() == 0);
  CHECK(cosine(v, v) == 0.0);
}

TEST_CASE("encoder settings validation and JSON round trip") {
  EncoderSpec bad;
  bad.feature_dim = 1000;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.ngram_orders = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.ngram_orders = {0, 1};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.context_window = -1;
  CHECK_THROWS_AS(bad.validate(), Error);

  EncoderSpec spec;
  spec.feature_dim = 1u << 12;
  spec.ngram_orders = {1, 2, 3};
  spec.context_window = 3;
  CHECK(encoder_spec_from_json(to_json(spec)) == spec);
  CHECK(encoder_spec_from_json(nlohmann::json::object()) == EncoderSpec{});
}

TEST_CASE("external encoders must be registered") {
  EncoderSpec spec;
  spec.kind = EncoderKind::kExternal;
  CHECK_THROWS_AS(make_encoder(spec), Error);
  CHECK(make_encoder({})->spec() == EncoderSpec{});
}
