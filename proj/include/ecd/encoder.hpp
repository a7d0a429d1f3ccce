#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecd/dialogue.hpp"
#include "json.hpp"

namespace ecd {

// Sorted indices, no duplicates, no zero values.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t size() const { return index.size(); }
  double dot(const SparseVector& other) const;
  double norm() const;
  bool operator==(const SparseVector&) const = default;
};

double cosine(const SparseVector& a, const SparseVector& b);

enum class EncoderKind { kHashedNgram, kExternal };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kHashedNgram;
  std::uint32_t feature_dim = 1u << 18;
  std::set<int> ngram_orders = {1, 2};
  int context_window = 8;  // most recent context turns kept

  // Throws Error on a non power-of-two dimension, empty or non-positive
  // n-gram orders, or a negative window.
  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

std::string_view encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

nlohmann::json to_json(const EncoderSpec& spec);
// Missing keys keep their defaults. Validates the result.
EncoderSpec encoder_spec_from_json(const nlohmann::json& record);

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const EncoderSpec& spec() const = 0;
  virtual SparseVector encode(std::span<const Turn> context,
                              std::string_view question) const = 0;
};

// Lowercases ASCII, splits on whitespace, and emits each ASCII punctuation
// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

// FNV-1a 64 followed by the SplitMix64 finalizer. Bucket = low bits, sign =
// bit 63.
std::uint64_t feature_hash(std::string_view key);

// Signed feature hashing over n-grams of
//   turn_1 [SEP] turn_2 [SEP] ... turn_k [SEP] question
// where only the last `context_window` turns are kept. Each n-gram key is
// tagged with its segment: question-only n-grams get a different key than
// the same words in the context. The two segments are normalized separately
// and weighted equally; the result is L2-normalized.
class HashedNgramEncoder final : public Encoder {
 public:
  explicit HashedNgramEncoder(EncoderSpec spec);

  const EncoderSpec& spec() const override { return spec_; }
  SparseVector encode(std::span<const Turn> context,
                      std::string_view question) const override;

 private:
  EncoderSpec spec_;
};

using EncoderFactory =
    std::function<std::unique_ptr<Encoder>(const EncoderSpec&)>;

// Attaches the implementation used for EncoderKind::kExternal.
void register_external_encoder(EncoderFactory factory);

// Throws Error for kExternal when nothing is registered.
std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec);

}  // namespace ecd
