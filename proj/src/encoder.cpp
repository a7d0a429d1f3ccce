#include "ecd/encoder.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <mutex>

#include "ecd/error.hpp"
#include "ecd/rng.hpp"

namespace ecd {
namespace {

constexpr std::string_view kSeparator = "[SEP]";
constexpr char kKeyJoin = '\x1f';

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

EncoderFactory& external_factory() {
  static EncoderFactory factory;
  return factory;
}

}  // namespace

double SparseVector::dot(const SparseVector& other) const {
  double sum = 0;
  std::size_t i = 0, j = 0;
  while (i < index.size() && j < other.index.size()) {
    if (index[i] < other.index[j]) {
      ++i;
    } else if (index[i] > other.index[j]) {
      ++j;
    } else {
      sum += value[i++] * other.value[j++];
    }
  }
  return sum;
}

double SparseVector::norm() const {
  double sum = 0;
  for (double v : value) sum += v * v;
  return std::sqrt(sum);
}

double cosine(const SparseVector& a, const SparseVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0;
  return a.dot(b) / (na * nb);
}

void EncoderSpec::validate() const {
  if (feature_dim == 0 || (feature_dim & (feature_dim - 1)) != 0) {
    throw Error("feature_dim must be a power of two, got " +
                std::to_string(feature_dim));
  }
  if (ngram_orders.empty() || *ngram_orders.begin() < 1) {
    throw Error("ngram_orders must be non-empty and positive");
  }
  if (context_window < 0) throw Error("context_window must be >= 0");
}

std::string_view encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::kHashedNgram ? "hashed_ngram" : "external";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "hashed_ngram") return EncoderKind::kHashedNgram;
  if (name == "external") return EncoderKind::kExternal;
  throw Error("unknown encoder kind '" + std::string(name) + "'");
}

nlohmann::json to_json(const EncoderSpec& spec) {
  return {{"kind", encoder_kind_name(spec.kind)},
          {"feature_dim", spec.feature_dim},
          {"ngram_orders", spec.ngram_orders},
          {"context_window", spec.context_window}};
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& record) {
  EncoderSpec spec;
  if (auto it = record.find("kind"); it != record.end()) {
    spec.kind = parse_encoder_kind(it->get<std::string>());
  }
  spec.feature_dim = record.value("feature_dim", spec.feature_dim);
  spec.ngram_orders = record.value("ngram_orders", spec.ngram_orders);
  spec.context_window = record.value("context_window", spec.context_window);
  spec.validate();
  return spec;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

std::uint64_t feature_hash(std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

HashedNgramEncoder::HashedNgramEncoder(EncoderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind != EncoderKind::kHashedNgram) {
    throw Error("HashedNgramEncoder needs kind hashed_ngram");
  }
}

// Sums values that share an index; drops exact zeros. Output sorted by index.
static SparseVector accumulate(std::vector<std::pair<std::uint32_t, double>>& hits) {
  std::sort(hits.begin(), hits.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector out;
  for (std::size_t i = 0; i < hits.size();) {
    std::size_t j = i;
    double sum = 0;
    while (j < hits.size() && hits[j].first == hits[i].first) sum += hits[j++].second;
    if (sum != 0) {
      out.index.push_back(hits[i].first);
      out.value.push_back(sum);
    }
    i = j;
  }
  return out;
}

SparseVector HashedNgramEncoder::encode(std::span<const Turn> context,
                                        std::string_view question) const {
  const std::size_t window =
      std::min(context.size(), static_cast<std::size_t>(spec_.context_window));
  struct Token {
    std::string text;
    bool in_question;
  };
  std::vector<Token> tokens;
  for (const Turn& turn : context.subspan(context.size() - window)) {
    for (auto& t : tokenize(turn.text)) tokens.push_back({std::move(t), false});
    tokens.push_back({std::string(kSeparator), false});
  }
  for (auto& t : tokenize(question)) tokens.push_back({std::move(t), true});

  // Question-only n-grams and the rest are normalized separately and given
  // equal mass, so a long context cannot drown out the question.
  const std::uint32_t mask = spec_.feature_dim - 1;
  std::array<std::vector<std::pair<std::uint32_t, double>>, 2> hits;
  std::string key;
  for (int n : spec_.ngram_orders) {
    const auto order = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
      bool question_only = true;
      key.clear();
      key.push_back(static_cast<char>('0' + std::min(n, 9)));
      for (std::size_t k = i; k < i + order; ++k) {
        question_only = question_only && tokens[k].in_question;
        key.push_back(kKeyJoin);
        key += tokens[k].text;
      }
      key.insert(key.begin(), question_only ? 'q' : 'c');
      const std::uint64_t h = feature_hash(key);
      hits[question_only ? 0 : 1].emplace_back(static_cast<std::uint32_t>(h) & mask,
                                               (h >> 63) ? -1.0 : 1.0);
    }
  }

  std::array<SparseVector, 2> parts;
  int nonempty = 0;
  for (int s = 0; s < 2; ++s) {
    parts[s] = accumulate(hits[s]);
    if (!parts[s].index.empty()) ++nonempty;
  }
  std::vector<std::pair<std::uint32_t, double>> merged;
  for (const SparseVector& part : parts) {
    const double norm = part.norm();
    if (norm == 0) continue;
    const double scale = 1.0 / (norm * std::sqrt(static_cast<double>(nonempty)));
    for (std::size_t i = 0; i < part.index.size(); ++i) {
      merged.emplace_back(part.index[i], part.value[i] * scale);
    }
  }
  SparseVector out = accumulate(merged);
  const double norm = out.norm();
  if (norm > 0) {
    for (double& v : out.value) v /= norm;
  }
  return out;
}

void register_external_encoder(EncoderFactory factory) {
  std::lock_guard lock(registry_mutex());
  external_factory() = std::move(factory);
}

std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec) {
  spec.validate();
  if (spec.kind == EncoderKind::kHashedNgram) {
    return std::make_unique<HashedNgramEncoder>(spec);
  }
  std::lock_guard lock(registry_mutex());
  if (!external_factory()) {
    throw Error("no external encoder registered");
  }
  return external_factory()(spec);
}

}  // namespace ecd
