#include "ecd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ecd/error.hpp"
#include "json.hpp"

namespace ecd {

static_assert(std::endian::native == std::endian::little,
              "model files are written in host byte order");

std::string serialize_params(const ModelParams& params);
ModelParams deserialize_params(std::string_view& bytes);

namespace {

constexpr char kMagic[8] = {'E', 'C', 'D', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

template <typename T>
void put(std::string& out, const T& value) {
  const char* p = reinterpret_cast<const char*>(&value);
  out.append(p, sizeof(T));
}

void put_doubles(std::string& out, std::span<const double> values) {
  const char* p = reinterpret_cast<const char*>(values.data());
  out.append(p, values.size() * sizeof(double));
}

template <typename T>
T take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw Error("model file truncated");
  T value;
  std::memcpy(&value, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return value;
}

void take_doubles(std::string_view& in, std::span<double> out) {
  const std::size_t bytes = out.size() * sizeof(double);
  if (in.size() < bytes) throw Error("model file truncated");
  std::memcpy(out.data(), in.data(), bytes);
  in.remove_prefix(bytes);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(std::string("non-finite parameter in ") + what);
}

}  // namespace

bool head_active(LabelSet set, Label label) {
  return set == LabelSet::kFourLabels || label == Label::kCoref ||
         label == Label::kEllipsis;
}

int label_count(LabelSet set) { return set == LabelSet::kTwoLabels ? 2 : 4; }

LabelSet label_set_from_count(int count) {
  if (count == 2) return LabelSet::kTwoLabels;
  if (count == 4) return LabelSet::kFourLabels;
  throw Error("label count must be 2 or 4, got " + std::to_string(count));
}

ModelParams::ModelParams(std::uint32_t feature_dim, std::uint32_t hidden_dim,
                         std::uint64_t seed, InitScheme init)
    : feature_dim_(feature_dim),
      hidden_dim_(hidden_dim),
      seed_(seed),
      init_(init),
      slot_of_row_(feature_dim, -1),
      b1_(hidden_dim, 0.0),
      w2_(static_cast<std::size_t>(hidden_dim) * kNumHeads, 0.0) {
  if (feature_dim == 0 || hidden_dim == 0) {
    throw Error("feature_dim and hidden_dim must be positive");
  }
}

ModelParams ModelParams::glorot(std::uint32_t feature_dim,
                                std::uint32_t hidden_dim, std::uint64_t seed) {
  ModelParams p(feature_dim, hidden_dim, seed, InitScheme::kGlorotUniform);
  const double bound = std::sqrt(6.0 / (hidden_dim + static_cast<double>(kNumHeads)));
  Rng rng(mix64(seed ^ 0x6c8e9cf570932bd5ULL));
  for (double& w : p.w2_) w = bound * (2.0 * rng.uniform() - 1.0);
  return p;
}

ModelParams ModelParams::zeros(std::uint32_t feature_dim, std::uint32_t hidden_dim) {
  return ModelParams(feature_dim, hidden_dim, 0, InitScheme::kZero);
}

double ModelParams::w1_init_bound() const {
  if (init_ == InitScheme::kZero) return 0.0;
  return std::sqrt(6.0 / (static_cast<double>(feature_dim_) + hidden_dim_));
}

double ModelParams::w1_initial(std::uint32_t row, std::uint32_t col) const {
  if (init_ == InitScheme::kZero) return 0.0;
  const std::uint64_t row_key =
      mix64(seed_ ^ 0xa0761d6478bd642fULL) ^ (row * 0x9e3779b97f4a7c15ULL);
  const std::uint64_t bits = mix64(row_key + (col + 1) * 0xd1b54a32d192ed03ULL);
  return w1_init_bound() * (2.0 * to_unit(bits) - 1.0);
}

double ModelParams::w1(std::uint32_t row, std::uint32_t col) const {
  const std::int32_t slot = slot_of_row_[row];
  if (slot < 0) return w1_initial(row, col);
  return rows_[static_cast<std::size_t>(slot) * hidden_dim_ + col];
}

void ModelParams::read_w1_row(std::uint32_t row, std::span<double> out) const {
  const std::int32_t slot = slot_of_row_[row];
  if (slot >= 0) {
    const double* src = rows_.data() + static_cast<std::size_t>(slot) * hidden_dim_;
    std::copy(src, src + hidden_dim_, out.begin());
    return;
  }
  for (std::uint32_t j = 0; j < hidden_dim_; ++j) out[j] = w1_initial(row, j);
}

std::span<double> ModelParams::w1_row(std::uint32_t row) {
  std::int32_t slot = slot_of_row_[row];
  if (slot < 0) {
    slot = static_cast<std::int32_t>(row_of_slot_.size());
    slot_of_row_[row] = slot;
    row_of_slot_.push_back(row);
    rows_.resize(rows_.size() + hidden_dim_);
    double* dst = rows_.data() + static_cast<std::size_t>(slot) * hidden_dim_;
    for (std::uint32_t j = 0; j < hidden_dim_; ++j) dst[j] = w1_initial(row, j);
  }
  return {rows_.data() + static_cast<std::size_t>(slot) * hidden_dim_, hidden_dim_};
}

void ModelParams::check_finite() const {
  for (double v : rows_) require_finite(v, "W1");
  for (double v : b1_) require_finite(v, "b1");
  for (double v : w2_) require_finite(v, "W2");
  for (double v : b2_) require_finite(v, "b2");
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (feature_dim_ != other.feature_dim_ || hidden_dim_ != other.hidden_dim_ ||
      seed_ != other.seed_ || init_ != other.init_ || b1_ != other.b1_ ||
      w2_ != other.w2_ || b2_ != other.b2_) {
    return false;
  }
  std::vector<double> a(hidden_dim_), b(hidden_dim_);
  auto rows_equal = [&](std::uint32_t row) {
    read_w1_row(row, a);
    other.read_w1_row(row, b);
    return a == b;
  };
  for (std::uint32_t row : row_of_slot_) {
    if (!rows_equal(row)) return false;
  }
  for (std::uint32_t row : other.row_of_slot_) {
    if (!rows_equal(row)) return false;
  }
  return true;
}

DropoutMask DropoutMask::sample(std::size_t hidden_dim, double p, Rng& rng) {
  DropoutMask mask;
  mask.scale.assign(hidden_dim, 1.0);
  if (p <= 0) return mask;
  const double keep = 1.0 / (1.0 - p);
  for (double& s : mask.scale) s = rng.uniform() < p ? 0.0 : keep;
  return mask;
}

Prediction forward(const ModelParams& params, const SparseVector& x,
                   const DropoutMask* mask, Activations& acts) {
  const std::uint32_t hidden = params.hidden_dim();
  if (mask && mask->scale.size() != hidden) {
    throw Error("dropout mask size does not match hidden_dim");
  }
  for (double v : params.b1()) require_finite(v, "b1");
  for (double v : params.w2()) require_finite(v, "W2");
  for (double v : params.b2()) require_finite(v, "b2");

  acts.pre_hidden = params.b1();
  std::vector<double> row(hidden);
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x.index[k] >= params.feature_dim()) {
      throw Error("feature index " + std::to_string(x.index[k]) +
                  " out of range for feature_dim " +
                  std::to_string(params.feature_dim()));
    }
    params.read_w1_row(x.index[k], row);
    const double xv = x.value[k];
    for (std::uint32_t j = 0; j < hidden; ++j) {
      require_finite(row[j], "W1");
      acts.pre_hidden[j] += xv * row[j];
    }
  }
  acts.hidden.resize(hidden);
  for (std::uint32_t j = 0; j < hidden; ++j) {
    double h = acts.pre_hidden[j] > 0 ? acts.pre_hidden[j] : 0.0;
    if (mask) h *= mask->scale[j];
    acts.hidden[j] = h;
  }
  const auto& w2 = params.w2();
  Prediction pred;
  for (std::size_t l = 0; l < kNumHeads; ++l) {
    double z = params.b2()[l];
    for (std::uint32_t j = 0; j < hidden; ++j) z += acts.hidden[j] * w2[j * kNumHeads + l];
    acts.logits[l] = z;
    acts.output[l] = sigmoid(z);
    pred.values[l] = acts.output[l];
  }
  return pred;
}

Prediction forward(const ModelParams& params, const SparseVector& x,
                   const DropoutMask* mask) {
  Activations acts;
  return forward(params, x, mask, acts);
}

Rational Rational::make(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error("zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Rational Rational::operator*(std::int64_t k) const { return make(num * k, den); }

ClassWeights ClassWeights::balanced(std::int64_t n_pos, std::int64_t n_neg) {
  if (n_pos <= 0 || n_neg <= 0) throw Error("both classes need a positive count");
  const std::int64_t total = n_pos + n_neg;
  return {Rational::make(total, 2 * n_pos), Rational::make(total, 2 * n_neg)};
}

ClassWeights compute_class_weights(std::span<const Instance> train, Label label) {
  std::int64_t n_pos = 0, n_neg = 0;
  for (const Instance& inst : train) {
    if (inst.labels[label] == 1) ++n_pos;
    if (inst.labels[label] == 0) ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw Error("label '" + std::string(label_name(label)) + "' has no known " +
                (n_pos == 0 ? "positive" : "negative") + " instance");
  }
  return ClassWeights::balanced(n_pos, n_neg);
}

double loss(const Prediction& pred, const LabelVector& gold,
            const LabelWeights& weights, LabelSet set) {
  double total = 0;
  for (Label l : kAllLabels) {
    if (!head_active(set, l) || !gold.known(l)) continue;
    const auto& w = weights[static_cast<int>(l)];
    const double y = gold[l];
    const double diff = pred[l] - y;
    total += (gold[l] == 1 ? w.w_pos() : w.w_neg()) * diff * diff;
  }
  return total;
}

Gradients::Gradients(std::uint32_t hidden)
    : hidden_dim(hidden),
      b1(hidden, 0.0),
      w2(static_cast<std::size_t>(hidden) * kNumHeads, 0.0) {}

std::vector<double>& Gradients::w1_row(std::uint32_t row) {
  auto [it, inserted] = w1_rows.try_emplace(row);
  if (inserted) it->second.assign(hidden_dim, 0.0);
  return it->second;
}

double Gradients::w1(std::uint32_t row, std::uint32_t col) const {
  auto it = w1_rows.find(row);
  return it == w1_rows.end() ? 0.0 : it->second[col];
}

namespace {

double accumulate(const ModelParams& params, const Example& ex,
                  const DropoutMask* mask, const LabelWeights& weights,
                  LabelSet set, double scale, Gradients& grad,
                  Activations& acts) {
  const Prediction pred = forward(params, ex.features, mask, acts);
  std::array<double, kNumHeads> dz2{};
  double total = 0;
  bool any = false;
  for (Label l : kAllLabels) {
    const int li = static_cast<int>(l);
    if (!head_active(set, l) || !ex.gold.known(l)) continue;
    const double w = ex.gold[l] == 1 ? weights[li].w_pos() : weights[li].w_neg();
    const double p = pred[l];
    const double diff = p - ex.gold[l];
    total += w * diff * diff;
    dz2[li] = 2.0 * w * diff * p * (1.0 - p);
    any = true;
  }
  if (!any) return 0.0;

  const std::uint32_t hidden = params.hidden_dim();
  const auto& w2 = params.w2();
  std::vector<double> dz1(hidden);
  for (std::size_t l = 0; l < kNumHeads; ++l) grad.b2[l] += scale * dz2[l];
  for (std::uint32_t j = 0; j < hidden; ++j) {
    double dh = 0;
    for (std::size_t l = 0; l < kNumHeads; ++l) {
      grad.w2[j * kNumHeads + l] += scale * acts.hidden[j] * dz2[l];
      dh += w2[j * kNumHeads + l] * dz2[l];
    }
    double d = acts.pre_hidden[j] > 0 ? dh : 0.0;
    if (mask) d *= mask->scale[j];
    dz1[j] = d;
    grad.b1[j] += scale * d;
  }
  for (std::size_t k = 0; k < ex.features.size(); ++k) {
    std::vector<double>& row = grad.w1_row(ex.features.index[k]);
    const double xv = scale * ex.features.value[k];
    for (std::uint32_t j = 0; j < hidden; ++j) row[j] += xv * dz1[j];
  }
  return total;
}

void check_masks(std::span<const Example> batch, std::span<const DropoutMask> masks) {
  if (!masks.empty() && masks.size() != batch.size()) {
    throw Error("need one dropout mask per example");
  }
}

}  // namespace

double batch_loss(const ModelParams& params, std::span<const Example> batch,
                  std::span<const DropoutMask> masks,
                  const LabelWeights& weights, LabelSet set) {
  check_masks(batch, masks);
  if (batch.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Prediction p =
        forward(params, batch[i].features, masks.empty() ? nullptr : &masks[i]);
    total += loss(p, batch[i].gold, weights, set);
  }
  return total / static_cast<double>(batch.size());
}

Gradients batch_gradient(const ModelParams& params,
                         std::span<const Example> batch,
                         std::span<const DropoutMask> masks,
                         const LabelWeights& weights, LabelSet set,
                         double* loss_out) {
  check_masks(batch, masks);
  Gradients grad(params.hidden_dim());
  double total = 0;
  if (!batch.empty()) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    Activations acts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      total += accumulate(params, batch[i], masks.empty() ? nullptr : &masks[i],
                          weights, set, scale, grad, acts);
    }
    total *= scale;
  }
  if (loss_out) *loss_out = total;
  return grad;
}

std::string serialize_params(const ModelParams& p) {
  std::string out;
  put(out, p.feature_dim_);
  put(out, p.hidden_dim_);
  put(out, p.seed_);
  put(out, static_cast<std::uint8_t>(p.init_));
  std::vector<std::uint32_t> rows = p.row_of_slot_;
  std::sort(rows.begin(), rows.end());
  put(out, static_cast<std::uint64_t>(rows.size()));
  put_doubles(out, p.b1_);
  put_doubles(out, p.w2_);
  put_doubles(out, p.b2_);
  for (std::uint32_t row : rows) {
    put(out, row);
    const double* src =
        p.rows_.data() + static_cast<std::size_t>(p.slot_of_row_[row]) * p.hidden_dim_;
    put_doubles(out, {src, p.hidden_dim_});
  }
  return out;
}

ModelParams deserialize_params(std::string_view& in) {
  const auto feature_dim = take<std::uint32_t>(in);
  const auto hidden_dim = take<std::uint32_t>(in);
  const auto seed = take<std::uint64_t>(in);
  const auto init = take<std::uint8_t>(in);
  if (init > static_cast<std::uint8_t>(InitScheme::kZero)) {
    throw Error("unknown init scheme in model file");
  }
  ModelParams p(feature_dim, hidden_dim, seed, static_cast<InitScheme>(init));
  const auto n_rows = take<std::uint64_t>(in);
  take_doubles(in, p.b1_);
  take_doubles(in, p.w2_);
  take_doubles(in, p.b2_);
  for (std::uint64_t k = 0; k < n_rows; ++k) {
    const auto row = take<std::uint32_t>(in);
    if (row >= feature_dim || p.row_materialized(row)) {
      throw Error("bad W1 row index in model file");
    }
    take_doubles(in, p.w1_row(row));
  }
  return p;
}

std::string serialize_model(const Model& model) {
  nlohmann::json header = {
      {"format", "ecd-model"},
      {"version", kFormatVersion},
      {"encoder", to_json(model.encoder)},
      {"labels", label_count(model.label_set)},
      {"feature_dim", model.params.feature_dim()},
      {"hidden_dim", model.params.hidden_dim()},
      {"seed", model.params.seed()},
      {"init", model.params.init() == InitScheme::kZero ? "zero" : "glorot_uniform"},
      {"w1_rows", model.params.materialized_rows().size()}};
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put(out, kFormatVersion);
  put(out, static_cast<std::uint64_t>(header_text.size()));
  out += header_text;
  out += serialize_params(model.params);
  return out;
}

Model deserialize_model(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("not a model file");
  }
  bytes.remove_prefix(sizeof kMagic);
  const auto version = take<std::uint32_t>(bytes);
  if (version != kFormatVersion) {
    throw Error("unsupported model format version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes);
  if (bytes.size() < header_len) throw Error("model file truncated");
  const auto header = nlohmann::json::parse(bytes.substr(0, header_len));
  bytes.remove_prefix(header_len);

  Model model;
  model.encoder = encoder_spec_from_json(header.at("encoder"));
  model.label_set = label_set_from_count(header.at("labels").get<int>());
  model.params = deserialize_params(bytes);
  if (!bytes.empty()) throw Error("trailing bytes in model file");
  if (model.params.feature_dim() != model.encoder.feature_dim) {
    throw Error("model feature_dim does not match its encoder");
  }
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

Prediction predict(const ModelParams& params, const Encoder& encoder,
                   const Instance& instance) {
  return forward(params, encoder.encode(instance.context, instance.question));
}

LabelVector binarize(const Prediction& pred, double threshold) {
  LabelVector out;
  for (Label l : kAllLabels) out[l] = pred[l] >= threshold ? 1 : 0;
  return out;
}

}  // namespace ecd
