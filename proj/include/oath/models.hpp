#pragma once

// Score-based classifiers (logistic regression, small ReLU networks), trained
// in the clear and evaluated either in floating point, in native fixed point,
// or over authenticated values. The fixed-point and circuit paths agree
// bit-for-bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oath/circuit.hpp"
#include "oath/dataset.hpp"
#include "oath/mimc.hpp"

namespace oath {

class FixedPointOverflow : public std::range_error {
 public:
  using std::range_error::range_error;
};

struct FixedPointConfig {
  int fractional_bits = 16;
  int integer_bits = 8;

  // Signed width of every weight, activation, score and threshold.
  int total_bits() const { return integer_bits + fractional_bits; }
  // Width used for score/threshold comparisons; leaves room for the
  // difference of two logits and the +/-infinity threshold sentinels.
  int compare_bits() const { return total_bits() + 2; }
  std::int64_t one() const { return std::int64_t{1} << fractional_bits; }
  std::int64_t max_abs() const { return std::int64_t{1} << (total_bits() - 1); }
  std::int64_t pos_inf() const { return std::int64_t{1} << total_bits(); }
  std::int64_t neg_inf() const { return -pos_inf(); }

  void validate() const {
    if (fractional_bits < 1 || integer_bits < 1 || total_bits() > 30)
      throw std::invalid_argument("fixed point: need 1 <= bits and integer+fractional <= 30");
  }

  std::int64_t quantize(double v) const {
    double scaled = std::nearbyint(v * static_cast<double>(one()));
    if (!(std::fabs(scaled) < static_cast<double>(max_abs())))
      throw FixedPointOverflow("fixed point: value " + std::to_string(v) + " out of range");
    return static_cast<std::int64_t>(scaled);
  }
  double to_real(std::int64_t q) const { return static_cast<double>(q) / static_cast<double>(one()); }

  bool operator==(const FixedPointConfig&) const = default;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
  bool operator==(const DenseLayer&) const = default;
};

enum class ModelKind : std::uint8_t { kLogReg = 1, kFfnn = 2 };

/// Real-valued scorer; higher score means the positive outcome is more likely.
/// Hidden layers use ReLU. A final layer of width 1 gives the score directly,
/// width 2 gives logit[1] - logit[0]. For logistic regression the score is the
/// pre-sigmoid margin.
struct ScoreModel {
  ModelKind kind = ModelKind::kLogReg;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s{input_dim()};
    for (const auto& l : layers) s.push_back(l.out);
    return s;
  }

  static ScoreModel logreg(std::vector<double> weights, double bias) {
    ScoreModel m;
    m.kind = ModelKind::kLogReg;
    DenseLayer l;
    l.in = weights.size();
    l.out = 1;
    l.weights = std::move(weights);
    l.bias = {bias};
    m.layers.push_back(std::move(l));
    return m;
  }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
        throw std::invalid_argument("model layer has inconsistent sizes");
      if (i > 0 && l.in != layers[i - 1].out) throw std::invalid_argument("model layers do not chain");
    }
    if (layers.back().out != 1 && layers.back().out != 2)
      throw std::invalid_argument("model output width must be 1 or 2");
    if (kind == ModelKind::kLogReg && layers.size() != 1) throw std::invalid_argument("logreg has one layer");
  }

  bool operator==(const ScoreModel&) const = default;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double score(const ScoreModel& m, std::span<const double> q) {
  if (q.size() != m.input_dim()) throw std::invalid_argument("score: feature dimension mismatch");
  std::vector<double> act(q.begin(), q.end());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    std::vector<double> next(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += l.w(o, i) * act[i];
      next[o] = (li + 1 < m.layers.size()) ? std::max(0.0, acc) : acc;
    }
    act = std::move(next);
  }
  return act.size() == 2 ? act[1] - act[0] : act[0];
}

// ---------------------------------------------------------------------------
// Fixed point

struct QuantizedLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<std::int64_t> weights;
  std::vector<std::int64_t> bias;
};

struct QuantizedModel {
  FixedPointConfig fpc;
  ModelKind kind = ModelKind::kLogReg;
  std::vector<QuantizedLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
};

inline QuantizedModel quantize(const ScoreModel& m, const FixedPointConfig& fpc) {
  m.validate();
  fpc.validate();
  QuantizedModel q;
  q.fpc = fpc;
  q.kind = m.kind;
  for (const auto& l : m.layers) {
    QuantizedLayer ql{l.in, l.out, {}, {}};
    for (double w : l.weights) ql.weights.push_back(fpc.quantize(w));
    for (double b : l.bias) ql.bias.push_back(fpc.quantize(b));
    q.layers.push_back(std::move(ql));
  }
  return q;
}

inline std::vector<std::int64_t> quantize_input(std::span<const double> features, const FixedPointConfig& fpc) {
  std::vector<std::int64_t> out;
  out.reserve(features.size());
  for (double f : features) out.push_back(fpc.quantize(f));
  return out;
}

namespace detail {

inline std::int64_t checked_activation(std::int64_t v, const FixedPointConfig& fpc) {
  if (v < -fpc.max_abs() || v >= fpc.max_abs()) throw FixedPointOverflow("fixed point: activation out of range");
  return v;
}

}  // namespace detail

/// Native fixed-point evaluation: each neuron is floor(sum(w*x) / 2^f) + b,
/// range-checked to total_bits signed, with ReLU on hidden layers.
inline std::int64_t quantized_score(const QuantizedModel& m, std::span<const std::int64_t> x) {
  if (x.size() != m.input_dim()) throw std::invalid_argument("quantized_score: feature dimension mismatch");
  const int f = m.fpc.fractional_bits;
  std::vector<std::int64_t> act(x.begin(), x.end());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    std::vector<std::int64_t> next(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      std::int64_t acc = 0;
      for (std::size_t i = 0; i < l.in; ++i) acc += l.weights[o * l.in + i] * act[i];
      std::int64_t t = detail::checked_activation((acc >> f) + l.bias[o], m.fpc);
      next[o] = (li + 1 < m.layers.size()) ? std::max<std::int64_t>(0, t) : t;
    }
    act = std::move(next);
  }
  return act.size() == 2 ? act[1] - act[0] : act[0];
}

inline std::int64_t quantized_score(const ScoreModel& m, std::span<const double> q, const FixedPointConfig& fpc) {
  return quantized_score(quantize(m, fpc), quantize_input(q, fpc));
}

/// Model plus per-group decision thresholds on the fixed-point score.
/// predict = 1 iff score >= threshold[group]; ties are positive.
struct ThresholdedModel {
  ScoreModel model;
  FixedPointConfig fpc;
  std::array<std::int64_t, 2> thresholds{0, 0};

  ThresholdedModel() = default;
  ThresholdedModel(ScoreModel m, FixedPointConfig f, std::array<std::int64_t, 2> t)
      : model(std::move(m)), fpc(f), thresholds(t), q_(quantize(model, fpc)) {
    for (auto th : thresholds)
      if (th < fpc.neg_inf() || th > fpc.pos_inf()) throw std::invalid_argument("threshold out of range");
  }

  const QuantizedModel& quantized() const { return q_; }
  std::int64_t threshold(Group g) const { return thresholds[group_code(g)]; }

  std::int64_t score_q(std::span<const std::int64_t> xq) const { return quantized_score(q_, xq); }
  bool predict_q(std::span<const std::int64_t> xq, Group g) const { return score_q(xq) >= threshold(g); }
  bool predict(std::span<const double> features, Group g) const {
    return predict_q(quantize_input(features, fpc), g);
  }

 private:
  QuantizedModel q_;
};

inline std::vector<int> predict_all(const ThresholdedModel& m, const LabeledDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(m.predict(r.features, r.group) ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 200;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
};

namespace detail {

inline void check_trainable(const LabeledDataset& ds) {
  ds.validate();
}

inline double clamp_weight(double w) { return std::clamp(w, -100.0, 100.0); }

}  // namespace detail

inline ScoreModel train_logreg(const LabeledDataset& ds, const TrainConfig& cfg) {
  detail::check_trainable(ds);
  const std::size_t d = ds.dim();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  Prg prg(seed_from_u64(cfg.seed), 0x7a1);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    prg.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<double> gw(d, 0.0);
      double gb = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = ds.records[order[k]];
        double z = b;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * r.features[j];
        double err = sigmoid(z) - r.label;
        for (std::size_t j = 0; j < d; ++j) gw[j] += err * r.features[j];
        gb += err;
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t j = 0; j < d; ++j) w[j] = detail::clamp_weight(w[j] - scale * gw[j] - cfg.learning_rate * cfg.l2 * w[j]);
      b = detail::clamp_weight(b - scale * gb);
    }
  }
  return ScoreModel::logreg(std::move(w), b);
}

/// ReLU network with a two-logit softmax head, e.g. hidden = {8} gives the
/// (8, 2) architecture.
inline ScoreModel train_ffnn(const LabeledDataset& ds, const std::vector<std::size_t>& hidden, const TrainConfig& cfg) {
  detail::check_trainable(ds);
  Prg prg(seed_from_u64(cfg.seed), 0xff0);
  auto gauss = [&prg] {
    double u1 = std::max(prg.unit(), 1e-300), u2 = prg.unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  ScoreModel m;
  m.kind = ModelKind::kFfnn;
  std::size_t prev = ds.dim();
  std::vector<std::size_t> widths = hidden;
  widths.push_back(2);
  for (std::size_t w : widths) {
    DenseLayer l{prev, w, std::vector<double>(w * prev), std::vector<double>(w, 0.0)};
    const double sd = std::sqrt(2.0 / static_cast<double>(prev));
    for (auto& x : l.weights) x = sd * gauss();
    m.layers.push_back(std::move(l));
    prev = w;
  }

  const std::size_t L = m.layers.size();
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    prg.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<std::vector<double>> gw(L), gb(L);
      for (std::size_t li = 0; li < L; ++li) {
        gw[li].assign(m.layers[li].weights.size(), 0.0);
        gb[li].assign(m.layers[li].out, 0.0);
      }
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = ds.records[order[k]];
        std::vector<std::vector<double>> acts{r.features};
        for (std::size_t li = 0; li < L; ++li) {
          const auto& l = m.layers[li];
          std::vector<double> z(l.out);
          for (std::size_t o = 0; o < l.out; ++o) {
            double acc = l.bias[o];
            for (std::size_t i = 0; i < l.in; ++i) acc += l.w(o, i) * acts.back()[i];
            z[o] = (li + 1 < L) ? std::max(0.0, acc) : acc;
          }
          acts.push_back(std::move(z));
        }
        // softmax cross-entropy on the two logits
        const auto& logits = acts.back();
        double mx = std::max(logits[0], logits[1]);
        double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
        std::vector<double> delta{e0 / (e0 + e1) - (r.label == 0), e1 / (e0 + e1) - (r.label == 1)};
        for (std::size_t li = L; li-- > 0;) {
          const auto& l = m.layers[li];
          const auto& input = acts[li];
          std::vector<double> back(l.in, 0.0);
          for (std::size_t o = 0; o < l.out; ++o) {
            gb[li][o] += delta[o];
            for (std::size_t i = 0; i < l.in; ++i) {
              gw[li][o * l.in + i] += delta[o] * input[i];
              back[i] += delta[o] * l.w(o, i);
            }
          }
          if (li > 0)
            for (std::size_t i = 0; i < l.in; ++i) back[i] = input[i] > 0 ? back[i] : 0.0;
          delta = std::move(back);
        }
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t li = 0; li < L; ++li) {
        auto& l = m.layers[li];
        for (std::size_t j = 0; j < l.weights.size(); ++j)
          l.weights[j] = detail::clamp_weight(l.weights[j] - scale * gw[li][j] - cfg.learning_rate * cfg.l2 * l.weights[j]);
        for (std::size_t o = 0; o < l.out; ++o) l.bias[o] = detail::clamp_weight(l.bias[o] - scale * gb[li][o]);
      }
    }
  }
  return m;
}

inline double accuracy(const ScoreModel& m, const LabeledDataset& ds, double margin_threshold = 0.0) {
  std::size_t ok = 0;
  for (const auto& r : ds.records) ok += ((score(m, r.features) >= margin_threshold) == (r.label == 1));
  return ds.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Canonical encodings

inline constexpr char kModelMagic[8] = {'O', 'A', 'T', 'H', 'M', 'D', 'L', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;
// "OATHMDL1" packed little-endian into 61 bits (top byte dropped).
inline const Fp kModelTag = Fp(0x314c444d48544fULL);

/// Field-element encoding of a thresholded model: a public header (tag,
/// kind, fixed-point config, shape) followed by the secret parameters
/// (per layer weights then biases, then the two thresholds). The model digest
/// is the algebraic hash of this sequence.
struct ModelEncoding {
  std::vector<Fp> header;
  std::vector<Fp> params;

  std::vector<Fp> all() const {
    std::vector<Fp> v = header;
    v.insert(v.end(), params.begin(), params.end());
    return v;
  }
};

inline ModelEncoding encode_model(const QuantizedModel& q, std::array<std::int64_t, 2> thresholds) {
  ModelEncoding e;
  e.header = {kModelTag, Fp(static_cast<std::uint64_t>(q.kind)), Fp(static_cast<std::uint64_t>(q.fpc.fractional_bits)),
              Fp(static_cast<std::uint64_t>(q.fpc.integer_bits)), Fp(q.layers.size())};
  for (const auto& l : q.layers) {
    e.header.push_back(Fp(l.in));
    e.header.push_back(Fp(l.out));
  }
  for (const auto& l : q.layers) {
    for (auto w : l.weights) e.params.push_back(Fp::from_signed(w));
    for (auto b : l.bias) e.params.push_back(Fp::from_signed(b));
  }
  e.params.push_back(Fp::from_signed(thresholds[0]));
  e.params.push_back(Fp::from_signed(thresholds[1]));
  return e;
}

inline Fp model_digest(const ThresholdedModel& m) { return mimc::hash(encode_model(m.quantized(), m.thresholds).all()); }

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>(v >> (8 * i)));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>(v >> (8 * i)));
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}
inline std::uint64_t get_uint(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    int c = is.get();
    if (c == EOF) throw std::runtime_error("truncated binary input");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
inline double get_f64(std::istream& is) {
  std::uint64_t v = get_uint(is, 8);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

/// Little-endian binary: magic "OATHMDL1", u32 version, u8 kind, u32 fractional
/// bits, u32 integer bits, u32 layer count, per layer (u32 in, u32 out, f64
/// weights row-major, f64 biases), then i64 thresholds a and b.
inline void write_model(std::ostream& os, const ThresholdedModel& m) {
  os.write(kModelMagic, 8);
  detail::put_u32(os, kModelFormatVersion);
  os.put(static_cast<char>(m.model.kind));
  detail::put_u32(os, static_cast<std::uint32_t>(m.fpc.fractional_bits));
  detail::put_u32(os, static_cast<std::uint32_t>(m.fpc.integer_bits));
  detail::put_u32(os, static_cast<std::uint32_t>(m.model.layers.size()));
  for (const auto& l : m.model.layers) {
    detail::put_u32(os, static_cast<std::uint32_t>(l.in));
    detail::put_u32(os, static_cast<std::uint32_t>(l.out));
    for (double w : l.weights) detail::put_f64(os, w);
    for (double b : l.bias) detail::put_f64(os, b);
  }
  detail::put_u64(os, static_cast<std::uint64_t>(m.thresholds[0]));
  detail::put_u64(os, static_cast<std::uint64_t>(m.thresholds[1]));
}

inline ThresholdedModel read_model(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0) throw std::runtime_error("not an OATHMDL1 model file");
  if (detail::get_uint(is, 4) != kModelFormatVersion) throw std::runtime_error("unsupported model format version");
  ScoreModel m;
  m.kind = static_cast<ModelKind>(detail::get_uint(is, 1));
  FixedPointConfig fpc;
  fpc.fractional_bits = static_cast<int>(detail::get_uint(is, 4));
  fpc.integer_bits = static_cast<int>(detail::get_uint(is, 4));
  const auto n_layers = detail::get_uint(is, 4);
  if (n_layers > 64) throw std::runtime_error("model file: implausible layer count");
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    DenseLayer l;
    l.in = detail::get_uint(is, 4);
    l.out = detail::get_uint(is, 4);
    if (l.in * l.out > (1u << 24)) throw std::runtime_error("model file: implausible layer size");
    l.weights.resize(l.in * l.out);
    l.bias.resize(l.out);
    for (auto& w : l.weights) w = detail::get_f64(is);
    for (auto& b : l.bias) b = detail::get_f64(is);
    m.layers.push_back(std::move(l));
  }
  std::array<std::int64_t, 2> t{};
  t[0] = static_cast<std::int64_t>(detail::get_uint(is, 8));
  t[1] = static_cast<std::int64_t>(detail::get_uint(is, 8));
  return ThresholdedModel(std::move(m), fpc, t);
}

inline nlohmann::json model_to_json(const ThresholdedModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.model.layers)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  return {{"format", "OATHMDL1"},
          {"kind", m.model.kind == ModelKind::kLogReg ? "logreg" : "ffnn"},
          {"fixed_point", {{"fractional_bits", m.fpc.fractional_bits}, {"integer_bits", m.fpc.integer_bits}}},
          {"layers", layers},
          {"thresholds", {{"a", m.thresholds[0]}, {"b", m.thresholds[1]}}},
          {"thresholds_real", {{"a", m.fpc.to_real(m.thresholds[0])}, {"b", m.fpc.to_real(m.thresholds[1])}}},
          {"digest", model_digest(m).hex()}};
}

inline void save_model(const std::string& path, const ThresholdedModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_model(os, m);
}

inline ThresholdedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_model(is);
}

// ---------------------------------------------------------------------------
// Circuit evaluation

struct CommittedLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<AuthValue> weights;
  std::vector<AuthValue> bias;
};

/// Authenticated model parameters with a public shape.
struct CommittedScoreModel {
  FixedPointConfig fpc;
  ModelKind kind = ModelKind::kLogReg;
  std::vector<CommittedLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
};

inline CommittedScoreModel commit_score_model(Session& s, const QuantizedModel& q) {
  CommittedScoreModel c;
  c.fpc = q.fpc;
  c.kind = q.kind;
  for (const auto& l : q.layers) {
    CommittedLayer cl{l.in, l.out, {}, {}};
    for (auto w : l.weights) cl.weights.push_back(s.input(Fp::from_signed(w), "model-weight"));
    for (auto b : l.bias) cl.bias.push_back(s.input(Fp::from_signed(b), "model-bias"));
    c.layers.push_back(std::move(cl));
  }
  return c;
}

/// Fixed-point neuron: given y = sum(w*x) (2f fractional bits) and bias b,
/// the prover supplies t = floor(y / 2^f) + b and remainder rho; proven are
/// rho in [0, 2^f), t in the signed activation range, and
/// y = (t - b) * 2^f + rho. Returns t and the authenticated bit [t >= 0].
struct Neuron {
  AuthValue value;
  zk::AuthBit non_negative;
};

inline Neuron truncate_neuron(Session& s, const AuthValue& y, const AuthValue& b, const FixedPointConfig& fpc) {
  const int f = fpc.fractional_bits;
  const int B = fpc.total_bits();
  const std::int64_t yv = y.prover().value.to_signed();
  const std::int64_t bv = b.prover().value.to_signed();
  const std::int64_t trunc = yv >> f;
  const std::int64_t rho = yv - trunc * (std::int64_t{1} << f);
  AuthValue t = s.input(Fp::from_signed(trunc + bv), "neuron-output");
  AuthValue r = s.input(Fp(static_cast<std::uint64_t>(rho)), "neuron-remainder");
  zk::range_check(s, r, f);
  auto bits = zk::bit_decompose(s, s.add_const(t, Fp(std::uint64_t{1} << (B - 1))), B);
  s.assert_zero(y - Fp(std::uint64_t{1} << f) * (t - b) - r, "fixed-point truncation");
  return {t, bits.back()};
}

/// Authenticated fixed-point score of committed features; opens to
/// quantized_score exactly.
inline AuthValue circuit_score(Session& s, const CommittedScoreModel& m, std::span<const AuthValue> x) {
  if (x.size() != m.input_dim()) throw std::invalid_argument("circuit_score: feature dimension mismatch");
  std::vector<AuthValue> act(x.begin(), x.end());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    const bool hidden = li + 1 < m.layers.size();
    std::vector<AuthValue> next;
    next.reserve(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      AuthValue acc = s.constant(Fp(0));
      for (std::size_t i = 0; i < l.in; ++i) acc += s.mul(l.weights[o * l.in + i], act[i]);
      Neuron n = truncate_neuron(s, acc, l.bias[o], m.fpc);
      next.push_back(hidden ? s.mul(n.non_negative, n.value) : n.value);
    }
    act = std::move(next);
  }
  return act.size() == 2 ? act[1] - act[0] : act[0];
}

}  // namespace oath
