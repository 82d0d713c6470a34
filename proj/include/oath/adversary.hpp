#pragma once

// Cheating strategies for the provider and clients. Each attack is a hook
// object installed on an honest party or an edit of the data the prover
// brings to a phase; the protocol code itself is never duplicated.

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "oath/authvalue.hpp"
#include "oath/fairness.hpp"
#include "oath/models.hpp"
#include "oath/pipeline.hpp"
#include "oath/queryauth.hpp"
#include "oath/random.hpp"

namespace oath {

enum class AttackKind { kNone, kModelSwitch, kRecordTamper, kDataForge, kMacForge, kCommitmentTamper };

inline const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kModelSwitch: return "model-switch";
    case AttackKind::kRecordTamper: return "record-tamper";
    case AttackKind::kDataForge: return "data-forge";
    case AttackKind::kMacForge: return "mac-forge";
    case AttackKind::kCommitmentTamper: return "commitment-tamper";
  }
  return "?";
}

/// Text form: `kind[:key=value,...]`, e.g. `record-tamper:p_a=0.5,p_b=0,seed=7`.
struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  double rate = 1.0;            // model-switch: fraction of answers from the alternative model
  double p_a = 0.0, p_b = 0.0;  // record-tamper: flip fraction per group
  bool reduce = false;          // record-tamper: only flips that shrink the positive-rate gap
  std::uint64_t open_index = 0; // mac-forge: which opening to tamper
  double commit_rate = 1.0;     // commitment-tamper: fraction of commitments altered
  std::uint64_t seed = 0;

  void validate() const {
    auto unit = [](double v, const char* what) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("attack: ") + what + " must lie in [0, 1]");
    };
    unit(rate, "rate");
    unit(p_a, "p_a");
    unit(p_b, "p_b");
    unit(commit_rate, "commit_rate");
  }

  static AttackSpec parse(const std::string& text) {
    AttackSpec a;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    static const std::map<std::string, AttackKind> kinds{
        {"none", AttackKind::kNone},           {"model-switch", AttackKind::kModelSwitch},
        {"record-tamper", AttackKind::kRecordTamper}, {"data-forge", AttackKind::kDataForge},
        {"mac-forge", AttackKind::kMacForge},  {"commitment-tamper", AttackKind::kCommitmentTamper}};
    auto it = kinds.find(kind);
    if (it == kinds.end()) throw std::invalid_argument("attack: unknown kind '" + kind + "'");
    a.kind = it->second;
    if (colon == std::string::npos) return a;
    std::stringstream ss(text.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("attack: expected key=value, got '" + kv + "'");
      const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
      auto num = [&]() {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("attack: bad number '" + v + "'");
        return d;
      };
      auto uint = [&]() {
        std::uint64_t u = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), u);
        if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("attack: bad integer '" + v + "'");
        return u;
      };
      if (k == "rate") a.rate = num();
      else if (k == "p_a") a.p_a = num();
      else if (k == "p_b") a.p_b = num();
      else if (k == "mode") {
        if (v != "random" && v != "reduce") throw std::invalid_argument("attack: mode must be random or reduce");
        a.reduce = v == "reduce";
      } else if (k == "open") a.open_index = uint();
      else if (k == "commit_rate") a.commit_rate = num();
      else if (k == "seed") a.seed = uint();
      else throw std::invalid_argument("attack: unknown key '" + k + "'");
    }
    a.validate();
    return a;
  }

  std::string str() const {
    std::ostringstream os;
    os << attack_name(kind);
    switch (kind) {
      case AttackKind::kModelSwitch: os << ":rate=" << rate << ",seed=" << seed; break;
      case AttackKind::kRecordTamper: os << ":p_a=" << p_a << ",p_b=" << p_b << ",mode=" << (reduce ? "reduce" : "random") << ",seed=" << seed;
        break;
      case AttackKind::kMacForge: os << ":open=" << open_index << ",seed=" << seed; break;
      case AttackKind::kCommitmentTamper: os << ":commit_rate=" << commit_rate << ",seed=" << seed; break;
      case AttackKind::kDataForge: os << ":seed=" << seed; break;
      case AttackKind::kNone: break;
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Model switching

/// Same shape as `m` with the score negated; disagrees with `m` almost everywhere.
inline ThresholdedModel divergent_model(const ThresholdedModel& m) {
  ScoreModel alt = m.model;
  auto& last = alt.layers.back();
  for (auto& w : last.weights) w = -w;
  for (auto& b : last.bias) b = -b;
  std::array<std::int64_t, 2> t{};
  for (int g = 0; g < 2; ++g) t[g] = std::clamp<std::int64_t>(1 - m.thresholds[g], m.fpc.neg_inf(), m.fpc.pos_inf());
  return ThresholdedModel(std::move(alt), m.fpc, t);
}

/// Answers a seeded fraction of queries with an uncertified model.
class ModelSwitch : public ProviderBehavior {
 public:
  ModelSwitch(ThresholdedModel alt, double rate, std::uint64_t seed)
      : alt_(std::move(alt)), rate_(rate), prg_(seed_from_u64(seed), 0x5c1) {}

  int answer(std::uint64_t, const Query& q, std::span<const Fp>, int honest) override {
    if (!prg_.bernoulli(rate_)) return honest;
    ++switched_;
    return alt_.predict_q(q.features, q.group) ? 1 : 0;
  }
  std::uint64_t switched() const { return switched_; }

 private:
  ThresholdedModel alt_;
  double rate_;
  Prg prg_;
  std::uint64_t switched_ = 0;
};

inline void apply_model_switch(Deployment& d, const ThresholdedModel& alt, const AttackSpec& spec) {
  if (alt.model.shape() != d.model.model.shape() || alt.model.kind != d.model.model.kind)
    throw std::invalid_argument("model switch: alternative model has a different public shape");
  if (spec.rate == 0.0) return;
  d.set_provider_hook(std::make_unique<ModelSwitch>(alt, spec.rate, spec.seed));
}

// ---------------------------------------------------------------------------
// Record tampering

struct TamperResult {
  std::vector<QueryRecord> log;
  std::vector<std::uint64_t> flipped;  // sorted indices
};

/// Flips the outcome of floor(p_g * N_g) records chosen uniformly in each group,
/// keeping each record's own commitment field self-consistent. In reduce mode
/// only positives of the higher-rate group and negatives of the other are
/// eligible, capped at what is available.
inline TamperResult apply_record_tamper(const std::vector<QueryRecord>& log, const AttackSpec& spec) {
  TamperResult out{log, {}};
  Prg prg(seed_from_u64(spec.seed), 0x7a3);
  std::array<std::uint64_t, 2> n{}, pos{};
  for (const auto& r : log) {
    n[group_code(r.q.group)] += 1;
    pos[group_code(r.q.group)] += r.o;
  }
  const bool a_higher = pos[0] * n[1] >= pos[1] * n[0];
  for (Group g : {Group::kA, Group::kB}) {
    const int from = (g == Group::kA) == a_higher ? 1 : 0;
    std::vector<std::uint64_t> idx;
    for (std::size_t i = 0; i < log.size(); ++i)
      if (log[i].q.group == g && (!spec.reduce || log[i].o == from)) idx.push_back(i);
    const double p = g == Group::kA ? spec.p_a : spec.p_b;
    const auto k = std::min<std::size_t>(
        idx.size(), static_cast<std::size_t>(std::floor(p * static_cast<double>(n[group_code(g)]) + 1e-9)));
    prg.shuffle(idx);
    for (std::size_t j = 0; j < k; ++j) {
      auto& rec = out.log[idx[j]];
      rec.o ^= 1;
      rec.commitment = query_commitment(rec.q, rec.r, rec.o);
      out.flipped.push_back(idx[j]);
    }
  }
  std::sort(out.flipped.begin(), out.flipped.end());
  return out;
}

// ---------------------------------------------------------------------------
// Data forging

/// A subset of `d_val` on which `m` satisfies the metric at `theta`: records of
/// the (group, prediction, label) cell whose removal most reduces the largest
/// gap are dropped greedily. Order within each cell is seeded.
inline LabeledDataset apply_data_forge(const LabeledDataset& d_val, const ThresholdedModel& m, Metric metric, Theta theta,
                                       std::uint64_t seed, std::size_t min_group = 16) {
  auto preds = predict_all(m, d_val);
  std::array<std::vector<std::size_t>, 8> cells;
  auto cell_of = [&](std::size_t i) {
    return group_code(d_val.records[i].group) * 4 + static_cast<std::size_t>(preds[i]) * 2 +
           static_cast<std::size_t>(d_val.records[i].label);
  };
  for (std::size_t i = 0; i < d_val.size(); ++i) cells[cell_of(i)].push_back(i);
  Prg prg(seed_from_u64(seed), 0xf09);
  for (auto& c : cells) prg.shuffle(c);

  auto tally_of = [&](const std::array<std::size_t, 8>& n) {
    GroupTally t{};
    for (std::size_t c = 0; c < 8; ++c) {
      GroupCounts one{};
      one.add(static_cast<int>((c / 2) % 2), static_cast<int>(c % 2));
      for (std::size_t k = 0; k < kNumCounts; ++k) t[c / 4].c[k] += one.c[k] * n[c];
    }
    return t;
  };
  auto worst = [&](const GroupTally& t) -> std::optional<Rational> {
    Rational w{0, 1};
    for (const auto& term : metric_terms(metric)) {
      for (const auto& gc : t)
        if (gc[term.den] == 0) return std::nullopt;
      w = std::max(w, term_gap(t, term));
    }
    return w;
  };
  std::array<std::size_t, 8> n{};
  for (std::size_t c = 0; c < 8; ++c) n[c] = cells[c].size();
  for (;;) {
    GroupTally t = tally_of(n);
    if (satisfies(t, metric, theta)) break;
    std::optional<Rational> best;
    int best_c = -1;
    for (int c = 0; c < 8; ++c) {
      if (n[c] == 0) continue;
      auto trial = n;
      --trial[c];
      std::size_t gsize = 0;
      for (int k = (c / 4) * 4; k < (c / 4) * 4 + 4; ++k) gsize += trial[k];
      if (gsize < min_group) continue;
      auto w = worst(tally_of(trial));
      if (w && (!best || *w < *best)) best = w, best_c = c;
    }
    if (best_c < 0) throw InfeasibleError("data forge: no subset reaches theta");
    --n[best_c];
  }
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < 8; ++c) keep.insert(keep.end(), cells[c].begin(), cells[c].begin() + n[c]);
  std::sort(keep.begin(), keep.end());
  LabeledDataset out;
  for (auto i : keep) out.records.push_back(d_val.records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Prover-side MAC forgery and client-side commitment tampering

/// Alters one opened value and guesses a matching tag.
class MacForge : public ProverStrategy {
 public:
  MacForge(std::uint64_t target, std::uint64_t seed) : target_(target), prg_(seed_from_u64(seed), 0x3ac) {}
  void on_open(std::uint64_t index, Fp& value, Fp& mac) override {
    if (index != target_) return;
    value = value + prg_.nonzero_field();
    mac = mac + prg_.field();
    ++attempts_;
  }
  std::uint64_t attempts() const { return attempts_; }

 private:
  std::uint64_t target_;
  Prg prg_;
  std::uint64_t attempts_ = 0;
};

/// Client that sends the verifier a commitment other than the one it computed.
class CommitmentTamper : public ClientBehavior {
 public:
  CommitmentTamper(double rate, std::uint64_t seed) : rate_(rate), prg_(seed_from_u64(seed), 0xc3d) {}
  Fp commitment(std::uint64_t index, Fp honest) override {
    if (!prg_.bernoulli(rate_)) return honest;
    tampered_.push_back(index);
    return honest + Fp(1);
  }
  const std::vector<std::uint64_t>& tampered() const { return tampered_; }

 private:
  double rate_;
  Prg prg_;
  std::vector<std::uint64_t> tampered_;
};

}  // namespace oath
