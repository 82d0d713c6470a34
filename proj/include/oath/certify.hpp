#pragma once

// Zero-knowledge certification that a committed thresholded model meets a
// fairness bound on a committed calibration set, plus the circuit pieces it
// shares with the audit: model commitment bound to a public digest,
// thresholded inference, per-group counters and the cross-multiplied
// fairness inequality.

#include <array>
#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oath/circuit.hpp"
#include "oath/coins.hpp"
#include "oath/fairness.hpp"
#include "oath/jsonl.hpp"
#include "oath/mimc.hpp"
#include "oath/models.hpp"

namespace oath {

// Width of the range proofs in the fairness inequality. Counts are at most
// 2^22 and theta_den at most 2^16, so both sides stay below 2^58.
inline constexpr int kFairnessBits = 60;

inline const std::array<Fp, 2> kGroupCodes{Fp(0), Fp(1)};

struct CommittedModel {
  CommittedScoreModel score;
  std::array<AuthValue, 2> thresholds;
  Fp digest;
  std::vector<std::size_t> shape;
};

/// Commits the model parameters and proves that they hash to `public_digest`,
/// the digest the verifier holds for this model.
inline CommittedModel commit_model(Session& s, const ThresholdedModel& m, Fp public_digest) {
  const auto& q = m.quantized();
  const auto enc = encode_model(q, m.thresholds);
  CommittedModel c;
  c.score = commit_score_model(s, q);
  c.thresholds = {s.input(Fp::from_signed(m.thresholds[0]), "model-threshold"),
                  s.input(Fp::from_signed(m.thresholds[1]), "model-threshold")};
  c.digest = public_digest;
  c.shape = m.model.shape();

  std::vector<AuthValue> preimage;
  for (Fp h : enc.header) preimage.push_back(s.constant(h));
  for (const auto& l : c.score.layers) {
    preimage.insert(preimage.end(), l.weights.begin(), l.weights.end());
    preimage.insert(preimage.end(), l.bias.begin(), l.bias.end());
  }
  preimage.push_back(c.thresholds[0]);
  preimage.push_back(c.thresholds[1]);
  if (s.open(mimc::hash_circuit(s, preimage)) != public_digest)
    throw SoundnessError("committed model does not match the certified digest");
  return c;
}

struct CommittedQuery {
  std::vector<AuthValue> features;
  AuthValue group;
};

/// Prover-committed query; with `known_to_verifier` the values become public
/// constants instead.
inline CommittedQuery commit_query(Session& s, std::span<const std::int64_t> xq, Group g, bool known_to_verifier = false) {
  CommittedQuery c;
  c.features.reserve(xq.size());
  for (auto v : xq)
    c.features.push_back(known_to_verifier ? s.constant(Fp::from_signed(v)) : s.input(Fp::from_signed(v), "query-feature"));
  const Fp code(group_code(g));
  c.group = known_to_verifier ? s.constant(code) : s.input(code, "query-group");
  return c;
}

struct PpInference {
  zk::AuthBit outcome;
  std::array<zk::AuthBit, 2> group;  // one-hot group indicators
};

/// Thresholded prediction: score compared against every group's threshold,
/// then masked by the group indicators so only the query's own group counts.
/// The public randomness `r` is accepted for interface parity; deterministic
/// models ignore it.
inline PpInference zk_pp_inference(Session& s, const CommittedModel& m, const CommittedQuery& q,
                                   std::span<const Fp> r = {}) {
  (void)r;
  const int bits = m.score.fpc.compare_bits();
  AuthValue score = circuit_score(s, m.score, q.features);
  auto ind = zk::eq_indicators(s, q.group, kGroupCodes);
  AuthValue o = s.constant(Fp(0));
  for (int g = 0; g < 2; ++g) o += s.mul(ind[g], zk::ge_signed(s, score, m.thresholds[g], bits));
  return {zk::AuthBit::assume_bit(o), {ind[0], ind[1]}};
}

/// Authenticated per-group counters for the counts a metric needs.
class CircuitTally {
 public:
  CircuitTally(const Session& s, Metric m) : metric_(m), used_(metric_counts(m)) {
    for (auto& g : c_) g.fill(s.constant(Fp(0)));
    for (Count k : used_) {
      if (k != Count::kAll && k != Count::kLabelPos && k != Count::kLabelNeg) need_pred_ = true;
      if (k != Count::kAll && k != Count::kPositive) need_label_ = true;
    }
    need_tp_ = need_pred_ && need_label_;
  }

  Metric metric() const { return metric_; }
  bool needs_labels() const { return need_label_; }

  /// `label` must be an authenticated bit when the metric needs labels.
  void add(Session& s, const std::array<zk::AuthBit, 2>& group, const zk::AuthBit& outcome,
           const AuthValue* label = nullptr) {
    if (need_label_ && label == nullptr) throw std::invalid_argument("CircuitTally: metric needs labels");
    for (int g = 0; g < 2; ++g) {
      const AuthValue& a = group[g];
      AuthValue p = need_pred_ ? s.mul(a, outcome) : AuthValue();
      AuthValue l = need_label_ ? s.mul(a, *label) : AuthValue();
      AuthValue tp = need_tp_ ? s.mul(p, *label) : AuthValue();
      auto& c = c_[g];
      for (Count k : used_) {
        auto& slot = c[static_cast<std::size_t>(k)];
        switch (k) {
          case Count::kAll: slot += a; break;
          case Count::kPositive: slot += p; break;
          case Count::kLabelPos: slot += l; break;
          case Count::kLabelNeg: slot += a - l; break;
          case Count::kTP: slot += tp; break;
          case Count::kFP: slot += p - tp; break;
          case Count::kFN: slot += l - tp; break;
          case Count::kTN: slot += a - p - l + tp; break;
        }
      }
    }
  }

  const AuthValue& get(int group, Count k) const { return c_[group][static_cast<std::size_t>(k)]; }

 private:
  Metric metric_;
  std::vector<Count> used_;
  std::array<std::array<AuthValue, kNumCounts>, 2> c_;
  bool need_pred_ = false;
  bool need_label_ = false;
  bool need_tp_ = false;
};

namespace detail {

inline void range_check_or(Session& s, const AuthValue& a, int bits, const std::string& reason) {
  try {
    zk::range_check(s, a, bits);
  } catch (const SoundnessError& e) {
    if (std::string_view(e.what()).starts_with("constraint violated")) throw SoundnessError(reason);
    throw;
  }
}

inline void assert_nonzero(Session& s, const AuthValue& d, const std::string& reason) {
  const Fp v = d.prover().value;
  AuthValue w = s.input(v.is_zero() ? Fp(0) : v.inverse(), "fairness-inverse");
  AuthValue check = s.add_const(s.mul(w, d), Fp(0) - Fp(1));
  if (!s.open(check).is_zero()) throw SoundnessError(reason);
}

}  // namespace detail

/// For each rate term: theta_num * D_a * D_b - theta_den * |N_a * D_b - N_b * D_a| >= 0
/// with non-zero denominators. The absolute value uses a prover-chosen sign
/// bit; both |.| and the slack are proven non-negative by range proofs.
inline void prove_fairness(Session& s, const CircuitTally& t, const Theta& theta) {
  for (const auto& term : metric_terms(t.metric())) {
    const AuthValue &na = t.get(0, term.num), &da = t.get(0, term.den);
    const AuthValue &nb = t.get(1, term.num), &db = t.get(1, term.den);
    detail::assert_nonzero(s, da, std::string("fairness: empty denominator for ") + term.name + " in group a");
    detail::assert_nonzero(s, db, std::string("fairness: empty denominator for ") + term.name + " in group b");
    AuthValue diff = s.mul(na, db) - s.mul(nb, da);
    AuthValue dd = s.mul(da, db);
    zk::AuthBit sign = zk::input_bit(s, diff.prover().value.to_signed() < 0, "fairness-sign");
    AuthValue abs = diff - Fp(2) * s.mul(sign, diff);
    detail::range_check_or(s, abs, kFairnessBits, "fairness: sign bit inconsistent");
    AuthValue slack = Fp(theta.num) * dd - Fp(theta.den) * abs;
    detail::range_check_or(s, slack, kFairnessBits, std::string("fairness: ") + term.name + " gap exceeds theta");
  }
}

// ---------------------------------------------------------------------------
// Certification

struct CertifyConfig {
  Metric metric = Metric::kDemographicParity;
  Theta theta{1, 10};
  Seed dealer_seed{};
  Seed prover_coins{};
  Seed verifier_coins{};
  // D_val handed over by the verifier instead of chosen by the prover.
  bool verifier_supplied_dataset = false;
};

struct CertificationResult {
  bool certified = false;
  std::string reason;
  Metric metric = Metric::kDemographicParity;
  Theta theta;
  std::uint64_t dataset_size = 0;
  Fp model_digest;
  std::string transcript_digest;
  std::string schedule_digest;
  SessionStats stats;
  double seconds = 0;

  nlohmann::json to_json(bool with_timing = true) const {
    nlohmann::json j{{"record", "certification-result"},
                     {"verdict", certified ? "Certified" : "Rejected"},
                     {"reason", reason},
                     {"metric", metric_name(metric)},
                     {"theta", theta.str()},
                     {"dataset_size", dataset_size},
                     {"model_digest", model_digest.hex()},
                     {"transcript_digest", transcript_digest},
                     {"schedule_digest", schedule_digest},
                     {"stats", {{"inputs", stats.inputs}, {"opens", stats.opens}, {"muls", stats.muls},
                                {"batch_checks", stats.batch_checks}}}};
    if (with_timing) j["seconds"] = seconds;
    return j;
  }

  static CertificationResult from_json(const nlohmann::json& j) {
    CertificationResult r;
    r.certified = j.at("verdict") == "Certified";
    r.reason = j.value("reason", "");
    r.metric = parse_metric(j.at("metric"));
    r.theta = Theta::parse(j.at("theta"));
    r.dataset_size = j.at("dataset_size");
    r.model_digest = Fp::from_hex(j.at("model_digest").get<std::string>());
    r.transcript_digest = j.value("transcript_digest", "");
    r.schedule_digest = j.value("schedule_digest", "");
    return r;
  }
};

/// Runs prover and verifier of the certification protocol in process.
/// `public_digest` is the verifier's record of the committed model (defaults
/// to the model's own digest); `prover` installs cheating hooks.
inline CertificationResult certify(const ThresholdedModel& model, const LabeledDataset& d_val, const CertifyConfig& cfg,
                                   ProverStrategy* prover = nullptr, JsonlLog* log = nullptr,
                                   std::optional<Fp> public_digest = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  CertificationResult res;
  res.metric = cfg.metric;
  res.theta = cfg.theta;
  res.dataset_size = d_val.size();
  res.model_digest = public_digest.value_or(model_digest(model));
  auto note = [&](nlohmann::json j) {
    if (log) log->append(std::move(j));
  };
  note({{"step", "setup"},
        {"metric", metric_name(cfg.metric)},
        {"theta", cfg.theta.str()},
        {"n", d_val.size()},
        {"shape", model.model.shape()},
        {"verifier_supplied_dataset", cfg.verifier_supplied_dataset}});

  Session s(cfg.dealer_seed, prover);
  auto finish = [&](bool ok, std::string reason) {
    res.certified = ok;
    res.reason = std::move(reason);
    res.transcript_digest = to_hex(s.transcript_digest());
    res.schedule_digest = to_hex(s.schedule_digest());
    res.stats = s.stats();
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    note(res.to_json(false));
    return res;
  };

  if (d_val.empty()) return finish(false, "empty calibration dataset");
  if (d_val.size() > kMaxRecords) return finish(false, "calibration dataset exceeds 2^22 records");
  if (d_val.dim() != model.model.input_dim()) return finish(false, "dataset dimension does not match model");

  try {
    CommittedModel cm = commit_model(s, model, res.model_digest);
    note({{"step", "commit-model"}, {"digest", res.model_digest.hex()}, {"transcript", to_hex(s.transcript_digest())}});

    const bool labels = metric_needs_labels(cfg.metric);
    std::vector<CommittedQuery> points;
    std::vector<AuthValue> ys;
    points.reserve(d_val.size());
    for (const auto& r : d_val.records) {
      points.push_back(commit_query(s, quantize_input(r.features, model.fpc), r.group, cfg.verifier_supplied_dataset));
      if (labels) {
        if (cfg.verifier_supplied_dataset) ys.push_back(s.constant(Fp(static_cast<std::uint64_t>(r.label))));
        else ys.push_back(zk::input_bit(s, r.label == 1, "label"));
      }
    }
    note({{"step", "commit-dataset"}, {"n", d_val.size()}, {"transcript", to_hex(s.transcript_digest())}});

    Prg px(cfg.prover_coins, 0xc0), pv(cfg.verifier_coins, 0xc1);
    auto coins = coin_flip(CoinParty::from_prg(px), CoinParty::from_prg(pv), d_val.size(), "prover");
    note({{"step", "coin-flip"}, {"commitment", to_hex(coins.commitment)}, {"joint_seed", to_hex(coins.joint)}});

    CircuitTally tally(s, cfg.metric);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto inf = zk_pp_inference(s, cm, points[i], std::span<const Fp>(&coins.elements[i], 1));
      tally.add(s, inf.group, inf.outcome, labels ? &ys[i] : nullptr);
    }
    note({{"step", "inference"}, {"points", points.size()}, {"transcript", to_hex(s.transcript_digest())}});

    prove_fairness(s, tally, cfg.theta);
    s.flush();
    note({{"step", "fairness"}, {"terms", metric_terms(cfg.metric).size()}, {"transcript", to_hex(s.transcript_digest())}});
  } catch (const SoundnessError& e) {
    return finish(false, e.what());
  } catch (const CoinFlipAbort& e) {
    return finish(false, std::string(e.what()) + " (blame: " + e.blamed() + ")");
  }
  return finish(true, "");
}

inline CertificationResult certify_dp(const ThresholdedModel& m, const LabeledDataset& d_val, const Theta& theta,
                                      CertifyConfig cfg = {}, ProverStrategy* prover = nullptr) {
  cfg.metric = Metric::kDemographicParity;
  cfg.theta = theta;
  return certify(m, d_val, cfg, prover);
}

inline CertificationResult certify_eo(const ThresholdedModel& m, const LabeledDataset& d_val, const Theta& theta,
                                      CertifyConfig cfg = {}, ProverStrategy* prover = nullptr) {
  cfg.metric = Metric::kEqualizedOdds;
  cfg.theta = theta;
  return certify(m, d_val, cfg, prover);
}

}  // namespace oath
