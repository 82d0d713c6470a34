#pragma once

// Zero-knowledge fairness audit over all answered queries: the fairness
// inequality over every committed (q, r, o), a group-balanced uniform sample
// of nu queries per group, and for each sampled query a correctness proof
// (o is the certified model's answer) and a consistency proof (the committed
// record hashes to the client's stored commitment).

#include <algorithm>
#include <array>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oath/certify.hpp"
#include "oath/circuit.hpp"
#include "oath/jsonl.hpp"
#include "oath/queryauth.hpp"

namespace oath {

// Sample labels fit in 24 bits; the empty slot of each permutation table
// holds the largest 24-bit value so it never compares <= nu.
inline constexpr int kSampleBits = 24;
inline constexpr std::uint64_t kSampleBottom = (std::uint64_t{1} << kSampleBits) - 1;
static_assert(kMaxRecords < kSampleBottom);

/// Verifier-chosen permutations of [1, N_a] and [1, N_b].
struct SamplePermutations {
  std::vector<std::uint64_t> a;
  std::vector<std::uint64_t> b;
};

inline SamplePermutations verifier_permutations(const Seed& seed, std::uint64_t n_a, std::uint64_t n_b) {
  Prg prg(seed, 0x5a3);
  SamplePermutations p;
  p.a.resize(n_a);
  p.b.resize(n_b);
  std::iota(p.a.begin(), p.a.end(), 1);
  std::iota(p.b.begin(), p.b.end(), 1);
  prg.shuffle(p.a);
  prg.shuffle(p.b);
  return p;
}

/// Clear evaluation of the sampler: the i-th member of group g (1-based,
/// in log order) receives label pi_g(i) and is selected iff pi_g(i) <= nu.
inline std::vector<std::uint64_t> sample_indices_clear(std::span<const Group> groups, std::uint64_t nu,
                                                       const SamplePermutations& perms) {
  std::vector<std::uint64_t> out;
  std::uint64_t c[2] = {0, 0};
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const int g = static_cast<int>(group_code(groups[i]));
    const auto& pi = g == 0 ? perms.a : perms.b;
    if (pi[c[g]++] <= nu) out.push_back(i);
  }
  return out;
}

inline zk::ZkRam::Mode default_ram_mode(std::size_t n) {
  return n > 64 ? zk::ZkRam::Mode::kLookup : zk::ZkRam::Mode::kLinearScan;
}

/// Group-balanced uniform sample over committed group indicators. The
/// permutation tables (with the empty slot at index 0) are read at
/// [i in g] * c_g, where c_g counts group-g records so far, and
/// S[i] = [A_a[i] <= nu] or [A_b[i] <= nu].
inline std::vector<zk::AuthBit> balanced_sample(Session& s, const std::vector<std::array<zk::AuthBit, 2>>& group_bits,
                                                std::uint64_t nu, const SamplePermutations& perms,
                                                std::optional<zk::ZkRam::Mode> mode = std::nullopt) {
  if (nu > perms.a.size() || nu > perms.b.size())
    throw InfeasibleError("balanced_sample: nu exceeds a group size");
  if (perms.a.size() + perms.b.size() != group_bits.size())
    throw std::invalid_argument("balanced_sample: permutation sizes do not match the record count");
  std::array<zk::ZkRam, 2> rams = [&] {
    auto table = [&](const std::vector<std::uint64_t>& pi) {
      std::vector<Fp> t{Fp(kSampleBottom)};
      for (auto v : pi) t.push_back(Fp(v));
      return zk::ZkRam(s, std::move(t), mode.value_or(default_ram_mode(pi.size() + 1)));
    };
    return std::array<zk::ZkRam, 2>{table(perms.a), table(perms.b)};
  }();

  std::vector<std::array<AuthValue, 2>> labels;
  labels.reserve(group_bits.size());
  std::array<AuthValue, 2> count{s.constant(Fp(0)), s.constant(Fp(0))};
  for (const auto& gb : group_bits) {
    std::array<AuthValue, 2> l;
    for (int g = 0; g < 2; ++g) {
      count[g] += gb[g].value();
      l[g] = rams[g].read(s.mul(gb[g], count[g]));
    }
    labels.push_back(l);
  }
  for (auto& r : rams) r.finalize();

  const AuthValue bound = s.constant(Fp(nu));
  std::vector<zk::AuthBit> out;
  out.reserve(group_bits.size());
  for (const auto& l : labels)
    out.push_back(zk::bit_or(s, zk::leq(s, l[0], bound, kSampleBits), zk::leq(s, l[1], bound, kSampleBits)));
  return out;
}

// ---------------------------------------------------------------------------
// Audit

struct AuditConfig {
  Metric metric = Metric::kDemographicParity;
  Theta theta{1, 10};
  std::uint64_t nu = 100;
  Seed dealer_seed{};
  Seed verifier_seed{};
  std::optional<zk::ZkRam::Mode> ram_mode;
};

struct SampleCheck {
  std::uint64_t index = 0;
  bool correct = false;
  bool consistent = false;
};

struct AuditTranscript {
  std::uint64_t n = 0, n_a = 0, n_b = 0;
  Metric metric = Metric::kDemographicParity;
  Theta theta;
  std::uint64_t nu = 0;
  bool fair = false;
  std::string fairness_reason;
  std::vector<std::uint64_t> sampled;
  std::vector<SampleCheck> checks;
  bool pass = false;
  std::string reason;
  std::vector<std::uint64_t> blamed;
  // instrumentation
  std::uint64_t correctness_proofs = 0;
  std::uint64_t consistency_proofs = 0;
  SessionStats stats;
  std::string transcript_digest;
  std::map<std::string, double> stage_seconds;

  std::vector<std::uint64_t> consistency_failures() const {
    std::vector<std::uint64_t> v;
    for (const auto& c : checks)
      if (!c.consistent) v.push_back(c.index);
    return v;
  }
  std::vector<std::uint64_t> correctness_failures() const {
    std::vector<std::uint64_t> v;
    for (const auto& c : checks)
      if (!c.correct) v.push_back(c.index);
    return v;
  }

  nlohmann::json summary(bool with_timing = true) const {
    nlohmann::json j{{"record", "audit-summary"},
                     {"N", n},
                     {"N_a", n_a},
                     {"N_b", n_b},
                     {"metric", metric_name(metric)},
                     {"theta", theta.str()},
                     {"nu", nu},
                     {"fair", fair},
                     {"verdict", pass ? "Pass" : "Fail"},
                     {"reason", reason},
                     {"blamed", blamed},
                     {"correctness_proofs", correctness_proofs},
                     {"consistency_proofs", consistency_proofs},
                     {"transcript_digest", transcript_digest},
                     {"stats", {{"inputs", stats.inputs}, {"opens", stats.opens}, {"muls", stats.muls},
                                {"batch_checks", stats.batch_checks}}}};
    if (with_timing) j["seconds"] = stage_seconds;
    return j;
  }

  void write(JsonlLog& log, bool with_timing = true) const {
    log.append({{"record", "audit-sample"}, {"indices", sampled}});
    for (const auto& c : checks)
      log.append({{"record", "audit-check"}, {"index", c.index}, {"correct", c.correct}, {"consistent", c.consistent}});
    log.append(summary(with_timing));
  }
};

/// What the prover brings to the audit.
struct AuditInput {
  const ThresholdedModel* model = nullptr;      // the prover's model
  const std::vector<QueryRecord>* log = nullptr;  // the prover's query log
  const std::vector<int>* labels = nullptr;     // true outcomes per query (needed by label-based metrics)
};

/// Public data the verifier holds.
struct AuditPublic {
  Fp certified_digest;
  const CommitmentStore* store = nullptr;
};

namespace detail {

struct CommittedRecord {
  CommittedQuery q;
  std::vector<AuthValue> r;
  zk::AuthBit o;
};

inline std::vector<AuthValue> record_preimage(const Session& s, const CommittedRecord& rec) {
  // mirrors record_elements
  std::vector<AuthValue> e{s.constant(kRecordTag), s.constant(Fp(kRecordVersion)), s.constant(Fp(0x52)),
                           s.constant(Fp(rec.q.features.size()))};
  e.insert(e.end(), rec.q.features.begin(), rec.q.features.end());
  e.push_back(rec.q.group);
  e.push_back(s.constant(Fp(rec.r.size())));
  e.insert(e.end(), rec.r.begin(), rec.r.end());
  e.push_back(rec.o);
  return e;
}

inline bool is_constraint_failure(const SoundnessError& e) {
  return std::string_view(e.what()).starts_with("constraint violated");
}

}  // namespace detail

/// Runs prover and verifier of the audit in process.
inline AuditTranscript run_audit(const AuditInput& in, const AuditPublic& pub, const AuditConfig& cfg,
                                 ProverStrategy* prover = nullptr, JsonlLog* log = nullptr) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  auto lap = [&](const char* stage) {
    auto now = clock::now();
    return std::pair<std::string, double>(stage, std::chrono::duration<double>(now - t0).count());
  };

  AuditTranscript tr;
  tr.metric = cfg.metric;
  tr.theta = cfg.theta;
  tr.nu = cfg.nu;
  const auto& records = *in.log;
  const auto& store = *pub.store;
  tr.n = store.size();
  if (records.size() != store.size()) throw std::invalid_argument("audit: query log and commitment store differ in size");
  if (records.empty()) throw std::invalid_argument("audit: no queries to audit");
  if (records.size() > kMaxRecords) throw std::invalid_argument("audit: more than 2^22 queries");
  const bool need_labels = metric_needs_labels(cfg.metric);
  if (need_labels && (in.labels == nullptr || in.labels->size() != records.size()))
    throw std::invalid_argument(std::string("audit: metric ") + metric_name(cfg.metric) + " needs one label per query");

  Session s(cfg.dealer_seed, prover);
  auto note = [&](nlohmann::json j) {
    if (log) log->append(std::move(j));
  };
  auto fail = [&](std::string reason) {
    tr.pass = false;
    tr.reason = tr.reason.empty() ? std::move(reason) : tr.reason + "; " + reason;
  };
  note({{"record", "audit-setup"}, {"N", tr.n}, {"metric", metric_name(cfg.metric)}, {"theta", cfg.theta.str()}, {"nu", cfg.nu}});

  try {
    // commit model, every record, and labels
    CommittedModel cm = commit_model(s, *in.model, pub.certified_digest);
    std::vector<detail::CommittedRecord> com;
    std::vector<AuthValue> ys;
    com.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      detail::CommittedRecord c;
      c.q = commit_query(s, rec.q.features, rec.q.group);
      for (Fp x : rec.r) c.r.push_back(s.input(x, "query-randomness"));
      c.o = zk::input_bit(s, rec.o == 1, "query-outcome");
      com.push_back(std::move(c));
      if (need_labels) ys.push_back(zk::input_bit(s, (*in.labels)[i] == 1, "label"));
    }
    tr.stage_seconds.insert(lap("commit"));

    // fairness over all records
    CircuitTally tally(s, cfg.metric);
    std::vector<std::array<zk::AuthBit, 2>> group_bits;
    group_bits.reserve(com.size());
    std::array<AuthValue, 2> sizes{s.constant(Fp(0)), s.constant(Fp(0))};
    for (std::size_t i = 0; i < com.size(); ++i) {
      auto ind = zk::eq_indicators(s, com[i].q.group, kGroupCodes);
      std::array<zk::AuthBit, 2> gb{ind[0], ind[1]};
      tally.add(s, gb, com[i].o, need_labels ? &ys[i] : nullptr);
      sizes[0] += gb[0].value();
      sizes[1] += gb[1].value();
      group_bits.push_back(gb);
    }
    try {
      prove_fairness(s, tally, cfg.theta);
      tr.fair = true;
    } catch (const SoundnessError& e) {
      if (!std::string_view(e.what()).starts_with("fairness") && !detail::is_constraint_failure(e)) throw;
      tr.fair = false;
      tr.fairness_reason = e.what();
      fail(std::string("unfair: ") + e.what());
    }
    note({{"record", "audit-fairness"}, {"fair", tr.fair}, {"reason", tr.fairness_reason}});
    tr.stage_seconds.insert(lap("fairness"));

    // group sizes are revealed, then the verifier picks permutations
    tr.n_a = s.open(sizes[0]).value();
    tr.n_b = s.open(sizes[1]).value();
    note({{"record", "audit-group-sizes"}, {"N_a", tr.n_a}, {"N_b", tr.n_b}});
    if (tr.n_a + tr.n_b != tr.n) throw SoundnessError("group sizes do not add up");
    const bool feasible = cfg.nu <= tr.n_a && cfg.nu <= tr.n_b;
    if (!feasible) fail("sample infeasible: nu exceeds a group size");
    if (feasible) {
      auto perms = verifier_permutations(cfg.verifier_seed, tr.n_a, tr.n_b);
      auto sample = balanced_sample(s, group_bits, cfg.nu, perms, cfg.ram_mode);
      for (std::size_t i = 0; i < sample.size(); ++i)
        if (s.open(sample[i]).value() == 1) tr.sampled.push_back(i);
      if (tr.sampled.size() != 2 * cfg.nu) throw SoundnessError("sample size differs from 2 nu");
      tr.stage_seconds.insert(lap("sample"));
    }

    // sampled correctness and consistency
    for (std::uint64_t j : tr.sampled) {
      SampleCheck chk{j, true, true};
      ++tr.correctness_proofs;
      try {
        auto inf = zk_pp_inference(s, cm, com[j].q, records[j].r);
        if (!s.open(inf.outcome.value() - com[j].o.value()).is_zero()) chk.correct = false;
      } catch (const SoundnessError& e) {
        if (!detail::is_constraint_failure(e)) throw;
        chk.correct = false;
      }
      ++tr.consistency_proofs;
      Fp h = s.open(mimc::hash_circuit(s, detail::record_preimage(s, com[j])));
      chk.consistent = h == store.at(j).commitment;
      if (!chk.correct || !chk.consistent) tr.blamed.push_back(j);
      tr.checks.push_back(chk);
    }
    tr.stage_seconds.insert(lap("checks"));
    s.flush();

    const auto bad_cons = tr.consistency_failures();
    const auto bad_corr = tr.correctness_failures();
    tr.pass = tr.fair && feasible && bad_cons.empty() && bad_corr.empty();
    if (!bad_cons.empty()) fail("consistency check failed on " + std::to_string(bad_cons.size()) + " sampled queries");
    if (!bad_corr.empty()) fail("correctness check failed on " + std::to_string(bad_corr.size()) + " sampled queries");
  } catch (const SoundnessError& e) {
    tr.pass = false;
    tr.reason = std::string("soundness: ") + e.what();
  }
  tr.stats = s.stats();
  tr.transcript_digest = to_hex(s.transcript_digest());
  tr.stage_seconds.insert(lap("total"));
  if (log) tr.write(*log);
  return tr;
}

inline AuditTranscript run_audit_dp(const AuditInput& in, const AuditPublic& pub, AuditConfig cfg,
                                    ProverStrategy* prover = nullptr) {
  cfg.metric = Metric::kDemographicParity;
  return run_audit(in, pub, cfg, prover);
}

inline AuditTranscript run_audit_eo(const AuditInput& in, const AuditPublic& pub, AuditConfig cfg,
                                    ProverStrategy* prover = nullptr) {
  cfg.metric = Metric::kEqualizedOdds;
  return run_audit(in, pub, cfg, prover);
}

}  // namespace oath
