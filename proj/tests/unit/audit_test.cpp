#include <gtest/gtest.h>

#include <algorithm>

#include "oath/audit.hpp"
#include "oath/pipeline.hpp"
#include "support/oracles.hpp"

using namespace oath;

namespace {

std::vector<std::array<zk::AuthBit, 2>> commit_groups(Session& s, const std::vector<Group>& groups) {
  std::vector<std::array<zk::AuthBit, 2>> out;
  for (Group g : groups) {
    auto b = zk::input_bit(s, g == Group::kB, "group");
    out.push_back({zk::bit_not(s, b), b});
  }
  return out;
}

std::vector<Group> random_groups(std::size_t n, std::uint64_t seed) {
  Prg prg(seed_from_u64(seed), 1);
  std::vector<Group> g(n);
  for (auto& x : g) x = prg.unit() < 0.4 ? Group::kA : Group::kB;
  return g;
}

std::vector<std::uint64_t> circuit_sample(const std::vector<Group>& groups, std::uint64_t nu, const Seed& vseed,
                                          zk::ZkRam::Mode mode) {
  Session s(seed_from_u64(77));
  auto gb = commit_groups(s, groups);
  std::uint64_t na = std::count(groups.begin(), groups.end(), Group::kA);
  auto perms = verifier_permutations(vseed, na, groups.size() - na);
  auto bits = balanced_sample(s, gb, nu, perms, mode);
  std::vector<std::uint64_t> idx;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (s.open(bits[i].value()) == Fp(1)) idx.push_back(i);
  s.flush();
  return idx;
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.calibration_size = 1500;
  c.n_queries = 600;
  c.nu = 20;
  c.theta = Theta{1, 4};
  return c;
}

const Deployment& honest_deployment() {
  static Deployment d = run_phases_1_2(small_config());
  return d;
}

}  // namespace

TEST(BalancedSample, SamplesEverythingWhenGroupsEqualNu) {
  std::vector<Group> g{Group::kA, Group::kB, Group::kB, Group::kA, Group::kA, Group::kB};
  for (auto mode : {zk::ZkRam::Mode::kLinearScan, zk::ZkRam::Mode::kLookup}) {
    auto idx = circuit_sample(g, 3, seed_from_u64(1), mode);
    EXPECT_EQ(idx.size(), 6u);
  }
}

TEST(BalancedSample, NuZeroSamplesNothing) {
  auto g = random_groups(40, 3);
  EXPECT_TRUE(circuit_sample(g, 0, seed_from_u64(2), zk::ZkRam::Mode::kLinearScan).empty());
  EXPECT_TRUE(circuit_sample(g, 0, seed_from_u64(2), zk::ZkRam::Mode::kLookup).empty());
}

TEST(BalancedSample, MatchesClearSamplerInBothRamModes) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto g = random_groups(90, seed);
    const std::uint64_t nu = 5 + seed;
    std::uint64_t na = std::count(g.begin(), g.end(), Group::kA);
    auto vseed = seed_from_u64(100 + seed);
    auto clear = sample_indices_clear(g, nu, verifier_permutations(vseed, na, g.size() - na));
    EXPECT_EQ(circuit_sample(g, nu, vseed, zk::ZkRam::Mode::kLinearScan), clear);
    EXPECT_EQ(circuit_sample(g, nu, vseed, zk::ZkRam::Mode::kLookup), clear);
    std::uint64_t got_a = 0;
    for (auto i : clear) got_a += g[i] == Group::kA;
    EXPECT_EQ(got_a, nu);
    EXPECT_EQ(clear.size(), 2 * nu);
  }
}

TEST(BalancedSample, ClearSamplerUsesPermutationRanks) {
  std::vector<Group> g{Group::kA, Group::kA, Group::kB, Group::kA, Group::kB};
  SamplePermutations p{{3, 1, 2}, {2, 1}};
  // group a ranks: idx0 -> 3, idx1 -> 1, idx3 -> 2; group b: idx2 -> 2, idx4 -> 1
  EXPECT_EQ(sample_indices_clear(g, 1, p), (std::vector<std::uint64_t>{1, 4}));
  EXPECT_EQ(sample_indices_clear(g, 2, p), (std::vector<std::uint64_t>{1, 2, 3, 4}));
}

TEST(BalancedSample, RejectsNuLargerThanGroup) {
  Session s(seed_from_u64(1));
  auto gb = commit_groups(s, {Group::kA, Group::kB});
  auto perms = verifier_permutations(seed_from_u64(1), 1, 1);
  EXPECT_THROW(balanced_sample(s, gb, 2, perms, zk::ZkRam::Mode::kLinearScan), InfeasibleError);
}

TEST(BalancedSample, TamperedRamReadIsCaught) {
  struct Tamper : ProverStrategy {
    int seen = 0;
    Fp on_input(const char* site, std::uint64_t, Fp honest) override {
      std::string_view v(site);
      if (v != "ram-select" && v != "ram-lookup-value") return honest;
      return seen++ == 3 ? honest + Fp(2) : honest;
    }
  };
  for (auto mode : {zk::ZkRam::Mode::kLinearScan, zk::ZkRam::Mode::kLookup}) {
    Tamper t;
    Session s(seed_from_u64(5), &t);
    auto g = random_groups(30, 9);
    auto gb = commit_groups(s, g);
    std::uint64_t na = std::count(g.begin(), g.end(), Group::kA);
    auto perms = verifier_permutations(seed_from_u64(3), na, g.size() - na);
    EXPECT_THROW(
        {
          auto bits = balanced_sample(s, gb, 4, perms, mode);
          for (auto& b : bits) s.open(b.value());
          s.flush();
        },
        SoundnessError);
  }
}

TEST(Audit, HonestDeploymentPasses) {
  const auto& d = honest_deployment();
  ASSERT_TRUE(d.cert.certified) << d.cert.reason;
  ASSERT_NE(d.model.thresholds[0], d.model.fpc.pos_inf());
  ASSERT_NE(d.model.thresholds[0], d.model.fpc.neg_inf());
  JsonlLog jl;
  auto tr = d.audit(audit_config(d.cfg), nullptr, nullptr, nullptr, &jl);
  EXPECT_TRUE(tr.pass) << tr.reason;
  EXPECT_EQ(tr.sampled.size(), 2 * d.cfg.nu);
  EXPECT_EQ(tr.correctness_proofs, 2 * d.cfg.nu);
  EXPECT_EQ(tr.consistency_proofs, 2 * d.cfg.nu);
  EXPECT_TRUE(tr.blamed.empty());
  EXPECT_EQ(tr.n, d.cfg.n_queries);
  EXPECT_EQ(tr.n_a + tr.n_b, tr.n);
  EXPECT_FALSE(jl.empty());
}

TEST(Audit, SampleMatchesClearSampler) {
  const auto& d = honest_deployment();
  auto acfg = audit_config(d.cfg);
  auto tr = d.audit(acfg);
  std::vector<Group> g;
  for (const auto& r : d.log()) g.push_back(r.q.group);
  auto clear = sample_indices_clear(g, acfg.nu, verifier_permutations(acfg.verifier_seed, tr.n_a, tr.n_b));
  EXPECT_EQ(tr.sampled, clear);
}

TEST(Audit, FlippedSampledOutcomeFailsConsistencyAndBlamesProvider) {
  const auto& d = honest_deployment();
  auto acfg = audit_config(d.cfg);
  auto first = d.audit(acfg);
  auto log = d.log();
  const auto j = first.sampled.at(3);
  log[j].o ^= 1;
  auto tr = d.audit(acfg, &log);
  EXPECT_FALSE(tr.pass);
  EXPECT_EQ(tr.consistency_failures(), std::vector<std::uint64_t>{j});
  EXPECT_NE(std::find(tr.blamed.begin(), tr.blamed.end(), j), tr.blamed.end());
  auto blame = blame_attestation(log[j], d.client_for(j).receipts().at(j), d.store.at(j), d.keys);
  EXPECT_EQ(blame, Party::kProvider);
}

TEST(Audit, UnsampledTamperGoesUnnoticed) {
  const auto& d = honest_deployment();
  auto acfg = audit_config(d.cfg);
  auto first = d.audit(acfg);
  auto log = d.log();
  std::size_t j = 0;
  while (std::binary_search(first.sampled.begin(), first.sampled.end(), j)) ++j;
  // flip the group-consistent way: keep the tally, change nothing else visible
  log[j].o ^= 1;
  auto tr = d.audit(acfg, &log);
  EXPECT_EQ(tr.sampled, first.sampled);
  EXPECT_TRUE(tr.consistency_failures().empty());
}

TEST(Audit, SwitchedModelFailsCorrectness) {
  // The provider answers with an uncertified model; clients commit to what they saw.
  struct Switch : ProviderBehavior {
    int answer(std::uint64_t, const Query&, std::span<const Fp>, int honest) override { return 1 - honest; }
  };
  auto cfg = small_config();
  Deployment d = setup_deployment(cfg);
  ASSERT_TRUE(d.cert.certified);
  Switch sw;
  d.provider->set_behavior(&sw);
  answer_all(d, client_data(cfg));
  auto tr = d.audit();
  EXPECT_FALSE(tr.pass);
  EXPECT_FALSE(tr.correctness_failures().empty());
  EXPECT_TRUE(tr.consistency_failures().empty());
}

TEST(Audit, WrongModelDigestFails) {
  const auto& d = honest_deployment();
  auto other = d.model;
  other.thresholds[0] += 1;
  auto tr = d.audit(audit_config(d.cfg), nullptr, &other);
  EXPECT_FALSE(tr.pass);
  EXPECT_NE(tr.reason.find("soundness"), std::string::npos) << tr.reason;
}

TEST(Audit, InfeasibleNuFails) {
  const auto& d = honest_deployment();
  auto acfg = audit_config(d.cfg);
  acfg.nu = d.cfg.n_queries;
  auto tr = d.audit(acfg);
  EXPECT_FALSE(tr.pass);
  EXPECT_NE(tr.reason.find("infeasible"), std::string::npos);
  EXPECT_TRUE(tr.sampled.empty());
}

TEST(Audit, FairnessVerdictMatchesClearCheck) {
  const auto& d = honest_deployment();
  std::vector<int> preds;
  for (const auto& r : d.log()) preds.push_back(r.o);
  std::vector<Group> groups;
  for (const auto& r : d.log()) groups.push_back(r.q.group);
  for (auto metric : {Metric::kDemographicParity, Metric::kEqualizedOdds, Metric::kEqualOpportunity,
                      Metric::kPredictiveEquality}) {
    for (Theta th : {Theta{1, 100}, Theta{1, 20}, Theta{1, 5}, Theta{1, 2}}) {
      auto acfg = audit_config(d.cfg);
      acfg.metric = metric;
      acfg.theta = th;
      acfg.nu = 5;
      auto tr = d.audit(acfg);
      bool expect = satisfies(tally(preds, d.labels, groups), metric, th);
      auto oracle = oracle::fair(metric, preds, d.queries, th);
      ASSERT_TRUE(oracle.has_value());
      EXPECT_EQ(*oracle, expect);
      EXPECT_EQ(tr.fair, expect) << metric_name(metric) << " " << th.str() << " " << tr.fairness_reason;
      EXPECT_EQ(tr.pass, expect) << tr.reason;
    }
  }
}

TEST(Audit, LabelMetricsNeedLabels) {
  const auto& d = honest_deployment();
  auto acfg = audit_config(d.cfg);
  acfg.metric = Metric::kEqualizedOdds;
  AuditInput in{&d.model, &d.log(), nullptr};
  AuditPublic pub{d.cert.model_digest, &d.store};
  EXPECT_THROW(run_audit(in, pub, acfg), std::invalid_argument);
}

TEST(Audit, ForgedOpeningRejected) {
  struct Forge : ProverStrategy {
    std::uint64_t target;
    explicit Forge(std::uint64_t t) : target(t) {}
    void on_open(std::uint64_t idx, Fp& v, Fp&) override {
      if (idx == target) v = v + Fp(1);
    }
  };
  const auto& d = honest_deployment();
  for (std::uint64_t t : {0u, 5u, 40u}) {
    Forge f(t);
    auto tr = d.audit(audit_config(d.cfg), nullptr, nullptr, &f);
    EXPECT_FALSE(tr.pass) << t;
  }
}

TEST(Audit, TranscriptIsDeterministic) {
  const auto& d = honest_deployment();
  auto a = d.audit();
  auto b = d.audit();
  EXPECT_EQ(a.transcript_digest, b.transcript_digest);
  EXPECT_EQ(a.summary(false), b.summary(false));
}
