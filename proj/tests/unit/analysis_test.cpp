#include <gtest/gtest.h>

#include <sstream>

#include "oath/analysis.hpp"

using namespace oath;

namespace {

// Three significant figures.
void expect_sig3(double got, double want) { EXPECT_NEAR(got / want, 1.0, 5e-3) << got << " vs " << want; }

double bisect_epsilon(double p, std::uint64_t nu) {
  double lo = 0, hi = 2;
  for (int i = 0; i < 200; ++i) {
    double mid = (lo + hi) / 2;
    (1 - std::pow(1 - mid / 2, static_cast<double>(nu)) < p ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}

PipelineConfig mc_config() {
  PipelineConfig c;
  c.calibration_size = 1500;
  c.n_queries = 1000;
  c.theta = Theta{1, 4};
  return c;
}

}  // namespace

TEST(CatchBound, PinnedEvasionProbabilities) {
  expect_sig3(1 - catch_bound(0.01, 1000), 6.65e-3);
  expect_sig3(evasion_probability(0.01, 3800), 5.34e-9);
  expect_sig3(evasion_probability(0.005, 3800), 7.39e-5);
  expect_sig3(evasion_probability(0.0025, 3800), 8.62e-3);
}

TEST(CatchBound, EvasionTableMatchesPlottedCoordinates) {
  const std::vector<std::pair<double, double>> fig{{0.00625, 6.834047635509879e-06},
                                                   {0.0125, 4.499231350885441e-11},
                                                   {0.025, 1.7417921715500588e-21},
                                                   {0.05, 1.6502116715101567e-42},
                                                   {0.1, 2.2371757216712917e-85}};
  auto table = evasion_table(3800);
  ASSERT_EQ(table.rows.size(), evasion_epsilons().size());
  for (auto [eps, ev] : fig) {
    auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const ProfileRow& r) { return r.epsilon == eps; });
    ASSERT_NE(it, table.rows.end());
    EXPECT_NEAR(it->evasion / ev, 1.0, 1e-9);
    EXPECT_EQ(it->nu, 3800u);
  }
}

TEST(CatchBound, MatchesDirectFormulaAndEdges) {
  EXPECT_EQ(catch_bound(2.0, 1), 1.0);
  EXPECT_EQ(catch_bound(2.0, 77), 1.0);
  EXPECT_NEAR(catch_bound(0.2, 100), 1 - std::pow(0.9, 100), 1e-15);
  EXPECT_NEAR(catch_bound(1.0, 1), 0.5, 1e-15);
  // tiny epsilon: relative accuracy where the naive form cancels
  const double b = catch_bound(1e-12, 3);
  EXPECT_NEAR(b / (1.5e-12), 1.0, 1e-9);
  EXPECT_THROW(catch_bound(0.0, 10), std::invalid_argument);
  EXPECT_THROW(catch_bound(2.5, 10), std::invalid_argument);
  EXPECT_THROW(catch_bound(0.1, 0), std::invalid_argument);
}

TEST(CatchBound, MonotoneInBothArguments) {
  Prg prg(seed_from_u64(3), 0);
  for (int i = 0; i < 2000; ++i) {
    double e1 = 2 * prg.unit() + 1e-9, e2 = 2 * prg.unit() + 1e-9;
    e1 = std::min(e1, 2.0);
    e2 = std::min(e2, 2.0);
    std::uint64_t n1 = 1 + prg.uniform(5000), n2 = 1 + prg.uniform(5000);
    if (e1 > e2) std::swap(e1, e2);
    if (n1 > n2) std::swap(n1, n2);
    EXPECT_LE(catch_bound(e1, n1), catch_bound(e2, n1));
    EXPECT_LE(catch_bound(e1, n1), catch_bound(e1, n2));
    EXPECT_GE(catch_bound(e1, n1), 0.0);
    EXPECT_LE(catch_bound(e2, n2), 1.0);
  }
}

TEST(EpsilonRegion, ClosedFormsAndBisection) {
  auto r = epsilon_region(0.1, 0.5, {1});
  EXPECT_NEAR(r[0].epsilon, 1.0, 1e-15);
  EXPECT_NEAR(r[0].upper, 1.1, 1e-15);
  auto near1 = epsilon_region(0.0, 1 - 1e-15, {5});
  EXPECT_NEAR(near1[0].epsilon, 2.0, 1e-2);
  for (std::uint64_t nu : {10u, 100u, 1000u, 3800u}) {
    auto pts = epsilon_region(0.05, 0.99, {nu});
    EXPECT_NEAR(pts[0].epsilon, bisect_epsilon(0.99, nu), 1e-10);
    EXPECT_NEAR(catch_bound(pts[0].epsilon, nu), 0.99, 1e-12);
  }
  EXPECT_THROW(epsilon_region(0.1, 1.0, {5}), std::invalid_argument);
  EXPECT_THROW(epsilon_region(0.1, 0.0, {5}), std::invalid_argument);
}

TEST(EpsilonRegion, CsvHasOneRowPerNu) {
  std::ostringstream os;
  write_epsilon_region_csv(os, 0.1, 0.9, epsilon_region(0.1, 0.9, {10, 20, 30}));
  std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
  EXPECT_EQ(s.rfind("nu,epsilon,theta,p_catch,upper\n", 0), 0u);
}

TEST(Wilson, KnownIntervals) {
  auto a = wilson_interval(5, 10);
  EXPECT_NEAR(a.lo, 0.23659309, 1e-6);
  EXPECT_NEAR(a.hi, 0.76340691, 1e-6);
  auto b = wilson_interval(0, 10);
  EXPECT_NEAR(b.lo, 0.0, 1e-12);
  EXPECT_NEAR(b.hi, 0.27753279, 1e-6);
  auto c = wilson_interval(10, 10);
  EXPECT_NEAR(c.lo, 0.72246721, 1e-6);
  EXPECT_NEAR(c.hi, 1.0, 1e-12);
}

TEST(ClearAudit, AgreesWithCircuitOnTamperedLogs) {
  auto cfg = mc_config();
  cfg.n_queries = 400;
  cfg.nu = 15;
  Deployment d = run_phases_1_2(cfg);
  for (std::uint64_t t = 0; t < 4; ++t) {
    AttackSpec s = AttackSpec::parse("record-tamper:p_a=0.05,p_b=0.05");
    s.seed = t;
    auto tr = apply_record_tamper(d.log(), s);
    ClearAudit ca;
    for (const auto& r : tr.log) {
      ca.groups.push_back(r.q.group);
      ca.outcomes.push_back(r.o);
    }
    ca.labels = d.labels;
    ca.bad = tr.flipped;
    auto acfg = audit_config(cfg);
    acfg.verifier_seed = seed_from_u64(t);
    EXPECT_EQ(clear_audit(ca, acfg).pass, d.audit(acfg, &tr.log).pass);
  }
}

TEST(MonteCarlo, ZeroFlipIsNeverCaught) {
  MonteCarloConfig mc{AttackSpec::parse("record-tamper:p_a=0,p_b=0"), 50, 100, 1, 2};
  auto row = monte_carlo_catch(mc_config(), mc);
  EXPECT_EQ(row.caught, 0u);
  EXPECT_EQ(row.spot_disagreements, 0u);
  EXPECT_EQ(row.epsilon_realized, 0.0);
}

TEST(MonteCarlo, FullGroupFlipAlwaysCaught) {
  MonteCarloConfig mc{AttackSpec::parse("record-tamper:p_a=1,p_b=0"), 1, 100, 2, 2};
  auto row = monte_carlo_catch(mc_config(), mc);
  EXPECT_EQ(row.caught, row.trials);
  EXPECT_EQ(row.spot_disagreements, 0u);
}

TEST(MonteCarlo, RandomFlipsMeetTheBound) {
  MonteCarloConfig mc{AttackSpec::parse("record-tamper:p_a=0.05,p_b=0"), 100, 300, 3, 2};
  auto row = monte_carlo_catch(mc_config(), mc);
  // p_a = 0.05: every group-a sample is bad with probability 0.05
  const double expected = 1 - std::pow(0.95, 100);
  const double sigma = std::sqrt(expected * (1 - expected) / row.trials);
  EXPECT_GE(row.empirical_catch, expected - 3 * sigma - 1e-3);
  EXPECT_TRUE(row.meets_bound());
  EXPECT_GT(row.epsilon_realized, 0.0);
  EXPECT_EQ(row.spot_disagreements, 0u);
  EXPECT_LE(row.ci.lo, row.empirical_catch);
  EXPECT_GE(row.ci.hi, row.empirical_catch);
}

TEST(MonteCarlo, ReduceModeRealizesNominalEpsilon) {
  MonteCarloConfig mc{AttackSpec::parse("record-tamper:p_a=0.05,p_b=0.05,mode=reduce"), 50, 200, 4, 1};
  auto row = monte_carlo_catch(mc_config(), mc);
  EXPECT_NEAR(row.epsilon_realized, 0.1, 0.01);
  EXPECT_TRUE(row.meets_bound());
}

TEST(MonteCarlo, ModelSwitchAndDataForge) {
  auto cfg = mc_config();
  MonteCarloConfig sw{AttackSpec::parse("model-switch:rate=1"), 20, 50, 5, 1};
  auto r1 = monte_carlo_catch(cfg, sw);
  EXPECT_EQ(r1.caught, r1.trials);
  EXPECT_EQ(r1.spot_disagreements, 0u);

  cfg.theta = Theta{1, 20};
  MonteCarloConfig df{AttackSpec::parse("data-forge"), 20, 50, 6, 1};
  auto r2 = monte_carlo_catch(cfg, df);
  EXPECT_EQ(r2.caught, r2.trials);
  EXPECT_GT(r2.epsilon_realized, 0.0);
  EXPECT_EQ(r2.spot_disagreements, 0u);
}

TEST(MonteCarlo, DeterministicUnderSeed) {
  MonteCarloConfig mc{AttackSpec::parse("record-tamper:p_a=0.02,p_b=0.02"), 30, 100, 9, 0};
  auto a = monte_carlo_catch(mc_config(), mc);
  auto b = monte_carlo_catch(mc_config(), mc);
  EXPECT_EQ(a.caught, b.caught);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(SoundnessProfile, CsvAndJson) {
  auto p = evasion_table();
  std::ostringstream os;
  p.write_csv(os);
  std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + static_cast<long>(p.rows.size()));
  EXPECT_EQ(p.to_json().size(), p.rows.size());
}
