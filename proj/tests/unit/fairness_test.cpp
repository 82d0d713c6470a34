#include <gtest/gtest.h>

#include "oath/fairness.hpp"
#include "support/oracles.hpp"

using namespace oath;

namespace {

LabeledDataset make(const std::vector<std::pair<int, Group>>& rows) {
  LabeledDataset ds;
  for (auto [y, g] : rows) ds.records.push_back({{0.0}, y, g});
  return ds;
}

LabeledDataset random_dataset(Prg& prg, std::size_t n, std::size_t dim = 1) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    r.group = i < 2 ? static_cast<Group>(i) : static_cast<Group>(prg.uniform(2));
    r.label = static_cast<int>(prg.uniform(2));
    r.features.resize(dim);
    for (auto& f : r.features) f = prg.unit();
    ds.records.push_back(r);
  }
  return ds;
}

std::vector<int> random_predictions(Prg& prg, std::size_t n) {
  std::vector<int> p(n);
  for (auto& x : p) x = static_cast<int>(prg.uniform(2));
  return p;
}

}  // namespace

TEST(Rational, ReducesAndCompares) {
  Rational r(6, 8);
  EXPECT_EQ(r.num, 3u);
  EXPECT_EQ(r.den, 4u);
  EXPECT_LT(Rational(1, 3), Rational(1, 2));
  EXPECT_EQ(Rational(2, 4), Rational(1, 2));
  EXPECT_EQ(Rational::abs_diff(1, 2, 0, 2), Rational(1, 2));
  EXPECT_EQ(Rational::abs_diff(1, 3, 2, 6), Rational(0, 1));
  EXPECT_THROW(Rational(1, 0), std::invalid_argument);
}

TEST(Theta, ParseAndBounds) {
  EXPECT_EQ(Theta::parse("1/10"), Theta(1, 10));
  EXPECT_EQ(Theta::parse("1"), Theta(1, 1));
  EXPECT_THROW(Theta::parse("x/2"), std::invalid_argument);
  EXPECT_THROW(Theta(1, 0), std::invalid_argument);
  EXPECT_THROW(Theta(1, (1 << 16) + 1), std::invalid_argument);
  EXPECT_THROW(Theta(3, 2), std::invalid_argument);
  EXPECT_EQ(parse_metric("eopp"), Metric::kEqualOpportunity);
  EXPECT_THROW(parse_metric("xx"), std::invalid_argument);
}

TEST(DemographicParity, Examples) {
  auto ds = make({{0, Group::kA}, {1, Group::kA}, {0, Group::kB}, {1, Group::kB}});
  std::vector<int> all{1, 1, 1, 1};
  EXPECT_EQ(dp_gap(all, ds).values[0], Rational(0, 1));
  std::vector<int> half{1, 0, 0, 0};
  EXPECT_EQ(dp_gap(half, ds).values[0], Rational(1, 2));
  auto only_a = make({{0, Group::kA}});
  std::vector<int> one{1};
  EXPECT_THROW(dp_gap(one, only_a), std::invalid_argument);
}

TEST(EqualizedOdds, Examples) {
  Prg prg(seed_from_u64(1));
  auto ds = random_dataset(prg, 50);
  std::vector<int> perfect;
  for (const auto& r : ds.records) perfect.push_back(r.label);
  for (const auto& g : eo_gaps(perfect, ds).values) EXPECT_EQ(g, Rational(0, 1));
  EXPECT_EQ(eopp_gap(perfect, ds).values[0], Rational(0, 1));
  EXPECT_EQ(pe_gap(perfect, ds).values[0], Rational(0, 1));
  for (const auto& g : eo_conditional_gaps(perfect, ds).values) EXPECT_EQ(g, Rational(0, 1));
  std::vector<int> all(ds.size(), 1);
  EXPECT_EQ(eopp_gap(all, ds).values[0], Rational(0, 1));

  // identical confusion matrices in both groups
  auto sym = make({{1, Group::kA}, {0, Group::kA}, {1, Group::kA}, {1, Group::kB}, {0, Group::kB}, {1, Group::kB}});
  std::vector<int> p{1, 1, 0, 1, 1, 0};
  for (const auto& g : eo_gaps(p, sym).values) EXPECT_EQ(g, Rational(0, 1));

  // FP gap: group a has FP in 1 of 2 records, group b none
  auto c = make({{0, Group::kA}, {1, Group::kA}, {0, Group::kB}, {1, Group::kB}});
  std::vector<int> q{1, 1, 0, 1};
  auto eo = eo_gaps(q, c);
  EXPECT_EQ(eo.values[0], Rational(1, 2));
  EXPECT_EQ(eo.values[1], Rational(0, 1));
  EXPECT_FALSE(eo.within(Theta(1, 4)));
  EXPECT_EQ(eo_conditional_gaps(q, c).values[0], Rational(1, 1));
}

TEST(EqualOpportunity, EmptyConditionRejected) {
  auto ds = make({{0, Group::kA}, {1, Group::kA}, {0, Group::kB}});
  std::vector<int> p{1, 1, 1};
  EXPECT_THROW(eopp_gap(p, ds), std::invalid_argument);
  EXPECT_FALSE(satisfies(tally(p, ds), Metric::kEqualOpportunity, Theta(1, 1)));
}

TEST(Gaps, MatchBruteForceAndAreSymmetric) {
  Prg prg(seed_from_u64(2));
  for (int t = 0; t < 300; ++t) {
    auto ds = random_dataset(prg, 200);
    auto p = random_predictions(prg, ds.size());
    auto swapped = ds.swapped_groups();
    for (Metric m : {Metric::kDemographicParity, Metric::kEqualizedOdds, Metric::kEqualOpportunity,
                     Metric::kPredictiveEquality}) {
      auto r = oracle::rates(m, p, ds);
      auto g = metric_gap(m, p, ds);
      ASSERT_EQ(r.size(), g.values.size());
      for (std::size_t k = 0; k < r.size(); ++k) {
        auto [a, b] = r[k];
        ASSERT_EQ(g.values[k], Rational::abs_diff(a.n, a.d, b.n, b.d));
        // recheck against a double computation
        ASSERT_NEAR(g.values[k].to_double(), std::fabs(double(a.n) / a.d - double(b.n) / b.d), 1e-12);
      }
      auto gs = metric_gap(m, p, swapped);
      for (std::size_t k = 0; k < r.size(); ++k) ASSERT_EQ(g.values[k], gs.values[k]);
      Theta th(prg.uniform(33), 32);
      ASSERT_EQ(satisfies(tally(p, ds), m, th), oracle::fair(m, p, ds, th).value());
      ASSERT_EQ(satisfies(tally(p, ds), m, th), g.within(th));
    }
  }
}

TEST(Postprocess, MatchesMidpointGridOracle) {
  Prg prg(seed_from_u64(3));
  FixedPointConfig fpc;
  int infeasible = 0;
  for (int t = 0; t < 60; ++t) {
    auto ds = random_dataset(prg, 20 + prg.uniform(40), 2);
    auto model = ScoreModel::logreg({2 * prg.unit() - 1, 2 * prg.unit() - 1}, 0);
    std::vector<std::int64_t> scores;
    for (const auto& r : ds.records) scores.push_back(quantized_score(model, r.features, fpc));
    Metric m = static_cast<Metric>(t % 4);
    Theta theta(1 + prg.uniform(8), 16);
    auto ref = oracle::grid_search(scores, ds, m, theta);
    try {
      auto res = postprocess_thresholds(model, ds, theta, m, fpc);
      ASSERT_TRUE(ref.feasible);
      EXPECT_EQ(static_cast<long long>(res.correct), ref.correct);
      EXPECT_EQ(oracle::to_midpoint(res.model.thresholds[0], scores, ds, Group::kA, fpc.pos_inf()), ref.t2[0]);
      EXPECT_EQ(oracle::to_midpoint(res.model.thresholds[1], scores, ds, Group::kB, fpc.pos_inf()), ref.t2[1]);
      auto pred = predict_all(res.model, ds);
      EXPECT_TRUE(metric_gap(m, pred, ds).within(theta));
      EXPECT_EQ(metric_gap(m, pred, ds).values, res.gap.values);
    } catch (const InfeasibleError&) {
      ++infeasible;
      EXPECT_FALSE(ref.feasible);
    } catch (const std::invalid_argument&) {
      // empty conditional subset: the oracle cannot certify anything either
      EXPECT_FALSE(ref.feasible);
    }
  }
  EXPECT_LT(infeasible, 60);
}

TEST(Postprocess, ResultAlwaysWithinTheta) {
  Prg prg(seed_from_u64(4));
  for (int t = 0; t < 100; ++t) {
    auto ds = generate_synthetic({.n = 300, .dim = 3, .seed = 100 + static_cast<std::uint64_t>(t)});
    auto model = train_logreg(ds, {.epochs = 3, .seed = static_cast<std::uint64_t>(t)});
    Theta theta(1 + prg.uniform(10), 40);
    auto res = postprocess_thresholds(model, ds, theta, Metric::kDemographicParity);
    auto pred = predict_all(res.model, ds);
    ASSERT_TRUE(dp_gap(pred, ds).within(theta)) << t;
  }
}

TEST(Postprocess, ThetaOneIsUnconstrainedOptimum) {
  auto ds = generate_synthetic({.n = 200, .dim = 3, .seed = 5});
  auto model = train_logreg(ds, {.epochs = 20});
  auto res = postprocess_thresholds(model, ds, Theta(1, 1), Metric::kDemographicParity);
  // independent per-group optimum
  FixedPointConfig fpc;
  std::uint64_t best_total = 0;
  for (Group g : {Group::kA, Group::kB}) {
    std::uint64_t best = 0;
    std::vector<std::int64_t> cands{fpc.pos_inf()};
    for (const auto& r : ds.records)
      if (r.group == g) cands.push_back(quantized_score(model, r.features, fpc));
    for (auto t : cands) {
      std::uint64_t ok = 0;
      for (const auto& r : ds.records)
        if (r.group == g) ok += ((quantized_score(model, r.features, fpc) >= t) == (r.label == 1));
      best = std::max(best, ok);
    }
    best_total += best;
  }
  EXPECT_EQ(res.correct, best_total);
}

TEST(Postprocess, AlreadyFairUniformPairKept) {
  // identical score distributions and labels in both groups
  LabeledDataset ds;
  for (int i = 0; i < 10; ++i)
    for (Group g : {Group::kA, Group::kB}) ds.records.push_back({{i / 10.0}, i >= 5 ? 1 : 0, g});
  auto model = ScoreModel::logreg({1.0}, 0.0);
  auto res = postprocess_thresholds(model, ds, Theta(0, 1), Metric::kDemographicParity);
  EXPECT_EQ(res.model.thresholds[0], res.model.thresholds[1]);
  EXPECT_EQ(res.correct, ds.size());
}

TEST(Postprocess, Errors) {
  LabeledDataset ds;
  ds.records = {{{0.1}, 1, Group::kA}, {{0.1}, 0, Group::kA}, {{0.2}, 1, Group::kB}, {{0.3}, 0, Group::kB}};
  auto model = ScoreModel::logreg({1.0}, 0.0);
  EXPECT_THROW(postprocess_thresholds(model, ds, Theta(1, 2), Metric::kDemographicParity), std::invalid_argument);
  // EO can be infeasible: group a needs FN = 0, which forces FP_a / N_a = 1/2,
  // while FP_b / 3 never equals 1/2.
  LabeledDataset eo;
  eo.records = {{{0.9}, 0, Group::kA}, {{0.1}, 1, Group::kA}, {{0.2}, 0, Group::kB},
                {{0.3}, 0, Group::kB}, {{0.4}, 0, Group::kB}};
  EXPECT_THROW(postprocess_thresholds(model, eo, Theta(0, 1), Metric::kEqualizedOdds), InfeasibleError);
  EXPECT_NO_THROW(postprocess_thresholds(model, eo, Theta(0, 1), Metric::kDemographicParity));
}
