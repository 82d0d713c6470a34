#include <gtest/gtest.h>

#include <sstream>

#include "oath/config.hpp"

using namespace oath;

namespace {

KeyValues kv_of(const std::string& s) {
  std::istringstream in(s);
  return parse_key_values(in);
}

const char* kSeeds =
    "seed.data = 1\nseed.train = 2\nseed.clients = 3\nseed.dealer = 4\n"
    "seed.verifier = 5\nseed.provider = 6\nseed.attack = 7\n";

}  // namespace

TEST(Config, ParsesKeysCommentsAndBlanks) {
  auto kv = kv_of("# header\n\n a = 1 # trailing\nb.c=x y\n");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv["a"], "1");
  EXPECT_EQ(kv["b.c"], "x y");
}

TEST(Config, RejectsDuplicatesAndMalformedLines) {
  EXPECT_THROW(kv_of("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(kv_of("just words\n"), ConfigError);
  EXPECT_THROW(kv_of("bad key = 1\n"), ConfigError);
}

TEST(Config, SeedsAreMandatory) {
  EXPECT_THROW(RunConfig::from_key_values(kv_of("nu = 5\n")), ConfigError);
  EXPECT_NO_THROW(RunConfig::from_key_values(kv_of("nu = 5\n"), false));
  auto c = RunConfig::from_key_values(kv_of(kSeeds));
  EXPECT_EQ(c.pipeline.data_seed, 1u);
  EXPECT_EQ(c.pipeline.provider_seed, 6u);
  EXPECT_EQ(c.attack_seed, 7u);
}

TEST(Config, FieldsAndAttack) {
  auto c = RunConfig::from_key_values(kv_of(std::string(kSeeds) +
                                            "theta = 1/20\nmetric = eo\nnu = 42\nmodel = ffnn\nhidden = 8,4\n"
                                            "fixed.frac_bits = 12\nattack = record-tamper:p_a=0.25\n"));
  EXPECT_EQ(c.pipeline.theta.num, 1u);
  EXPECT_EQ(c.pipeline.theta.den, 20u);
  EXPECT_EQ(c.pipeline.metric, Metric::kEqualizedOdds);
  EXPECT_EQ(c.pipeline.nu, 42u);
  EXPECT_EQ(c.pipeline.hidden, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(c.pipeline.fpc.fractional_bits, 12);
  ASSERT_TRUE(c.attack.has_value());
  EXPECT_EQ(c.attack->kind, AttackKind::kRecordTamper);
  EXPECT_EQ(c.attack->seed, 7u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(RunConfig::from_key_values(kv_of(std::string(kSeeds) + "colour = red\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values(kv_of(std::string(kSeeds) + "nu = -3\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values(kv_of(std::string(kSeeds) + "data.holdout = 1.5\n")), ConfigError);
  EXPECT_ANY_THROW(RunConfig::from_key_values(kv_of(std::string(kSeeds) + "theta = 2/1x\n")));
}

TEST(Config, SeedOverrideReplacesEverySeed) {
  auto a = RunConfig::from_key_values(kv_of(kSeeds));
  auto b = a;
  a.override_seeds(99);
  b.override_seeds(99);
  EXPECT_EQ(a.pipeline.data_seed, b.pipeline.data_seed);
  EXPECT_NE(a.pipeline.data_seed, 1u);
  EXPECT_NE(a.pipeline.data_seed, a.pipeline.train_seed);
  b.override_seeds(100);
  EXPECT_NE(a.pipeline.verifier_seed, b.pipeline.verifier_seed);
}

TEST(Config, CsvRoundTripAndSplit) {
  PipelineConfig p;
  p.calibration_size = 300;
  auto ds = calibration_data(p);
  const std::string path = ::testing::TempDir() + "/oath_cfg_rt.csv";
  save_dataset_csv(path, ds);
  auto back = load_dataset_csv(path);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.records[i].group, ds.records[i].group);
    EXPECT_EQ(back.records[i].label, ds.records[i].label);
    for (std::size_t k = 0; k < ds.records[i].features.size(); ++k) EXPECT_NEAR(back.records[i].features[k], ds.records[i].features[k], 1e-12);
  }
  auto c = RunConfig::from_key_values(kv_of(std::string(kSeeds) + "n_queries = 50\n"));
  auto [cal, cli] = c.datasets();
  EXPECT_EQ(cal.size(), c.pipeline.calibration_size);
  EXPECT_EQ(cli.size(), 50u);
}
