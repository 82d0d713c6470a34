#pragma once

// Flat key = value run configuration.
//
// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
// ignored; keys are [A-Za-z0-9_.]+; values run to end of line with surrounding
// blanks trimmed. Duplicate keys are an error.

#include <charconv>
#include <fstream>
#include <numeric>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "oath/adversary.hpp"
#include "oath/analysis.hpp"
#include "oath/dataset.hpp"
#include "oath/fairness.hpp"
#include "oath/pipeline.hpp"

namespace oath {

using KeyValues = std::map<std::string, std::string>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty() || k.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.") != std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": bad key '" + k + "'");
    if (!kv.emplace(k, v).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + k + "'");
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  return parse_key_values(in);
}

inline constexpr const char* kSeedKeys[] = {"seed.data",     "seed.train",    "seed.clients", "seed.dealer",
                                            "seed.verifier", "seed.provider", "seed.attack"};

struct RunConfig {
  PipelineConfig pipeline;
  // data source: synthetic generator, or a CSV split into calibration and client parts
  std::string data_path;
  Schema schema = default_schema();
  double holdout = 0.5;  // CSV fraction used as client queries
  std::optional<AttackSpec> attack;
  std::uint64_t attack_seed = 0;
  std::string out = "out";

  /// Every seed replaced by one derived from `master`.
  void override_seeds(std::uint64_t master) {
    auto d = [&](const char* role) { return trial_seed(master, role, 0); };
    pipeline.data_seed = d("data");
    pipeline.train_seed = d("train");
    pipeline.client_seed = d("clients");
    pipeline.dealer_seed = d("dealer");
    pipeline.verifier_seed = d("verifier");
    pipeline.provider_seed = d("provider");
    attack_seed = d("attack");
    if (attack) attack->seed = attack_seed;
  }

  static RunConfig from_key_values(const KeyValues& kv, bool require_seeds = true) {
    RunConfig c;
    std::map<std::string, bool> used;
    auto get = [&](const std::string& k) -> std::optional<std::string> {
      auto it = kv.find(k);
      if (it == kv.end()) return std::nullopt;
      used[k] = true;
      return it->second;
    };
    auto as_u64 = [](const std::string& k, const std::string& v) {
      std::uint64_t u = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), u);
      if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("config: " + k + " must be a non-negative integer");
      return u;
    };
    auto as_double = [](const std::string& k, const std::string& v) {
      try {
        std::size_t used_chars = 0;
        double d = std::stod(v, &used_chars);
        if (used_chars == v.size()) return d;
      } catch (const std::exception&) {
      }
      throw ConfigError("config: " + k + " must be a number");
    };
    auto u64 = [&](const char* k, auto& field) {
      if (auto v = get(k)) field = static_cast<std::remove_reference_t<decltype(field)>>(as_u64(k, *v));
    };
    auto dbl = [&](const char* k, double& field) {
      if (auto v = get(k)) field = as_double(k, *v);
    };

    auto& p = c.pipeline;
    u64("synthetic.dim", p.population.dim);
    dbl("synthetic.fraction_a", p.population.fraction_a);
    dbl("synthetic.base_rate_a", p.population.base_rate_a);
    dbl("synthetic.base_rate_b", p.population.base_rate_b);
    dbl("synthetic.separation", p.population.separation);
    dbl("synthetic.group_shift", p.population.group_shift);
    dbl("synthetic.noise", p.population.noise);
    u64("calibration_size", p.calibration_size);
    if (auto v = get("model")) p.model = *v;
    if (auto v = get("hidden")) {
      p.hidden.clear();
      std::stringstream ss(*v);
      std::string part;
      while (std::getline(ss, part, ',')) p.hidden.push_back(as_u64("hidden", part));
    }
    dbl("train.learning_rate", p.train.learning_rate);
    u64("train.epochs", p.train.epochs);
    u64("train.batch_size", p.train.batch_size);
    dbl("train.l2", p.train.l2);
    if (auto v = get("fixed.frac_bits")) p.fpc.fractional_bits = static_cast<int>(as_u64("fixed.frac_bits", *v));
    if (auto v = get("fixed.int_bits")) p.fpc.integer_bits = static_cast<int>(as_u64("fixed.int_bits", *v));
    if (auto v = get("metric")) p.metric = parse_metric(*v);
    if (auto v = get("theta")) p.theta = Theta::parse(*v);
    u64("nu", p.nu);
    u64("n_queries", p.n_queries);
    u64("n_clients", p.n_clients);
    dbl("pp_confidence", p.pp_confidence);

    if (auto v = get("data.path")) c.data_path = *v;
    KeyValues schema_kv;
    for (const char* k : {"label", "sensitive", "group_a", "group_b", "positive_label", "features"})
      if (auto v = get(std::string("data.") + k)) schema_kv[k] = *v;
    if (!schema_kv.empty()) c.schema = Schema::from_kv(schema_kv);
    dbl("data.holdout", c.holdout);
    if (!(c.holdout > 0 && c.holdout < 1)) throw ConfigError("config: data.holdout must lie in (0, 1)");

    std::uint64_t* seeds[] = {&p.data_seed,     &p.train_seed,    &p.client_seed, &p.dealer_seed,
                              &p.verifier_seed, &p.provider_seed, &c.attack_seed};
    for (std::size_t i = 0; i < std::size(kSeedKeys); ++i) {
      if (auto v = get(kSeedKeys[i])) *seeds[i] = as_u64(kSeedKeys[i], *v);
      else if (require_seeds) throw ConfigError(std::string("config: missing mandatory key ") + kSeedKeys[i]);
    }
    if (auto v = get("attack"); v && *v != "none") {
      c.attack = AttackSpec::parse(*v);
      if (v->find("seed=") == std::string::npos) c.attack->seed = c.attack_seed;
    }
    if (auto v = get("out")) c.out = *v;

    for (const auto& [k, v] : kv)
      if (!used.count(k)) throw ConfigError("config: unknown key '" + k + "'");
    p.fpc.validate();
    if (p.n_queries == 0) throw ConfigError("config: n_queries must be positive");
    if (p.n_clients == 0) throw ConfigError("config: n_clients must be positive");
    return c;
  }

  /// Calibration set and client pool: synthetic draws, or a seeded split of the CSV.
  std::pair<LabeledDataset, LabeledDataset> datasets() const {
    if (data_path.empty()) return {calibration_data(pipeline), client_data(pipeline)};
    std::ifstream in(data_path);
    if (!in) throw ConfigError("cannot read dataset " + data_path);
    auto all = load_csv(in, schema).dataset;
    all.validate();
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    Prg prg(seed_from_u64(pipeline.data_seed), 0x5b1);
    prg.shuffle(idx);
    const auto n_hold = static_cast<std::size_t>(holdout * static_cast<double>(all.size()));
    LabeledDataset cal, cli;
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_hold ? cli : cal).records.push_back(all.records[idx[k]]);
    // clients resample the held-out split to n_queries
    LabeledDataset q;
    Prg qp(seed_from_u64(pipeline.client_seed), 0x5b2);
    if (cli.empty()) throw ConfigError("dataset: held-out split is empty");
    for (std::size_t i = 0; i < pipeline.n_queries; ++i) q.records.push_back(cli.records[qp.uniform(cli.size())]);
    return {cal, q};
  }
};

}  // namespace oath
