// oath: run the certify / answer / audit phases, attacks and bound tables.
//
// Exit codes: 0 success (Certified, Pass), 2 negative verdict (Rejected,
// Fail), 1 usage, configuration or I/O error. Verdicts and errors are printed
// as one JSON object on stdout / stderr.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "oath/adversary.hpp"
#include "oath/analysis.hpp"
#include "oath/audit.hpp"
#include "oath/certify.hpp"
#include "oath/config.hpp"
#include "oath/pipeline.hpp"
#include "oath/queryauth.hpp"

namespace fs = std::filesystem;
using namespace oath;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNegative = 2;

struct PhaseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  std::string metric, theta, attack;
  std::optional<std::uint64_t> nu;
  std::optional<std::uint64_t> trials;
  std::vector<std::uint64_t> bound_nus;
  std::vector<double> bound_eps;
  double p_catch = 0.99;
  bool no_timing = false;
};

RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  RunConfig c = RunConfig::from_key_values(load_key_values(o.config));
  if (o.seed_override) c.override_seeds(*o.seed_override);
  if (!o.metric.empty()) c.pipeline.metric = parse_metric(o.metric);
  if (!o.theta.empty()) c.pipeline.theta = Theta::parse(o.theta);
  if (o.nu) c.pipeline.nu = *o.nu;
  if (!o.attack.empty()) {
    c.attack = AttackSpec::parse(o.attack);
    if (o.attack.find("seed=") == std::string::npos) c.attack->seed = c.attack_seed;
  }
  if (!o.out.empty()) c.out = o.out;
  fs::create_directories(c.out);
  return c;
}

std::string path_in(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

std::string require(const RunConfig& c, const std::string& name, const std::string& producer, const std::string& what) {
  auto p = path_in(c, name);
  if (!fs::exists(p)) throw PhaseError("missing " + what + " (" + p + "); run '" + producer + "' first");
  return p;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(is);
}

void emit(const nlohmann::json& j) { std::cout << j.dump() << std::endl; }

// ---------------------------------------------------------------------------

int cmd_gen_data(const Options& o) {
  RunConfig c = load_config(o);
  auto [cal, cli] = c.datasets();
  save_dataset_csv(path_in(c, "calibration.csv"), cal);
  save_dataset_csv(path_in(c, "clients.csv"), cli);
  emit({{"status", "ok"}, {"calibration", cal.size()}, {"clients", cli.size()}, {"out", c.out}});
  return kExitOk;
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o);
  auto d_val = load_dataset_csv(require(c, "calibration.csv", "gen-data", "calibration data"));
  auto sm = train_model(c.pipeline, d_val);
  auto tm = honest_postprocess(c.pipeline, sm, d_val);
  save_model(path_in(c, "model.bin"), tm);
  write_json(path_in(c, "model.json"), model_to_json(tm));
  auto preds = predict_all(tm, d_val);
  auto g = gaps(tally(preds, d_val), c.pipeline.metric);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == d_val.records[i].label;
  emit({{"status", "ok"},
        {"model", c.pipeline.model},
        {"thresholds", tm.thresholds},
        {"gap", g.max().to_double()},
        {"accuracy", static_cast<double>(correct) / static_cast<double>(preds.size())},
        {"digest", model_digest(tm).hex()}});
  return kExitOk;
}

int cmd_certify(const Options& o) {
  RunConfig c = load_config(o);
  auto d_val = load_dataset_csv(require(c, "calibration.csv", "gen-data", "calibration data"));
  auto tm = load_model(require(c, "model.bin", "train", "model"));
  JsonlLog log;
  auto res = certify(tm, d_val, certify_config(c.pipeline), nullptr, &log);
  log.save(path_in(c, "certify.jsonl"));
  write_json(path_in(c, "certification.json"), res.to_json(!o.no_timing));
  emit({{"status", res.certified ? "certified" : "rejected"}, {"reason", res.reason}, {"digest", res.model_digest.hex()}});
  return res.certified ? kExitOk : kExitNegative;
}

Deployment load_deployment(const RunConfig& c, const std::string& phase) {
  Deployment d;
  d.cfg = c.pipeline;
  d.model = load_model(require(c, "model.bin", "train", "model"));
  auto cert_path = path_in(c, "certification.json");
  if (!fs::exists(cert_path))
    throw PhaseError(phase + ": missing certification digest (" + cert_path + "); run 'certify' first");
  d.cert = CertificationResult::from_json(read_json(cert_path));
  if (!d.cert.certified) throw PhaseError(phase + ": the model was not certified: " + d.cert.reason);
  attach_parties(d);
  return d;
}

void save_phase2(const RunConfig& c, const Deployment& d) {
  save_query_log(path_in(c, "query_log.bin"), d.log());
  d.store.save(path_in(c, "commitments.jsonl"));
  write_json(path_in(c, "keys.json"), d.keys.to_json());
  save_dataset_csv(path_in(c, "queries.csv"), d.queries);
  // client receipts, one per store index, in the query-log format
  std::vector<QueryRecord> receipts;
  for (std::size_t i = 0; i < d.store.size(); ++i) {
    const auto& rc = d.client_for(i).receipts().at(i);
    receipts.push_back({i, d.store.at(i).client_id, rc.q, rc.r, rc.o, d.log()[i].sig_p, rc.sig_c,
                        query_commitment(rc.q, rc.r, rc.o)});
  }
  save_query_log(path_in(c, "receipts.bin"), receipts);
}

int cmd_answer(const Options& o) {
  RunConfig c = load_config(o);
  Deployment d = load_deployment(c, "answer");
  auto queries = load_dataset_csv(require(c, "clients.csv", "gen-data", "client data"));
  if (queries.size() > c.pipeline.n_queries) queries.records.resize(c.pipeline.n_queries);
  QueryAuthStats st;
  answer_all(d, queries, &st);
  save_phase2(c, d);
  nlohmann::json j{{"status", "ok"},          {"queries", st.queries},           {"signatures", st.signatures},
                   {"verifications", st.verifications}, {"hashes", st.hashes}, {"coin_rounds", st.coin_rounds}};
  write_json(path_in(c, "answer.json"), j);
  emit(j);
  return kExitOk;
}

nlohmann::json blame_report(const AuditTranscript& tr, const std::vector<QueryRecord>& log,
                            const std::vector<QueryRecord>& receipts, const CommitmentStore& store, const KeyRegistry& keys) {
  nlohmann::json out = nlohmann::json::array();
  for (auto j : tr.consistency_failures()) {
    const auto& r = receipts.at(j);
    Client::Receipt rc{r.q, r.r, r.o, r.sig_c};
    out.push_back({{"index", j}, {"party", party_name(blame_attestation(log.at(j), rc, store.at(j), keys))}});
  }
  return out;
}

int finish_audit(const RunConfig& c, const Options& o, const AuditTranscript& tr, JsonlLog& log, nlohmann::json blame,
                 nlohmann::json extra = nlohmann::json::object()) {
  log.save(path_in(c, "audit.jsonl"));
  auto summary = tr.summary(!o.no_timing);
  summary["blame"] = blame;
  summary.update(extra);
  write_json(path_in(c, "audit.json"), summary);
  emit({{"status", tr.pass ? "pass" : "fail"}, {"reason", tr.reason}, {"blamed", tr.blamed}, {"blame", blame}});
  return tr.pass ? kExitOk : kExitNegative;
}

int cmd_audit(const Options& o) {
  RunConfig c = load_config(o);
  Deployment d = load_deployment(c, "audit");
  auto log = load_query_log(require(c, "query_log.bin", "answer", "query log"));
  auto store = CommitmentStore::load(require(c, "commitments.jsonl", "answer", "commitment store"));
  auto keys = KeyRegistry::from_json(read_json(require(c, "keys.json", "answer", "key registry")));
  auto receipts = load_query_log(require(c, "receipts.bin", "answer", "client receipts"));
  auto queries = load_dataset_csv(require(c, "queries.csv", "answer", "query labels"));
  std::vector<int> labels;
  for (const auto& r : queries.records) labels.push_back(r.label);
  if (log.size() != store.size()) throw PhaseError("audit: query log and commitment store differ in size");

  JsonlLog jl;
  AuditInput in{&d.model, &log, &labels};
  AuditPublic pub{d.cert.model_digest, &store};
  auto tr = run_audit(in, pub, audit_config(c.pipeline), nullptr, &jl);
  return finish_audit(c, o, tr, jl, blame_report(tr, log, receipts, store, keys));
}

/// Runs all phases in memory under the configured attack.
int cmd_attack(const Options& o) {
  RunConfig c = load_config(o);
  if (!c.attack) throw ConfigError("attack: no attack configured (set 'attack' or pass --attack)");
  const AttackSpec spec = *c.attack;
  const auto& p = c.pipeline;

  if (o.trials) {
    MonteCarloConfig mc{spec, p.nu, *o.trials, c.attack_seed, 2};
    auto row = monte_carlo_catch(p, mc);
    auto j = row.to_json();
    j["attack"] = spec.str();
    j["meets_bound"] = row.meets_bound();
    write_json(path_in(c, "attack_mc.json"), j);
    emit(j);
    return row.spot_disagreements == 0 ? kExitOk : kExitError;
  }

  auto [cal, cli] = c.datasets();
  Deployment d;
  std::vector<QueryRecord> presented;
  std::unique_ptr<ProverStrategy> prover;
  nlohmann::json extra{{"attack", spec.str()}};
  switch (spec.kind) {
    case AttackKind::kDataForge: {
      ThresholdedModel unfair(train_model(p, cal), p.fpc, {0, 0});
      auto forged = apply_data_forge(cal, unfair, p.metric, p.theta, spec.seed);
      extra["forged_calibration_size"] = forged.size();
      d = deploy(p, forged, unfair);
      break;
    }
    default: {
      ScoreModel sm = train_model(p, cal);
      d = deploy(p, cal, honest_postprocess(p, sm, cal));
    }
  }
  write_json(path_in(c, "certification.json"), d.cert.to_json(!o.no_timing));
  if (!d.cert.certified) {
    emit({{"status", "rejected"}, {"reason", d.cert.reason}});
    return kExitNegative;
  }
  if (spec.kind == AttackKind::kModelSwitch) apply_model_switch(d, divergent_model(d.model), spec);
  std::shared_ptr<CommitmentTamper> ct;
  if (spec.kind == AttackKind::kCommitmentTamper) d.set_client_hook(std::make_unique<CommitmentTamper>(spec.commit_rate, spec.seed));
  answer_all(d, cli);
  save_phase2(c, d);
  presented = d.log();
  if (spec.kind == AttackKind::kRecordTamper) {
    auto t = apply_record_tamper(d.log(), spec);
    presented = t.log;
    extra["flipped"] = t.flipped.size();
  }
  if (spec.kind == AttackKind::kMacForge) prover = std::make_unique<MacForge>(spec.open_index, spec.seed);

  JsonlLog jl;
  auto tr = d.audit(audit_config(p), &presented, nullptr, prover.get(), &jl);
  std::vector<QueryRecord> receipts;
  for (std::size_t i = 0; i < d.store.size(); ++i) {
    const auto& rc = d.client_for(i).receipts().at(i);
    receipts.push_back({i, d.store.at(i).client_id, rc.q, rc.r, rc.o, d.log()[i].sig_p, rc.sig_c, {}});
  }
  return finish_audit(c, o, tr, jl, blame_report(tr, presented, receipts, d.store, d.keys), extra);
}

int cmd_bound(const Options& o) {
  const std::string out = o.out.empty() ? "out" : o.out;
  fs::create_directories(out);
  const auto nus = o.bound_nus.empty() ? std::vector<std::uint64_t>{3800} : o.bound_nus;
  const auto eps = o.bound_eps.empty() ? evasion_epsilons() : o.bound_eps;

  SoundnessProfile table;
  for (auto nu : nus)
    for (double e : eps) table.rows.push_back(analytic_row(e, nu));
  {
    std::ofstream os(fs::path(out) / "bound.csv");
    table.write_csv(os);
  }
  // evasion against nu at each epsilon, and the undetectable-deviation region
  std::vector<std::uint64_t> grid;
  for (std::uint64_t nu = 100; nu <= 10000; nu += 100) grid.push_back(nu);
  {
    std::ofstream os(fs::path(out) / "evasion_vs_nu.csv");
    os.precision(17);
    os << "epsilon,nu,evasion\n";
    for (double e : eps)
      for (auto nu : grid) os << e << ',' << nu << ',' << evasion_probability(e, nu) << '\n';
  }
  {
    std::ofstream os(fs::path(out) / "epsilon_region.csv");
    double theta = 0.1;
    if (!o.theta.empty()) {
      auto t = Theta::parse(o.theta);
      theta = static_cast<double>(t.num) / static_cast<double>(t.den);
    }
    write_epsilon_region_csv(os, theta, o.p_catch, epsilon_region(theta, o.p_catch, grid));
  }
  std::cout << "epsilon      nu     catch_bound          evasion\n";
  for (const auto& r : table.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10g %6llu  %.12f  %.6e\n", r.epsilon, static_cast<unsigned long long>(r.nu), r.bound,
                  r.evasion);
    std::cout << line;
  }
  return kExitOk;
}

int cmd_report(const Options& o) {
  const std::string out = o.out.empty() ? (o.config.empty() ? "out" : load_config(o).out) : o.out;
  std::ostringstream txt;
  nlohmann::json agg = nlohmann::json::object();
  auto add = [&](const char* name, const char* key) {
    auto p = fs::path(out) / name;
    if (fs::exists(p)) agg[key] = read_json(p.string());
  };
  add("model.json", "model");
  add("certification.json", "certification");
  add("answer.json", "answer");
  add("audit.json", "audit");
  add("attack_mc.json", "monte_carlo");
  if (agg.empty()) throw PhaseError("report: no artifacts in " + out);

  if (agg.contains("certification")) {
    const auto& cj = agg["certification"];
    txt << "Certification: " << cj.value("verdict", "") << "  metric "
        << cj.value("metric", "") << "  theta " << cj.value("theta", "") << "  |D_val| " << cj.value("dataset_size", 0)
        << '\n';
    if (!cj.value("reason", std::string()).empty()) txt << "  reason: " << cj["reason"].get<std::string>() << '\n';
  }
  if (agg.contains("answer")) txt << "Queries answered: " << agg["answer"].value("queries", 0) << '\n';
  if (agg.contains("audit")) {
    const auto& a = agg["audit"];
    txt << "Audit: " << a.value("verdict", "") << "  N " << a.value("N", 0) << " (a " << a.value("N_a", 0) << ", b "
        << a.value("N_b", 0) << ")  nu " << a.value("nu", 0) << "  fair " << (a.value("fair", false) ? "yes" : "no") << '\n';
    txt << "  correctness proofs " << a.value("correctness_proofs", 0) << ", consistency proofs "
        << a.value("consistency_proofs", 0) << '\n';
    if (!a.value("reason", std::string()).empty()) txt << "  reason: " << a["reason"].get<std::string>() << '\n';
    if (a.contains("blame"))
      for (const auto& b : a["blame"]) txt << "  record " << b["index"] << " blamed on " << b["party"].get<std::string>() << '\n';
  }
  if (agg.contains("monte_carlo")) {
    const auto& m = agg["monte_carlo"];
    txt << "Monte-Carlo: caught " << m.value("caught", 0) << " / " << m.value("trials", 0) << "  bound(realized) "
        << m.value("bound_realized", 0.0) << '\n';
  }
  {
    std::ofstream os(fs::path(out) / "report.txt");
    os << txt.str();
  }
  write_json((fs::path(out) / "report.json").string(), agg);
  // plot data at nu = 3800
  {
    std::ofstream os(fs::path(out) / "evasion_table.csv");
    evasion_table(3800).write_csv(os);
  }
  std::cout << txt.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oath: fairness certification, authenticated query answering and sampled audit"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sc) {
    sc->add_option("--config", o.config, "flat key = value run configuration");
    sc->add_option("--out", o.out, "output directory (overrides 'out')");
    sc->add_option("--seed-override", o.seed_override, "derive every seed from this value");
    sc->add_option("--metric", o.metric, "dp, eo, eopp or pe");
    sc->add_option("--theta", o.theta, "fairness threshold NUM/DEN");
    sc->add_option("--nu", o.nu, "audit samples per group");
    sc->add_option("--attack", o.attack, "attack spec, e.g. record-tamper:p_a=0.5");
    sc->add_flag("--no-timing", o.no_timing, "omit timing fields from artifacts");
  };
  std::map<std::string, int (*)(const Options&)> handlers{
      {"gen-data", cmd_gen_data}, {"train", cmd_train}, {"certify", cmd_certify}, {"answer", cmd_answer},
      {"audit", cmd_audit},       {"attack", cmd_attack}, {"bound", cmd_bound},   {"report", cmd_report}};
  const std::map<std::string, std::string> help{
      {"gen-data", "write calibration and client datasets"},
      {"train", "train and post-process the model"},
      {"certify", "certify the model's fairness on the calibration set"},
      {"answer", "answer client queries with signatures and commitments"},
      {"audit", "audit the answered queries"},
      {"attack", "run every phase under an attack (--trials for Monte-Carlo)"},
      {"bound", "analytic detection bound tables and curves"},
      {"report", "summarise artifacts and write plot data"}};
  for (const auto& [name, h] : help) {
    auto* sc = app.add_subcommand(name, h);
    common(sc);
    if (name == "attack") sc->add_option("--trials", o.trials, "Monte-Carlo trials instead of one run");
    if (name == "bound") {
      sc->add_option("--nus", o.bound_nus, "sample sizes (default 3800)")->delimiter(',');
      sc->add_option("--eps", o.bound_eps, "deviations")->delimiter(',');
      sc->add_option("--p-catch", o.p_catch, "catch probability for the deviation region");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(name)(o);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"status", "error"}, {"command", name}, {"error", e.what()}}.dump() << std::endl;
    return kExitError;
  }
}
