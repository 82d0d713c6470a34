#pragma once

// End-to-end orchestration of the three phases on seeded synthetic data:
// train and post-process, certify, answer client queries, audit.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oath/audit.hpp"
#include "oath/certify.hpp"
#include "oath/dataset.hpp"
#include "oath/fairness.hpp"
#include "oath/models.hpp"
#include "oath/queryauth.hpp"

namespace oath {

struct PipelineConfig {
  SyntheticConfig population;  // calibration data; clients draw from the same distribution
  std::size_t calibration_size = 1000;
  std::string model = "logreg";  // or "ffnn"
  std::vector<std::size_t> hidden{8};
  TrainConfig train{.learning_rate = 0.5, .epochs = 20};
  FixedPointConfig fpc;
  Metric metric = Metric::kDemographicParity;
  Theta theta{1, 10};
  std::uint64_t nu = 100;
  std::size_t n_queries = 2000;
  std::size_t n_clients = 8;
  // Honest post-processing aims below theta by this many standard errors of the
  // gap (calibration plus expected client sample); 0 targets theta exactly.
  double pp_confidence = 3.0;

  std::uint64_t data_seed = 1;
  std::uint64_t train_seed = 2;
  std::uint64_t client_seed = 3;
  std::uint64_t dealer_seed = 4;
  std::uint64_t verifier_seed = 5;
  std::uint64_t provider_seed = 6;
};

inline Seed pipeline_seed(std::uint64_t s, const char* role) { return derive_seed(seed_from_u64(s), role); }

inline LabeledDataset calibration_data(const PipelineConfig& cfg) {
  auto p = cfg.population;
  p.n = cfg.calibration_size;
  p.seed = cfg.data_seed;
  return generate_synthetic(p);
}

/// Held-out client population: same distribution, independent seed.
inline LabeledDataset client_data(const PipelineConfig& cfg) {
  auto p = cfg.population;
  p.n = cfg.n_queries;
  p.seed = cfg.client_seed ^ 0x9e3779b97f4a7c15ULL;
  return generate_synthetic(p);
}

inline ScoreModel train_model(const PipelineConfig& cfg, const LabeledDataset& d) {
  TrainConfig t = cfg.train;
  t.seed = cfg.train_seed;
  if (cfg.model == "logreg") return train_logreg(d, t);
  if (cfg.model == "ffnn") return train_ffnn(d, cfg.hidden, t);
  throw std::invalid_argument("unknown model variant '" + cfg.model + "' (logreg, ffnn)");
}

inline CertifyConfig certify_config(const PipelineConfig& cfg) {
  CertifyConfig c;
  c.metric = cfg.metric;
  c.theta = cfg.theta;
  c.dealer_seed = pipeline_seed(cfg.dealer_seed, "certify-dealer");
  c.prover_coins = pipeline_seed(cfg.provider_seed, "certify-coins");
  c.verifier_coins = pipeline_seed(cfg.verifier_seed, "certify-coins");
  return c;
}

inline AuditConfig audit_config(const PipelineConfig& cfg) {
  AuditConfig a;
  a.metric = cfg.metric;
  a.theta = cfg.theta;
  a.nu = cfg.nu;
  a.dealer_seed = pipeline_seed(cfg.dealer_seed, "audit-dealer");
  a.verifier_seed = pipeline_seed(cfg.verifier_seed, "audit-permutations");
  return a;
}

/// Gap the honest provider post-processes to, so that sampling noise between
/// D_val and the client population does not push the audited gap above theta.
/// Uses the worst-case rate variance 1/4 per group. Empty when no margin fits.
inline std::optional<Theta> postprocess_target(const PipelineConfig& cfg, const LabeledDataset& d_val) {
  if (cfg.pp_confidence <= 0) return cfg.theta;
  const std::size_t counts[2] = {d_val.group_size(Group::kA), d_val.group_size(Group::kB)};
  const double fa = cfg.population.fraction_a;
  const double qa = std::max(1.0, fa * cfg.n_queries), qb = std::max(1.0, (1 - fa) * cfg.n_queries);
  const double se = 0.5 * std::sqrt(1.0 / std::max<std::size_t>(1, counts[0]) + 1.0 / std::max<std::size_t>(1, counts[1]) +
                                    1.0 / qa + 1.0 / qb);
  const double target = static_cast<double>(cfg.theta.num) / cfg.theta.den - cfg.pp_confidence * se;
  if (target <= 0) return std::nullopt;
  Theta t{static_cast<std::uint64_t>(std::floor(target * kMaxThetaDen)), kMaxThetaDen};
  return t.num == 0 ? std::nullopt : std::optional<Theta>(t);
}

/// Honest post-processing with the margin above. Without room for a margin the
/// provider falls back to the more accurate constant predictor, whose gap is 0
/// on any data.
inline ThresholdedModel honest_postprocess(const PipelineConfig& cfg, const ScoreModel& sm, const LabeledDataset& d_val) {
  if (auto target = postprocess_target(cfg, d_val)) {
    try {
      return postprocess_thresholds(sm, d_val, *target, cfg.metric, cfg.fpc).model;
    } catch (const InfeasibleError&) {
    }
  }
  std::size_t pos = 0;
  for (const auto& r : d_val.records) pos += r.label == 1;
  const std::int64_t t = 2 * pos >= d_val.size() ? cfg.fpc.neg_inf() : cfg.fpc.pos_inf();
  return ThresholdedModel(sm, cfg.fpc, {t, t});
}

/// State of one deployment: the parties and the artefacts each holds.
struct Deployment {
  PipelineConfig cfg;
  LabeledDataset d_val;
  ThresholdedModel model;
  CertificationResult cert;
  std::unique_ptr<Provider> provider;
  std::vector<std::unique_ptr<Client>> clients;
  CommitmentStore store;
  KeyRegistry keys;
  LabeledDataset queries;   // what clients asked, with true labels
  std::vector<int> labels;  // true outcomes per answered query
  // cheating hooks installed on the parties, owned here
  std::unique_ptr<ProviderBehavior> provider_hook;
  std::unique_ptr<ClientBehavior> client_hook;

  void set_provider_hook(std::unique_ptr<ProviderBehavior> b) {
    provider_hook = std::move(b);
    provider->set_behavior(provider_hook.get());
  }
  void set_client_hook(std::unique_ptr<ClientBehavior> b) {
    client_hook = std::move(b);
    for (auto& c : clients) c->set_behavior(client_hook.get());
  }

  Client& client_for(std::size_t i) { return *clients[i % clients.size()]; }
  const Client& client_for(std::size_t i) const { return *clients[i % clients.size()]; }
  const std::vector<QueryRecord>& log() const { return provider->log(); }

  AuditTranscript audit(const AuditConfig& acfg, const std::vector<QueryRecord>* log_override = nullptr,
                        const ThresholdedModel* model_override = nullptr, ProverStrategy* prover = nullptr,
                        JsonlLog* jl = nullptr) const {
    AuditInput in{model_override ? model_override : &model, log_override ? log_override : &provider->log(), &labels};
    AuditPublic pub{cert.model_digest, &store};
    return run_audit(in, pub, acfg, prover, jl);
  }
  AuditTranscript audit() const { return audit(audit_config(cfg)); }
};

/// Provider and client keys derived from the configured seeds.
inline void attach_parties(Deployment& d) {
  const auto& cfg = d.cfg;
  d.provider = std::make_unique<Provider>(d.model, pipeline_seed(cfg.provider_seed, "provider-key"), d.cert);
  d.keys.provider = d.provider->signer().public_key();
  d.clients.clear();
  d.keys.clients.clear();
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    auto id = "client-" + std::to_string(i);
    d.clients.push_back(std::make_unique<Client>(id, derive_seed(pipeline_seed(cfg.client_seed, "client-key"), id)));
    d.keys.clients[id] = d.clients.back()->signer().public_key();
  }
}

/// Certifies `model` on `d_val` and sets up the provider and clients.
inline Deployment deploy(const PipelineConfig& cfg, LabeledDataset d_val, ThresholdedModel model,
                         JsonlLog* cert_log = nullptr) {
  Deployment d;
  d.cfg = cfg;
  d.d_val = std::move(d_val);
  d.model = std::move(model);
  d.cert = certify(d.model, d.d_val, certify_config(cfg), nullptr, cert_log);
  attach_parties(d);
  return d;
}

/// Phase 1 for an honest provider: train on the calibration set, post-process
/// and certify on the same set.
inline Deployment setup_deployment(const PipelineConfig& cfg, JsonlLog* cert_log = nullptr) {
  LabeledDataset d_val = calibration_data(cfg);
  ScoreModel sm = train_model(cfg, d_val);
  ThresholdedModel tm = honest_postprocess(cfg, sm, d_val);
  return deploy(cfg, std::move(d_val), std::move(tm), cert_log);
}

/// Phase 2: every client query answered through the authenticated protocol.
inline void answer_all(Deployment& d, const LabeledDataset& queries, QueryAuthStats* stats = nullptr) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& r = queries.records[i];
    Query q{quantize_input(r.features, d.model.fpc), r.group};
    answer_query(d.client_for(d.store.size()), *d.provider, d.store, q, stats);
    d.queries.records.push_back(r);
    d.labels.push_back(r.label);
  }
}

inline Deployment run_phases_1_2(const PipelineConfig& cfg, QueryAuthStats* stats = nullptr) {
  Deployment d = setup_deployment(cfg);
  if (!d.cert.certified) return d;
  answer_all(d, client_data(cfg), stats);
  return d;
}

}  // namespace oath
