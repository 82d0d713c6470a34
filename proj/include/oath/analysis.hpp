#pragma once

// Detection-probability bound for the sampled audit, the undetectable
// deviation region, and Monte-Carlo catch-rate estimates.

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oath/adversary.hpp"
#include "oath/audit.hpp"
#include "oath/pipeline.hpp"

namespace oath {

/// log of the evasion probability (1 - eps/2)^nu.
inline double log_evasion(double eps, std::uint64_t nu) {
  if (!(eps > 0.0 && eps <= 2.0)) throw std::invalid_argument("catch_bound: epsilon must lie in (0, 2]");
  if (nu == 0) throw std::invalid_argument("catch_bound: nu must be positive");
  if (eps == 2.0) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(nu) * std::log1p(-eps / 2.0);
}

inline double evasion_probability(double eps, std::uint64_t nu) { return std::exp(log_evasion(eps, nu)); }

/// 1 - (1 - eps/2)^nu.
inline double catch_bound(double eps, std::uint64_t nu) { return -std::expm1(log_evasion(eps, nu)); }

/// catch_bound extended to eps = 0 (nothing to catch).
inline double catch_bound_or_zero(double eps, std::uint64_t nu) { return eps <= 0.0 ? 0.0 : catch_bound(std::min(eps, 2.0), nu); }

struct Interval {
  double lo = 0, hi = 1;
};

/// Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n), p = static_cast<double>(k) / nn, z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct ProfileRow {
  double epsilon = 0;
  std::uint64_t nu = 0;
  double bound = 0;
  double evasion = 1;
  // Monte-Carlo fields; trials = 0 for analytic rows
  std::uint64_t trials = 0;
  std::uint64_t caught = 0;
  double empirical_catch = std::numeric_limits<double>::quiet_NaN();
  Interval ci;
  double epsilon_realized = 0;  // mean over trials
  double epsilon_min = 0;       // smallest per-trial deviation
  double bound_realized = 0;    // mean of catch_bound(epsilon realized in each trial)
  std::uint64_t spot_checks = 0;
  std::uint64_t spot_disagreements = 0;

  double sigma() const {
    if (trials == 0) return 0;
    return std::sqrt(bound_realized * (1 - bound_realized) / static_cast<double>(trials));
  }
  // empirical >= realized bound - 3 sigma
  bool meets_bound() const { return trials > 0 && empirical_catch >= bound_realized - 3 * sigma(); }

  nlohmann::json to_json() const {
    nlohmann::json j{{"epsilon", epsilon}, {"nu", nu}, {"bound", bound}, {"evasion", evasion}};
    if (trials > 0) {
      j.update({{"trials", trials}, {"caught", caught}, {"empirical_catch", empirical_catch},
                {"ci95", {ci.lo, ci.hi}}, {"epsilon_realized", epsilon_realized}, {"epsilon_min", epsilon_min}, {"bound_realized", bound_realized},
                {"spot_checks", spot_checks}, {"spot_disagreements", spot_disagreements}});
    }
    return j;
  }
};

inline ProfileRow analytic_row(double eps, std::uint64_t nu) {
  ProfileRow r;
  r.epsilon = eps;
  r.nu = nu;
  r.bound = catch_bound(eps, nu);
  r.evasion = evasion_probability(eps, nu);
  return r;
}

struct SoundnessProfile {
  std::vector<ProfileRow> rows;

  void write_csv(std::ostream& os) const {
    os << "epsilon,nu,bound,evasion,trials,caught,empirical_catch,ci_lo,ci_hi,epsilon_realized,bound_realized\n";
    os.precision(17);
    for (const auto& r : rows) {
      os << r.epsilon << ',' << r.nu << ',' << r.bound << ',' << r.evasion << ',' << r.trials << ',' << r.caught << ',';
      if (r.trials > 0)
        os << r.empirical_catch << ',' << r.ci.lo << ',' << r.ci.hi << ',' << r.epsilon_realized << ',' << r.bound_realized;
      else
        os << ",,,,";
      os << '\n';
    }
  }
  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back(r.to_json());
    return j;
  }
};

inline const std::vector<double>& evasion_epsilons() {
  static const std::vector<double> e{0.0025, 0.005, 0.00625, 0.0125, 0.025, 0.05, 0.1};
  return e;
}

/// Evasion probabilities over the standard deviation grid at a fixed nu.
inline SoundnessProfile evasion_table(std::uint64_t nu = 3800) {
  SoundnessProfile p;
  for (double e : evasion_epsilons()) p.rows.push_back(analytic_row(e, nu));
  return p;
}

/// Evasion probability against nu at a fixed deviation.
inline SoundnessProfile evasion_vs_nu(double eps, const std::vector<std::uint64_t>& nus) {
  SoundnessProfile p;
  for (auto nu : nus) p.rows.push_back(analytic_row(eps, nu));
  return p;
}

struct EpsilonPoint {
  std::uint64_t nu = 0;
  double epsilon = 0;  // largest deviation caught with probability below the limit
  double upper = 0;    // theta + epsilon
};

/// eps* with 1 - (1 - eps*/2)^nu = p_catch for every nu.
inline std::vector<EpsilonPoint> epsilon_region(double theta, double p_catch, const std::vector<std::uint64_t>& nus) {
  if (!(p_catch > 0.0 && p_catch < 1.0)) throw std::invalid_argument("epsilon_region: p_catch must lie in (0, 1)");
  std::vector<EpsilonPoint> out;
  for (auto nu : nus) {
    if (nu == 0) throw std::invalid_argument("epsilon_region: nu must be positive");
    const double eps = -2.0 * std::expm1(std::log1p(-p_catch) / static_cast<double>(nu));
    out.push_back({nu, eps, theta + eps});
  }
  return out;
}

inline void write_epsilon_region_csv(std::ostream& os, double theta, double p_catch, const std::vector<EpsilonPoint>& pts) {
  os.precision(17);
  os << "nu,epsilon,theta,p_catch,upper\n";
  for (const auto& p : pts) os << p.nu << ',' << p.epsilon << ',' << theta << ',' << p_catch << ',' << p.upper << '\n';
}

// ---------------------------------------------------------------------------
// Clear-side audit verdict

/// What the audit circuit would see, in the clear: the presented outcomes and
/// the records whose sampled check would fail.
struct ClearAudit {
  std::vector<Group> groups;
  std::vector<int> outcomes;
  std::vector<int> labels;
  std::vector<std::uint64_t> bad;  // sorted
};

struct ClearVerdict {
  bool fair = false;
  bool feasible = false;
  std::uint64_t bad_sampled = 0;
  bool pass = false;
};

inline ClearVerdict clear_audit(const ClearAudit& in, const AuditConfig& cfg) {
  ClearVerdict v;
  const auto t = tally(in.outcomes, metric_needs_labels(cfg.metric) ? std::span<const int>(in.labels) : std::span<const int>(),
                       in.groups);
  v.fair = satisfies(t, cfg.metric, cfg.theta);
  const std::uint64_t na = t[0][Count::kAll], nb = t[1][Count::kAll];
  v.feasible = cfg.nu <= na && cfg.nu <= nb;
  if (v.feasible) {
    for (auto j : sample_indices_clear(in.groups, cfg.nu, verifier_permutations(cfg.verifier_seed, na, nb)))
      v.bad_sampled += std::binary_search(in.bad.begin(), in.bad.end(), j);
  }
  v.pass = v.fair && v.feasible && v.bad_sampled == 0;
  return v;
}

inline double max_gap(const std::vector<int>& outcomes, const std::vector<int>& labels, const std::vector<Group>& groups,
                      Metric m) {
  return gaps(tally(outcomes, metric_needs_labels(m) ? std::span<const int>(labels) : std::span<const int>(), groups), m)
      .max()
      .to_double();
}

// ---------------------------------------------------------------------------
// Monte-Carlo catch rate

struct MonteCarloConfig {
  AttackSpec attack;
  std::uint64_t nu = 100;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 1;
  std::uint64_t spot_checks = 2;  // trials re-run through the full audit circuit
};

inline std::uint64_t trial_seed(std::uint64_t seed, const char* role, std::uint64_t t) {
  const Seed s = derive_seed(seed_from_u64(seed), role, t);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | s[i];
  return v;
}

/// Catch rate of an attack against the audit. Phase 1 and the honest Phase 2
/// run once; every trial redraws the attack's randomness and the verifier's
/// permutations and decides the audit in the clear. `spot_checks` evenly
/// spaced trials also run the full audit circuit and must agree.
/// Supported attacks: none, record-tamper, model-switch (divergent model),
/// data-forge (unconstrained model, forged calibration set, fresh client data
/// per trial).
inline ProfileRow monte_carlo_catch(const PipelineConfig& pcfg, const MonteCarloConfig& mc) {
  if (mc.trials == 0) throw std::invalid_argument("monte_carlo_catch: trials must be positive");
  const AttackSpec& attack = mc.attack;
  PipelineConfig cfg = pcfg;
  cfg.nu = mc.nu;

  ProfileRow row;
  row.nu = mc.nu;
  row.trials = mc.trials;
  std::vector<std::uint64_t> spot;
  for (std::uint64_t k = 0; k < std::min(mc.spot_checks, mc.trials); ++k) spot.push_back(k * mc.trials / mc.spot_checks);

  auto acfg_for = [&](std::uint64_t t) {
    AuditConfig a = audit_config(cfg);
    a.verifier_seed = derive_seed(seed_from_u64(mc.seed), "mc-verifier", t);
    return a;
  };
  auto groups_of = [](const std::vector<QueryRecord>& log) {
    std::vector<Group> g;
    for (const auto& r : log) g.push_back(r.q.group);
    return g;
  };
  auto outcomes_of = [](const std::vector<QueryRecord>& log) {
    std::vector<int> o;
    for (const auto& r : log) o.push_back(r.o);
    return o;
  };
  double eps_sum = 0, bound_sum = 0;
  auto record = [&](std::uint64_t t, const ClearAudit& ca, double eps, auto&& full_audit) {
    const auto v = clear_audit(ca, acfg_for(t));
    row.caught += v.pass ? 0 : 1;
    eps_sum += eps;
    row.epsilon_min = t == 0 ? eps : std::min(row.epsilon_min, eps);
    bound_sum += catch_bound_or_zero(eps, mc.nu);
    if (std::find(spot.begin(), spot.end(), t) != spot.end()) {
      ++row.spot_checks;
      if (full_audit().pass != v.pass) ++row.spot_disagreements;
    }
  };

  switch (attack.kind) {
    case AttackKind::kNone:
    case AttackKind::kRecordTamper: {
      const Deployment d = run_phases_1_2(cfg);
      if (!d.cert.certified) throw std::runtime_error("monte_carlo_catch: honest certification failed: " + d.cert.reason);
      const auto groups = groups_of(d.log());
      const auto honest = outcomes_of(d.log());
      const double honest_gap = max_gap(honest, d.labels, groups, cfg.metric);
      row.epsilon = attack.p_a + attack.p_b;
      for (std::uint64_t t = 0; t < mc.trials; ++t) {
        AttackSpec s = attack;
        s.seed = trial_seed(mc.seed, "mc-attack", t);
        TamperResult tr = attack.kind == AttackKind::kNone ? TamperResult{d.log(), {}} : apply_record_tamper(d.log(), s);
        ClearAudit ca{groups, outcomes_of(tr.log), d.labels, tr.flipped};
        const double eps = std::abs(max_gap(ca.outcomes, d.labels, groups, cfg.metric) - honest_gap);
        record(t, ca, eps, [&] { return d.audit(acfg_for(t), &tr.log); });
      }
      break;
    }
    case AttackKind::kModelSwitch: {
      const Deployment d = run_phases_1_2(cfg);
      if (!d.cert.certified) throw std::runtime_error("monte_carlo_catch: honest certification failed: " + d.cert.reason);
      const auto alt = divergent_model(d.model);
      const auto groups = groups_of(d.log());
      const auto honest = outcomes_of(d.log());
      const double honest_gap = max_gap(honest, d.labels, groups, cfg.metric);
      for (std::uint64_t t = 0; t < mc.trials; ++t) {
        AttackSpec s = attack;
        s.seed = trial_seed(mc.seed, "mc-attack", t);
        ModelSwitch sw(alt, s.rate, s.seed);
        ClearAudit ca{groups, {}, d.labels, {}};
        for (std::size_t i = 0; i < d.log().size(); ++i) {
          const auto& rec = d.log()[i];
          ca.outcomes.push_back(sw.answer(i, rec.q, rec.r, rec.o));
          if (ca.outcomes.back() != rec.o) ca.bad.push_back(i);
        }
        const double eps = std::abs(max_gap(ca.outcomes, d.labels, groups, cfg.metric) - honest_gap);
        record(t, ca, eps, [&] {
          Deployment e = setup_deployment(cfg);
          apply_model_switch(e, alt, s);
          answer_all(e, client_data(cfg));
          return e.audit(acfg_for(t));
        });
      }
      row.epsilon = eps_sum / static_cast<double>(mc.trials);
      break;
    }
    case AttackKind::kDataForge: {
      const auto d_val = calibration_data(cfg);
      ThresholdedModel unfair(train_model(cfg, d_val), cfg.fpc, {0, 0});
      const auto forged = apply_data_forge(d_val, unfair, cfg.metric, cfg.theta, trial_seed(mc.seed, "mc-forge", 0));
      const Deployment base = deploy(cfg, forged, unfair);
      if (!base.cert.certified) throw std::runtime_error("monte_carlo_catch: forged certification failed: " + base.cert.reason);
      const double theta = static_cast<double>(cfg.theta.num) / static_cast<double>(cfg.theta.den);
      for (std::uint64_t t = 0; t < mc.trials; ++t) {
        PipelineConfig ct = cfg;
        ct.client_seed = trial_seed(mc.seed, "mc-clients", t);
        const auto queries = client_data(ct);
        ClearAudit ca;
        for (const auto& r : queries.records) {
          ca.groups.push_back(r.group);
          ca.labels.push_back(r.label);
          ca.outcomes.push_back(unfair.predict(r.features, r.group) ? 1 : 0);
        }
        const double eps = std::max(0.0, max_gap(ca.outcomes, ca.labels, ca.groups, cfg.metric) - theta);
        record(t, ca, eps, [&] {
          Deployment e = deploy(ct, forged, unfair);
          answer_all(e, queries);
          return e.audit(acfg_for(t));
        });
      }
      row.epsilon = eps_sum / static_cast<double>(mc.trials);
      break;
    }
    default:
      throw std::invalid_argument(std::string("monte_carlo_catch: unsupported attack ") + attack_name(attack.kind));
  }

  row.bound = catch_bound_or_zero(row.epsilon, mc.nu);
  row.evasion = 1 - row.bound;
  row.empirical_catch = static_cast<double>(row.caught) / static_cast<double>(mc.trials);
  row.ci = wilson_interval(row.caught, mc.trials);
  row.epsilon_realized = eps_sum / static_cast<double>(mc.trials);
  row.bound_realized = bound_sum / static_cast<double>(mc.trials);
  return row;
}

}  // namespace oath
