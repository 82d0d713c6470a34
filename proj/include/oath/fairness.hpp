#pragma once

// Group-fairness metrics over exact rationals, and per-group threshold
// post-processing on a calibration set.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oath/dataset.hpp"
#include "oath/models.hpp"

namespace oath {

using int128 = __int128;

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-negative exact fraction in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  Rational() = default;
  Rational(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
    if (d == 0) throw std::invalid_argument("rational: zero denominator");
    std::uint64_t g = std::gcd(n, d);
    num /= g;
    den /= g;
  }

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    return static_cast<int128>(a.num) * b.den <=> static_cast<int128>(b.num) * a.den;
  }

  /// |x/y - z/w| exactly.
  static Rational abs_diff(std::uint64_t x, std::uint64_t y, std::uint64_t z, std::uint64_t w) {
    int128 n = static_cast<int128>(x) * w - static_cast<int128>(z) * y;
    if (n < 0) n = -n;
    int128 d = static_cast<int128>(y) * w;
    int128 g = n;
    for (int128 b = d; b != 0;) {
      int128 t = g % b;
      g = b;
      b = t;
    }
    if (g == 0) g = d;
    return Rational(static_cast<std::uint64_t>(n / g), static_cast<std::uint64_t>(d / g));
  }
};

inline constexpr std::uint64_t kMaxThetaDen = std::uint64_t{1} << 16;
// Upper bound on dataset / query-log size so cross-multiplied counts stay
// below the field modulus.
inline constexpr std::uint64_t kMaxRecords = std::uint64_t{1} << 22;

/// Public fairness tolerance theta = num/den, 0 <= theta <= 1.
struct Theta {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  Theta() = default;
  Theta(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
    if (d == 0 || d > kMaxThetaDen) throw std::invalid_argument("theta denominator must be in [1, 2^16]");
    if (n > d) throw std::invalid_argument("theta must be at most 1");
  }

  static Theta parse(const std::string& s) {
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Theta(std::stoull(s), 1);
      return Theta(std::stoull(s.substr(0, slash)), std::stoull(s.substr(slash + 1)));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("theta: expected NUM/DEN, got '" + s + "'");
    }
  }

  Rational rational() const { return Rational(num, den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  bool operator==(const Theta&) const = default;
};

enum class Metric { kDemographicParity, kEqualizedOdds, kEqualOpportunity, kPredictiveEquality };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kDemographicParity: return "dp";
    case Metric::kEqualizedOdds: return "eo";
    case Metric::kEqualOpportunity: return "eopp";
    case Metric::kPredictiveEquality: return "pe";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  for (Metric m : {Metric::kDemographicParity, Metric::kEqualizedOdds, Metric::kEqualOpportunity,
                   Metric::kPredictiveEquality})
    if (s == metric_name(m)) return m;
  throw std::invalid_argument("unknown metric '" + s + "' (dp, eo, eopp, pe)");
}

inline bool metric_needs_labels(Metric m) { return m != Metric::kDemographicParity; }

/// Per-group tallies of predictions against labels.
enum class Count : std::uint8_t { kAll, kPositive, kLabelPos, kLabelNeg, kTP, kFP, kFN, kTN };
inline constexpr std::size_t kNumCounts = 8;

struct GroupCounts {
  std::array<std::uint64_t, kNumCounts> c{};

  std::uint64_t operator[](Count k) const { return c[static_cast<std::size_t>(k)]; }
  std::uint64_t& operator[](Count k) { return c[static_cast<std::size_t>(k)]; }

  void add(int prediction, int label) {
    (*this)[Count::kAll] += 1;
    (*this)[Count::kPositive] += prediction;
    (*this)[Count::kLabelPos] += label;
    (*this)[Count::kLabelNeg] += 1 - label;
    (*this)[Count::kTP] += prediction & label;
    (*this)[Count::kFP] += prediction & (1 - label);
    (*this)[Count::kFN] += (1 - prediction) & label;
    (*this)[Count::kTN] += (1 - prediction) & (1 - label);
  }
  bool operator==(const GroupCounts&) const = default;
};

using GroupTally = std::array<GroupCounts, 2>;

/// A rate numerator/denominator compared across the two groups.
struct RateTerm {
  Count num;
  Count den;
  const char* name;
};

/// Rate terms bounded by each metric. Equalized odds uses the group-size
/// normalised form (FP/N_g and FN/N_g) that the circuit proves;
/// `eo_conditional_gaps` gives the label-conditional rates.
inline std::vector<RateTerm> metric_terms(Metric m) {
  switch (m) {
    case Metric::kDemographicParity: return {{Count::kPositive, Count::kAll, "positive-rate"}};
    case Metric::kEqualizedOdds:
      return {{Count::kFP, Count::kAll, "false-positive"}, {Count::kFN, Count::kAll, "false-negative"}};
    case Metric::kEqualOpportunity: return {{Count::kTP, Count::kLabelPos, "true-positive-rate"}};
    case Metric::kPredictiveEquality: return {{Count::kFP, Count::kLabelNeg, "false-positive-rate"}};
  }
  return {};
}

/// Counts actually needed by a metric (the circuit maintains only these).
inline std::vector<Count> metric_counts(Metric m) {
  std::vector<Count> out;
  for (const auto& t : metric_terms(m))
    for (Count k : {t.num, t.den})
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  return out;
}

inline GroupTally tally(std::span<const int> predictions, std::span<const int> labels, std::span<const Group> groups) {
  if (predictions.size() != groups.size() || (!labels.empty() && labels.size() != groups.size()))
    throw std::invalid_argument("tally: length mismatch");
  GroupTally t{};
  for (std::size_t i = 0; i < groups.size(); ++i) {
    int p = predictions[i], y = labels.empty() ? 0 : labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw std::invalid_argument("tally: predictions and labels must be 0/1");
    t[group_code(groups[i])].add(p, y);
  }
  return t;
}

inline GroupTally tally(std::span<const int> predictions, const LabeledDataset& ds) {
  if (predictions.size() != ds.size()) throw std::invalid_argument("tally: length mismatch");
  GroupTally t{};
  for (std::size_t i = 0; i < ds.size(); ++i) t[group_code(ds.records[i].group)].add(predictions[i], ds.records[i].label);
  return t;
}

struct FairnessGap {
  Metric metric = Metric::kDemographicParity;
  std::vector<Rational> values;  // one per rate term

  Rational max() const { return values.empty() ? Rational() : *std::max_element(values.begin(), values.end()); }
  bool within(const Theta& theta) const {
    return std::all_of(values.begin(), values.end(), [&](const Rational& v) { return v <= theta.rational(); });
  }
};

inline Rational term_gap(const GroupTally& t, const RateTerm& term) {
  const auto& a = t[0];
  const auto& b = t[1];
  if (a[term.den] == 0 || b[term.den] == 0)
    throw std::invalid_argument(std::string("fairness: empty denominator for ") + term.name);
  return Rational::abs_diff(a[term.num], a[term.den], b[term.num], b[term.den]);
}

inline FairnessGap gaps(const GroupTally& t, Metric m) {
  FairnessGap g{m, {}};
  for (const auto& term : metric_terms(m)) g.values.push_back(term_gap(t, term));
  return g;
}

/// theta_num * D_a * D_b >= theta_den * |N_a * D_b - N_b * D_a| for every
/// term; the division-free form the circuit proves.
inline bool satisfies(const GroupTally& t, Metric m, const Theta& theta) {
  for (const auto& term : metric_terms(m)) {
    const int128 na = t[0][term.num], da = t[0][term.den], nb = t[1][term.num], db = t[1][term.den];
    if (da == 0 || db == 0) return false;
    int128 diff = na * db - nb * da;
    if (diff < 0) diff = -diff;
    if (static_cast<int128>(theta.num) * da * db < static_cast<int128>(theta.den) * diff) return false;
  }
  return true;
}

inline FairnessGap dp_gap(std::span<const int> predictions, const LabeledDataset& ds) {
  return gaps(tally(predictions, ds), Metric::kDemographicParity);
}
inline FairnessGap eo_gaps(std::span<const int> predictions, const LabeledDataset& ds) {
  return gaps(tally(predictions, ds), Metric::kEqualizedOdds);
}
inline FairnessGap eopp_gap(std::span<const int> predictions, const LabeledDataset& ds) {
  return gaps(tally(predictions, ds), Metric::kEqualOpportunity);
}
inline FairnessGap pe_gap(std::span<const int> predictions, const LabeledDataset& ds) {
  return gaps(tally(predictions, ds), Metric::kPredictiveEquality);
}

/// Equalized odds with label-conditional rates: |FPR_a - FPR_b| and
/// |FNR_a - FNR_b|.
inline FairnessGap eo_conditional_gaps(std::span<const int> predictions, const LabeledDataset& ds) {
  auto t = tally(predictions, ds);
  return {Metric::kEqualizedOdds,
          {term_gap(t, {Count::kFP, Count::kLabelNeg, "false-positive-rate"}),
           term_gap(t, {Count::kFN, Count::kLabelPos, "false-negative-rate"})}};
}

inline FairnessGap metric_gap(Metric m, std::span<const int> predictions, const LabeledDataset& ds) {
  return gaps(tally(predictions, ds), m);
}

// ---------------------------------------------------------------------------
// Post-processing

struct PostprocessResult {
  ThresholdedModel model;
  FairnessGap gap;
  std::uint64_t correct = 0;
  std::size_t pairs_examined = 0;

  double accuracy(std::size_t n) const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

namespace detail {

/// Candidate thresholds of one group (ascending: distinct scores, then +inf)
/// with the group's counts when thresholding at each candidate.
struct ThresholdGrid {
  std::vector<std::int64_t> thresholds;
  std::vector<GroupCounts> counts;
};

inline ThresholdGrid build_grid(std::vector<std::pair<std::int64_t, int>> scored, std::int64_t pos_inf) {
  std::sort(scored.begin(), scored.end());
  ThresholdGrid g;
  std::uint64_t label_pos = 0;
  for (const auto& s : scored) label_pos += static_cast<std::uint64_t>(s.second);
  const std::uint64_t n = scored.size();
  // walk from the top: at threshold t the positives are the suffix with score >= t
  std::uint64_t pos = 0, tp = 0;
  auto make = [&] {
    GroupCounts c;
    c[Count::kAll] = n;
    c[Count::kPositive] = pos;
    c[Count::kLabelPos] = label_pos;
    c[Count::kLabelNeg] = n - label_pos;
    c[Count::kTP] = tp;
    c[Count::kFP] = pos - tp;
    c[Count::kFN] = label_pos - tp;
    c[Count::kTN] = (n - label_pos) - (pos - tp);
    return c;
  };
  g.thresholds.push_back(pos_inf);
  g.counts.push_back(make());
  for (std::size_t i = scored.size(); i-- > 0;) {
    ++pos;
    tp += static_cast<std::uint64_t>(scored[i].second);
    if (i == 0 || scored[i - 1].first != scored[i].first) {
      g.thresholds.push_back(scored[i].first);
      g.counts.push_back(make());
    }
  }
  std::reverse(g.thresholds.begin(), g.thresholds.end());
  std::reverse(g.counts.begin(), g.counts.end());
  return g;
}

}  // namespace detail

/// Per-group thresholds maximising accuracy on `d_val` subject to the metric's
/// gap being at most theta. Exhaustive over candidate pairs; ties go to the
/// lowest t_a, then the lowest t_b.
inline PostprocessResult postprocess_thresholds(const ScoreModel& model, const LabeledDataset& d_val, const Theta& theta,
                                                Metric metric, const FixedPointConfig& fpc = {}) {
  d_val.validate();
  if (d_val.size() > kMaxRecords) throw std::invalid_argument("postprocess: dataset too large");
  const auto qm = quantize(model, fpc);
  std::array<std::vector<std::pair<std::int64_t, int>>, 2> scored;
  for (const auto& r : d_val.records)
    scored[group_code(r.group)].push_back({quantized_score(qm, quantize_input(r.features, fpc)), r.label});
  std::array<detail::ThresholdGrid, 2> grid;
  for (int g = 0; g < 2; ++g) {
    if (scored[g].empty()) throw std::invalid_argument("postprocess: empty group");
    grid[g] = detail::build_grid(scored[g], fpc.pos_inf());
    if (grid[g].thresholds.size() < 3)
      throw std::invalid_argument(std::string("postprocess: group ") + group_name(static_cast<Group>(g)) +
                                  " needs at least 2 distinct scores");
  }

  bool found = false;
  std::size_t best_i = 0, best_j = 0;
  std::uint64_t best_correct = 0;
  std::size_t examined = 0;
  for (std::size_t i = 0; i < grid[0].thresholds.size(); ++i) {
    const auto& ca = grid[0].counts[i];
    for (std::size_t j = 0; j < grid[1].thresholds.size(); ++j) {
      ++examined;
      const auto& cb = grid[1].counts[j];
      const std::uint64_t correct = ca[Count::kTP] + ca[Count::kTN] + cb[Count::kTP] + cb[Count::kTN];
      if (found && correct <= best_correct) continue;
      if (!satisfies({ca, cb}, metric, theta)) continue;
      found = true;
      best_correct = correct;
      best_i = i;
      best_j = j;
    }
  }
  if (!found) throw InfeasibleError(std::string("postprocess: no threshold pair meets ") + metric_name(metric) + " <= " + theta.str());
  PostprocessResult res{ThresholdedModel(model, fpc, {grid[0].thresholds[best_i], grid[1].thresholds[best_j]}),
                        gaps({grid[0].counts[best_i], grid[1].counts[best_j]}, metric), best_correct, examined};
  return res;
}

}  // namespace oath
