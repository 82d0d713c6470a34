#pragma once

// Independent reference computations used by unit and acceptance tests. They
// recount from raw records with floating-free arithmetic and share no code
// with the library's fast paths.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "oath/fairness.hpp"

namespace oath::oracle {

struct Fraction {
  long long n, d;
};

// |a - b| <= theta, by cross multiplication in long double-free integers.
inline bool le_theta(Fraction a, Fraction b, const Theta& theta) {
  __int128 diff = static_cast<__int128>(a.n) * b.d - static_cast<__int128>(b.n) * a.d;
  if (diff < 0) diff = -diff;
  return static_cast<__int128>(theta.den) * diff <= static_cast<__int128>(theta.num) * a.d * b.d;
}

// Per-term rate pairs by direct recount from predictions.
inline std::vector<std::pair<Fraction, Fraction>> rates(Metric m, const std::vector<int>& pred, const LabeledDataset& ds) {
  long long n[2] = {0, 0}, pos[2] = {0, 0}, y1[2] = {0, 0}, y0[2] = {0, 0}, tp[2] = {0, 0}, fp[2] = {0, 0},
            fn[2] = {0, 0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int g = ds.records[i].group == Group::kA ? 0 : 1;
    int p = pred[i], y = ds.records[i].label;
    n[g]++;
    if (p == 1) pos[g]++;
    if (y == 1) y1[g]++;
    else y0[g]++;
    if (p == 1 && y == 1) tp[g]++;
    if (p == 1 && y == 0) fp[g]++;
    if (p == 0 && y == 1) fn[g]++;
  }
  switch (m) {
    case Metric::kDemographicParity: return {{{pos[0], n[0]}, {pos[1], n[1]}}};
    case Metric::kEqualizedOdds: return {{{fp[0], n[0]}, {fp[1], n[1]}}, {{fn[0], n[0]}, {fn[1], n[1]}}};
    case Metric::kEqualOpportunity: return {{{tp[0], y1[0]}, {tp[1], y1[1]}}};
    case Metric::kPredictiveEquality: return {{{fp[0], y0[0]}, {fp[1], y0[1]}}};
  }
  return {};
}

// nullopt when a denominator is zero.
inline std::optional<bool> fair(Metric m, const std::vector<int>& pred, const LabeledDataset& ds, const Theta& theta) {
  for (auto [a, b] : rates(m, pred, ds)) {
    if (a.d == 0 || b.d == 0) return std::nullopt;
    if (!le_theta(a, b, theta)) return false;
  }
  return true;
}

/// Exhaustive search over the midpoint threshold grid. Thresholds are kept in
/// doubled fixed-point units so midpoints stay integral: candidates are -inf,
/// midpoints between consecutive distinct group scores, and +inf.
struct GridResult {
  bool feasible = false;
  long long t2[2] = {0, 0};  // doubled thresholds; +/-inf as numeric_limits
  long long correct = -1;
};

inline GridResult grid_search(const std::vector<std::int64_t>& scores, const LabeledDataset& ds, Metric m,
                              const Theta& theta) {
  constexpr long long kNegInf = std::numeric_limits<long long>::min();
  constexpr long long kPosInf = std::numeric_limits<long long>::max();
  std::vector<long long> cand[2];
  for (int g = 0; g < 2; ++g) {
    std::vector<long long> s;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if ((ds.records[i].group == Group::kA ? 0 : 1) == g) s.push_back(2 * scores[i]);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    cand[g].push_back(kNegInf);
    for (std::size_t k = 0; k + 1 < s.size(); ++k) cand[g].push_back((s[k] + s[k + 1]) / 2);
    cand[g].push_back(kPosInf);
  }
  GridResult best;
  std::vector<int> pred(ds.size());
  for (long long ta : cand[0])
    for (long long tb : cand[1]) {
      long long correct = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        long long t = ds.records[i].group == Group::kA ? ta : tb;
        pred[i] = (t != kPosInf && (t == kNegInf || 2 * scores[i] >= t)) ? 1 : 0;
        correct += pred[i] == ds.records[i].label;
      }
      if (fair(m, pred, ds, theta).value_or(false) && correct > best.correct) {
        best.feasible = true;
        best.correct = correct;
        best.t2[0] = ta;
        best.t2[1] = tb;
      }
    }
  return best;
}

/// Maps a library threshold (a distinct score or +inf) to the midpoint grid
/// threshold inducing the same classifier on group g.
inline long long to_midpoint(std::int64_t t, const std::vector<std::int64_t>& scores, const LabeledDataset& ds, Group g,
                             std::int64_t pos_inf) {
  if (t == pos_inf) return std::numeric_limits<long long>::max();
  std::vector<long long> s;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.records[i].group == g) s.push_back(scores[i]);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  auto it = std::lower_bound(s.begin(), s.end(), t);
  if (it == s.begin()) return std::numeric_limits<long long>::min();
  return (*(it - 1) + *it);  // doubled midpoint
}

}  // namespace oath::oracle
