#pragma once

// Gadgets over authenticated values: constrained bits, bit decomposition,
// comparisons, equality indicators, multiplexers and a read-only memory with
// secret-index reads.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "oath/authvalue.hpp"

namespace oath::zk {

/// Authenticated value proven to lie in {0, 1}.
class AuthBit {
 public:
  AuthBit() = default;
  const AuthValue& value() const { return v_; }
  operator const AuthValue&() const { return v_; }

  // Only for values already constrained to {0,1} by construction
  // (e.g. linear combinations of bits known to be exclusive).
  static AuthBit assume_bit(const AuthValue& v) { return AuthBit(v); }

 private:
  explicit AuthBit(const AuthValue& v) : v_(v) {}
  AuthValue v_;
};

/// Proves b * (b - 1) = 0.
inline void assert_bit(Session& s, const AuthValue& b, const char* what = "bit") {
  s.assert_zero(s.mul(b, s.add_const(b, Fp(0) - Fp(1))), what);
}

inline AuthBit input_bit(Session& s, bool b, const char* site = "bit") {
  AuthValue v = s.input(Fp(b ? 1 : 0), site);
  assert_bit(s, v, site);
  return AuthBit::assume_bit(v);
}

inline AuthBit constant_bit(const Session& s, bool b) { return AuthBit::assume_bit(s.constant(Fp(b ? 1 : 0))); }

inline AuthBit bit_not(const Session& s, const AuthBit& b) {
  return AuthBit::assume_bit(s.add_const(-b.value(), Fp(1)));
}

inline AuthBit bit_and(Session& s, const AuthBit& a, const AuthBit& b) {
  return AuthBit::assume_bit(s.mul(a, b));
}

inline AuthBit bit_or(Session& s, const AuthBit& a, const AuthBit& b) {
  return AuthBit::assume_bit(a.value() + b.value() - s.mul(a, b));
}

/// sel ? x : y
inline AuthValue mux(Session& s, const AuthBit& sel, const AuthValue& x, const AuthValue& y) {
  return y + s.mul(sel, x - y);
}

/// Little-endian bits of a, proven to recompose to a. Requires a < 2^n_bits;
/// a cheating prover (or an out-of-range value) fails the recomposition check.
inline std::vector<AuthBit> bit_decompose(Session& s, const AuthValue& a, int n_bits) {
  if (n_bits <= 0 || n_bits >= Fp::kBits) throw std::invalid_argument("bit_decompose: n_bits out of range");
  const std::uint64_t v = a.prover().value.value();
  std::vector<AuthBit> bits;
  bits.reserve(static_cast<std::size_t>(n_bits));
  AuthValue acc = s.constant(Fp(0));
  for (int i = 0; i < n_bits; ++i) {
    bits.push_back(input_bit(s, ((v >> i) & 1) != 0, "decompose"));
    acc += Fp(std::uint64_t{1} << i) * bits.back().value();
  }
  s.assert_zero(acc - a, "bit recomposition");
  return bits;
}

/// Proves 0 <= a < 2^n_bits.
inline void range_check(Session& s, const AuthValue& a, int n_bits) { (void)bit_decompose(s, a, n_bits); }

/// [a <= b] for plaintexts in [0, 2^n_bits), via the top bit of b - a + 2^n.
inline AuthBit leq(Session& s, const AuthValue& a, const AuthValue& b, int n_bits) {
  AuthValue d = s.add_const(b - a, Fp(std::uint64_t{1} << n_bits));
  auto bits = bit_decompose(s, d, n_bits + 1);
  return bits.back();
}

/// [a >= b] for signed plaintexts in [-2^(n-1), 2^(n-1)).
inline AuthBit ge_signed(Session& s, const AuthValue& a, const AuthValue& b, int n_bits) {
  const Fp off(std::uint64_t{1} << (n_bits - 1));
  return leq(s, s.add_const(b, off), s.add_const(a, off), n_bits);
}

/// Indicator bits [a == code] for every code in a public code set: one
/// prover-supplied bit per code, each constrained by b * (a - code) = 0, and
/// the bits constrained to sum to one.
inline std::vector<AuthBit> eq_indicators(Session& s, const AuthValue& a, std::span<const Fp> codes) {
  std::vector<AuthBit> out;
  out.reserve(codes.size());
  AuthValue sum = s.constant(Fp(0));
  const Fp v = a.prover().value;
  for (Fp code : codes) {
    AuthBit b = input_bit(s, v == code, "eq-indicator");
    s.assert_zero(s.mul(b, s.add_const(a, -code)), "eq-indicator");
    sum += b.value();
    out.push_back(b);
  }
  s.assert_equal(sum, Fp(1), "eq-indicator sum");
  return out;
}

inline AuthBit eq_indicator(Session& s, const AuthValue& a, Fp code, std::span<const Fp> code_set) {
  auto bits = eq_indicators(s, a, code_set);
  for (std::size_t i = 0; i < code_set.size(); ++i)
    if (code_set[i] == code) return bits[i];
  throw std::invalid_argument("eq_indicator: code not in code set");
}

/// Read-only memory with reads at authenticated indices.
///
/// kLinearScan: each read is a one-hot selection over all entries (prover
/// supplies the one-hot bits; bits, sum-to-one and index consistency are
/// proven), O(size) per read.
/// kLookup: reads are recorded and proven together in `finalize` by a
/// log-derivative lookup argument over (index, value) pairs, O(1) per read
/// plus O(size) once. Read outputs are not trustworthy before finalize.
class ZkRam {
 public:
  enum class Mode { kLinearScan, kLookup };

  ZkRam(Session& s, std::vector<AuthValue> entries, Mode mode = Mode::kLinearScan)
      : s_(&s), entries_(std::move(entries)), mode_(mode) {}

  // Entries known to both parties (e.g. a verifier-chosen permutation).
  ZkRam(Session& s, std::vector<Fp> public_entries, Mode mode = Mode::kLinearScan)
      : s_(&s), public_(std::move(public_entries)), mode_(mode) {
    entries_.reserve(public_.size());
    for (Fp v : public_) entries_.push_back(s.constant(v));
  }

  std::size_t size() const { return entries_.size(); }
  Mode mode() const { return mode_; }
  bool is_public() const { return !public_.empty(); }

  AuthValue read(const AuthValue& index) {
    if (finalized_) throw SetupError("ZkRam: read after finalize");
    return mode_ == Mode::kLinearScan ? read_scan(index) : read_lookup(index);
  }

  /// Completes the lookup argument. No-op for linear scan.
  void finalize() {
    if (finalized_) return;
    finalized_ = true;
    if (mode_ == Mode::kLookup && !reads_.empty()) prove_lookups();
  }

  std::uint64_t reads() const { return n_reads_; }

 private:
  std::uint64_t plaintext_index(const AuthValue& index) const {
    std::uint64_t i = index.prover().value.value();
    // an out-of-range index leaves the prover without a valid witness
    return i < entries_.size() ? i : entries_.size();
  }

  AuthValue read_scan(const AuthValue& index) {
    ++n_reads_;
    Session& s = *s_;
    const std::uint64_t target = plaintext_index(index);
    AuthValue sum = s.constant(Fp(0));
    AuthValue weighted = s.constant(Fp(0));
    AuthValue out = s.constant(Fp(0));
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      AuthBit b = input_bit(s, k == target, "ram-select");
      sum += b.value();
      weighted += Fp(k) * b.value();
      if (!public_.empty()) out += public_[k] * b.value();
      else out += s.mul(b, entries_[k]);
    }
    s.assert_equal(sum, Fp(1), "ram one-hot");
    s.assert_zero(weighted - index, "ram index");
    return out;
  }

  AuthValue read_lookup(const AuthValue& index) {
    ++n_reads_;
    const std::uint64_t target = plaintext_index(index);
    Fp v = target < entries_.size() ? entries_[target].prover().value : Fp(0);
    AuthValue out = s_->input(v, "ram-lookup-value");
    reads_.push_back({index, out});
    if (counts_.size() != entries_.size()) counts_.resize(entries_.size());
    if (target < entries_.size()) ++counts_[target];
    return out;
  }

  void prove_lookups() {
    Session& s = *s_;
    counts_.resize(entries_.size());
    std::vector<AuthValue> mult;
    mult.reserve(entries_.size());
    for (std::size_t k = 0; k < entries_.size(); ++k) mult.push_back(s.input(Fp(counts_[k]), "ram-multiplicity"));
    const Fp alpha = s.challenge();
    const Fp beta = s.challenge();

    // sum_j 1/(alpha - (i_j + beta*o_j)) == sum_k m_k/(alpha - (k + beta*v_k))
    AuthValue lhs = s.constant(Fp(0));
    for (const auto& r : reads_) {
      AuthValue f = s.constant(alpha) - (r.index + beta * r.value);
      const Fp fv = f.prover().value;
      AuthValue w = s.input(fv.is_zero() ? Fp(0) : fv.inverse(), "ram-lookup-inverse");
      s.assert_zero(s.add_const(s.mul(w, f), Fp(0) - Fp(1)), "ram lookup inverse");
      lhs += w;
    }
    AuthValue rhs = s.constant(Fp(0));
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (!public_.empty()) {
        Fp g = alpha - (Fp(k) + beta * public_[k]);
        if (g.is_zero()) throw SoundnessError("ram lookup: degenerate challenge");
        rhs += g.inverse() * mult[k];
      } else {
        AuthValue g = s.constant(alpha) - (s.constant(Fp(k)) + beta * entries_[k]);
        const Fp gv = g.prover().value;
        Fp u = gv.is_zero() ? Fp(0) : mult[k].prover().value * gv.inverse();
        AuthValue uv = s.input(u, "ram-lookup-ratio");
        s.assert_zero(s.mul(uv, g) - mult[k], "ram lookup ratio");
        rhs += uv;
      }
    }
    s.assert_zero(lhs - rhs, "ram lookup sum");
  }

  struct Read {
    AuthValue index;
    AuthValue value;
  };

  Session* s_;
  std::vector<AuthValue> entries_;
  std::vector<Fp> public_;
  Mode mode_;
  std::vector<Read> reads_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_reads_ = 0;
  bool finalized_ = false;
};

inline ZkRam ram_init(Session& s, std::vector<AuthValue> values) { return ZkRam(s, std::move(values)); }
inline AuthValue ram_read(ZkRam& r, const AuthValue& index) { return r.read(index); }

}  // namespace oath::zk
