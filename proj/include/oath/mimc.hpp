#pragma once

// MiMC-Feistel sponge over F_p, evaluable in the clear and over AuthValues
// with identical results. Rate 1, capacity 1; the input length is absorbed
// first so inputs of different lengths never collide by zero padding.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "oath/authvalue.hpp"

namespace oath::mimc {

inline constexpr std::uint64_t kExponent = 17;
inline constexpr int kRounds = 48;
inline constexpr const char* kConstantsTag = "oath-mimc-v1";

// x -> x^17 must be a permutation of F_p.
static_assert(detail::gcd_u64(kExponent, Fp::kModulus - 1) == 1, "MiMC exponent must be coprime to p-1");
static_assert(detail::gcd_u64(5, Fp::kModulus - 1) != 1, "5 divides p-1 for p = 2^61-1");

inline const std::array<Fp, kRounds>& round_constants() {
  static const std::array<Fp, kRounds> table = [] {
    std::array<Fp, kRounds> c{};
    for (int i = 0; i < kRounds; ++i) {
      Hasher h(kConstantsTag);
      h.update_u64(static_cast<std::uint64_t>(i));
      Digest d = h.digest();
      std::uint64_t v = 0;
      for (int j = 0; j < 8; ++j) v |= std::uint64_t{d[j]} << (8 * j);
      c[i] = Fp(v);
    }
    return c;
  }();
  return table;
}

inline Fp pow17(Fp x) {
  Fp x2 = x * x;
  Fp x4 = x2 * x2;
  Fp x8 = x4 * x4;
  Fp x16 = x8 * x8;
  return x16 * x;
}

struct State {
  Fp left;
  Fp right;
};

inline void permute(State& st) {
  const auto& c = round_constants();
  for (int i = 0; i < kRounds; ++i) {
    Fp t = pow17(st.left + c[i]);
    Fp new_left = st.right + t;
    st.right = st.left;
    st.left = new_left;
  }
}

inline void absorb(State& st, Fp m) {
  st.left += m;
  permute(st);
}

/// Sponge hash of a field-element sequence.
inline Fp hash(std::span<const Fp> inputs) {
  State st{};
  absorb(st, Fp(inputs.size()));
  for (Fp m : inputs) absorb(st, m);
  return st.left;
}

inline Fp hash(std::initializer_list<Fp> inputs) { return hash(std::span<const Fp>(inputs.begin(), inputs.size())); }

/// Counter-mode PRG: element i = H(seed..., i).
inline std::vector<Fp> expand(std::span<const Fp> seed, std::size_t n, std::uint64_t offset = 0) {
  std::vector<Fp> out;
  out.reserve(n);
  std::vector<Fp> buf(seed.begin(), seed.end());
  buf.push_back(Fp(0));
  for (std::size_t i = 0; i < n; ++i) {
    buf.back() = Fp(offset + i);
    out.push_back(hash(buf));
  }
  return out;
}

/// In-circuit evaluation over authenticated inputs: 5 multiplications per round.
class CircuitHasher {
 public:
  explicit CircuitHasher(Session& s) : s_(&s) {}

  AuthValue pow17(const AuthValue& x) {
    AuthValue x2 = s_->mul(x, x);
    AuthValue x4 = s_->mul(x2, x2);
    AuthValue x8 = s_->mul(x4, x4);
    AuthValue x16 = s_->mul(x8, x8);
    return s_->mul(x16, x);
  }

  void permute(AuthValue& left, AuthValue& right) {
    const auto& c = round_constants();
    for (int i = 0; i < kRounds; ++i) {
      AuthValue t = pow17(s_->add_const(left, c[i]));
      AuthValue new_left = right + t;
      right = left;
      left = new_left;
    }
  }

  AuthValue hash(std::span<const AuthValue> inputs) {
    AuthValue left = s_->constant(Fp(inputs.size()));
    AuthValue right = s_->constant(Fp(0));
    permute(left, right);
    for (const auto& m : inputs) {
      left += m;
      permute(left, right);
    }
    return left;
  }

 private:
  Session* s_;
};

inline AuthValue hash_circuit(Session& s, std::span<const AuthValue> inputs) { return CircuitHasher(s).hash(inputs); }

}  // namespace oath::mimc
