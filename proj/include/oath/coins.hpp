#pragma once

// Commit-reveal coin flipping between two parties, expanded into public
// field elements with the algebraic hash PRG.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oath/mimc.hpp"
#include "oath/random.hpp"

namespace oath {

/// Raised when the committing party opens something other than its commitment.
class CoinFlipAbort : public std::runtime_error {
 public:
  CoinFlipAbort(const std::string& msg, std::string blamed) : std::runtime_error(msg), blamed_(std::move(blamed)) {}
  const std::string& blamed() const { return blamed_; }

 private:
  std::string blamed_;
};

inline Digest coin_commitment(const Seed& seed, const Seed& nonce) {
  Hasher h("oath-coin-commit-v1");
  h.update(std::span<const std::uint8_t>(seed)).update(std::span<const std::uint8_t>(nonce));
  return h.digest();
}

/// Four 56-bit limbs of a seed as field elements.
inline std::vector<Fp> seed_elements(const Seed& s) {
  std::vector<Fp> out;
  for (int limb = 0; limb < 4; ++limb) {
    std::uint64_t v = 0;
    for (int i = 0; i < 7; ++i) v |= std::uint64_t{s[limb * 8 + i]} << (8 * i);
    out.push_back(Fp(v));
  }
  return out;
}

struct CoinParty {
  Seed seed{};
  Seed nonce{};
  // Cheating hook for the committing party: the seed it actually opens.
  std::optional<Seed> open_instead;

  static CoinParty from_prg(Prg& prg) {
    CoinParty p;
    prg.fill(p.seed);
    prg.fill(p.nonce);
    return p;
  }
};

struct CoinFlipResult {
  Seed joint{};
  Digest commitment{};
  std::vector<Fp> elements;
};

/// x commits to seed_x, y replies with seed_y, x opens; the joint seed is
/// seed_x XOR seed_y and the output is the hash PRG over it.
inline CoinFlipResult coin_flip(const CoinParty& x, const CoinParty& y, std::size_t n_elements,
                                const std::string& x_name = "x") {
  CoinFlipResult r;
  r.commitment = coin_commitment(x.seed, x.nonce);
  const Seed opened = x.open_instead.value_or(x.seed);
  if (coin_commitment(opened, x.nonce) != r.commitment)
    throw CoinFlipAbort("coin flip: opening does not match commitment", x_name);
  for (std::size_t i = 0; i < r.joint.size(); ++i) r.joint[i] = opened[i] ^ y.seed[i];
  auto se = seed_elements(r.joint);
  r.elements = mimc::expand(se, n_elements);
  return r;
}

}  // namespace oath
