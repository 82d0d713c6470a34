#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oath/field.hpp"

namespace oath {

using Seed = std::array<std::uint8_t, 32>;
using Digest = std::array<std::uint8_t, 32>;

inline void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 15]);
  }
  return s;
}

inline std::vector<std::uint8_t> from_hex(std::string_view s) {
  if (s.size() % 2 != 0) throw std::invalid_argument("hex string of odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(s[2 * i]) << 4 | nibble(s[2 * i + 1]));
  return out;
}

/// Incremental BLAKE2b-256.
class Hasher {
 public:
  Hasher() {
    ensure_sodium();
    crypto_generichash_init(&st_, nullptr, 0, 32);
  }
  explicit Hasher(std::string_view domain) : Hasher() { update(domain); }

  Hasher& update(std::span<const std::uint8_t> bytes) {
    crypto_generichash_update(&st_, bytes.data(), bytes.size());
    return *this;
  }
  Hasher& update(std::string_view s) {
    return update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  Hasher& update_u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(std::span<const std::uint8_t>(b, 8));
  }
  Hasher& update(Fp f) { return update_u64(f.value()); }

  // Finalises a copy, so the hasher may keep absorbing.
  Digest digest() const {
    auto copy = st_;
    Digest d{};
    crypto_generichash_final(&copy, d.data(), d.size());
    return d;
  }

 private:
  crypto_generichash_state st_{};
};

inline Seed derive_seed(const Seed& parent, std::string_view label, std::uint64_t index = 0) {
  Hasher h("oath-derive-seed");
  h.update(std::span<const std::uint8_t>(parent)).update(label).update_u64(index);
  return h.digest();
}

inline Seed seed_from_u64(std::uint64_t v) {
  Seed s{};
  for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return s;
}

/// Deterministic ChaCha20 keystream generator.
class Prg {
 public:
  explicit Prg(const Seed& seed, std::uint64_t stream = 0) : key_(seed) {
    ensure_sodium();
    for (int i = 0; i < 8; ++i) nonce_[i] = static_cast<std::uint8_t>(stream >> (8 * i));
  }

  void fill(std::span<std::uint8_t> out) {
    for (auto& b : out) {
      if (pos_ == buf_.size()) refill();
      b = buf_[pos_++];
    }
  }

  std::uint64_t next_u64() {
    if (pos_ + 8 > buf_.size()) refill();
    std::uint64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  // Uniform in [0, p) by rejection on 61-bit samples.
  Fp field() {
    for (;;) {
      std::uint64_t v = next_u64() & Fp::kModulus;
      if (v != Fp::kModulus) return Fp(v);
    }
  }

  Fp nonzero_field() {
    for (;;) {
      Fp f = field();
      if (!f.is_zero()) return f;
    }
  }

  // Uniform in [0, bound) without modulo bias.
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Prg::uniform: zero bound");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
      std::uint64_t v = next_u64();
      if (v < limit) return v % bound;
    }
  }

  // Uniform double in [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return unit() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform(i)]);
  }

 private:
  void refill() {
    // carry over an unread tail so next_u64 never straddles a refill
    std::size_t tail = buf_.size() - pos_;
    std::array<std::uint8_t, 8> keep{};
    std::memcpy(keep.data(), buf_.data() + pos_, tail);
    std::memset(buf_.data(), 0, buf_.size());
    crypto_stream_chacha20_xor_ic(buf_.data(), buf_.data(), buf_.size(), nonce_.data(), block_, key_.data());
    block_ += buf_.size() / 64;
    if (tail != 0) {
      std::memmove(buf_.data() + tail, buf_.data(), buf_.size() - tail);
      std::memcpy(buf_.data(), keep.data(), tail);
    }
    pos_ = 0;
  }

  Seed key_;
  std::array<std::uint8_t, 8> nonce_{};
  std::uint64_t block_ = 0;
  std::array<std::uint8_t, 4096> buf_{};
  std::size_t pos_ = 4096;
};

}  // namespace oath
