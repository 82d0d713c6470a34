#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace oath {

/// Element of the Mersenne prime field F_p, p = 2^61 - 1.
///
/// Values are kept fully reduced (0 <= v < p). Signed integers are embedded
/// with negatives mapped to p - |v|; `to_signed` undoes that for values whose
/// magnitude is below p/2.
class Fp {
 public:
  static constexpr std::uint64_t kModulus = (std::uint64_t{1} << 61) - 1;
  static constexpr int kBits = 61;

  constexpr Fp() = default;
  constexpr explicit Fp(std::uint64_t v) : v_(reduce64(v)) {}

  static constexpr Fp from_signed(std::int64_t v) {
    if (v >= 0) return Fp(static_cast<std::uint64_t>(v));
    // -v may overflow for INT64_MIN; reduce magnitude first
    std::uint64_t mag = static_cast<std::uint64_t>(-(v + 1)) + 1;
    return -Fp(mag);
  }

  // Canonical value in [0, p).
  constexpr std::uint64_t value() const { return v_; }

  // Interprets values above (p-1)/2 as negative.
  constexpr std::int64_t to_signed() const {
    if (v_ > kModulus / 2) return -static_cast<std::int64_t>(kModulus - v_);
    return static_cast<std::int64_t>(v_);
  }

  constexpr bool is_zero() const { return v_ == 0; }

  friend constexpr Fp operator+(Fp a, Fp b) {
    std::uint64_t s = a.v_ + b.v_;
    if (s >= kModulus) s -= kModulus;
    return raw(s);
  }
  friend constexpr Fp operator-(Fp a, Fp b) {
    return raw(a.v_ >= b.v_ ? a.v_ - b.v_ : a.v_ + kModulus - b.v_);
  }
  constexpr Fp operator-() const { return raw(v_ == 0 ? 0 : kModulus - v_); }
  friend constexpr Fp operator*(Fp a, Fp b) {
    unsigned __int128 prod = static_cast<unsigned __int128>(a.v_) * b.v_;
    std::uint64_t lo = static_cast<std::uint64_t>(prod) & kModulus;
    std::uint64_t hi = static_cast<std::uint64_t>(prod >> 61);
    std::uint64_t s = lo + hi;
    if (s >= kModulus) s -= kModulus;
    return raw(s);
  }
  constexpr Fp& operator+=(Fp o) { return *this = *this + o; }
  constexpr Fp& operator-=(Fp o) { return *this = *this - o; }
  constexpr Fp& operator*=(Fp o) { return *this = *this * o; }

  constexpr Fp pow(std::uint64_t e) const {
    Fp base = *this;
    Fp acc(1);
    while (e != 0) {
      if (e & 1) acc *= base;
      base *= base;
      e >>= 1;
    }
    return acc;
  }

  // Multiplicative inverse; throws on zero.
  Fp inverse() const {
    if (v_ == 0) throw std::domain_error("Fp: inverse of zero");
    return pow(kModulus - 2);
  }

  friend constexpr bool operator==(Fp a, Fp b) { return a.v_ == b.v_; }
  friend constexpr auto operator<=>(Fp a, Fp b) { return a.v_ <=> b.v_; }

  // Little-endian 8-byte encoding.
  std::array<std::uint8_t, 8> to_bytes() const {
    std::array<std::uint8_t, 8> out{};
    for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v_ >> (8 * i));
    return out;
  }

  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v_;
    return os.str();
  }

  static Fp from_hex(const std::string& s) {
    if (s.empty() || s.size() > 16) throw std::invalid_argument("Fp: bad hex '" + s + "'");
    std::uint64_t v = 0;
    for (char c : s) {
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else throw std::invalid_argument("Fp: bad hex '" + s + "'");
      v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    if (v >= kModulus) throw std::invalid_argument("Fp: hex value not reduced");
    return raw(v);
  }

 private:
  static constexpr Fp raw(std::uint64_t v) {
    Fp f;
    f.v_ = v;
    return f;
  }
  static constexpr std::uint64_t reduce64(std::uint64_t v) {
    std::uint64_t s = (v & kModulus) + (v >> 61);
    return s >= kModulus ? s - kModulus : s;
  }

  std::uint64_t v_ = 0;
};

using FieldElement = Fp;

inline std::ostream& operator<<(std::ostream& os, Fp f) { return os << f.value(); }

namespace detail {
constexpr std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b) {
  while (b != 0) {
    std::uint64_t t = a % b;
    a = b;
    b = t;
  }
  return a;
}
}  // namespace detail

}  // namespace oath

template <>
struct std::hash<oath::Fp> {
  std::size_t operator()(oath::Fp f) const noexcept { return std::hash<std::uint64_t>{}(f.value()); }
};
