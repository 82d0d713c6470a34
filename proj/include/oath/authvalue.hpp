#pragma once

// IT-MAC authenticated values over F_p with a trusted-dealer emulation of the
// preprocessing (random authenticated masks and Beaver triples) that a
// VOLE-based backend would otherwise produce.
//
// Both roles live in one process. An AuthValue carries the prover's share
// (x, mac) and the verifier's key side by side; protocol code only ever reads
// the half that belongs to the role executing it. The invariant
//   mac = key + delta * x
// holds for every value produced by the operations below.

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oath/field.hpp"
#include "oath/random.hpp"

namespace oath {

/// Verifier rejection: a MAC check or a circuit constraint failed.
class SoundnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the API, e.g. mixing values from different sessions.
class SetupError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ProverShare {
  Fp value;
  Fp mac;
};

struct VerifierKey {
  Fp key;
};

class AuthValue {
 public:
  AuthValue() = default;

  const ProverShare& prover() const { return p_; }
  const VerifierKey& verifier() const { return k_; }
  std::uint32_t session_id() const { return session_; }

  friend AuthValue operator+(const AuthValue& a, const AuthValue& b) {
    check_same(a, b);
    return AuthValue({a.p_.value + b.p_.value, a.p_.mac + b.p_.mac}, {a.k_.key + b.k_.key}, a.session_);
  }
  friend AuthValue operator-(const AuthValue& a, const AuthValue& b) {
    check_same(a, b);
    return AuthValue({a.p_.value - b.p_.value, a.p_.mac - b.p_.mac}, {a.k_.key - b.k_.key}, a.session_);
  }
  friend AuthValue operator*(Fp c, const AuthValue& a) {
    return AuthValue({c * a.p_.value, c * a.p_.mac}, {c * a.k_.key}, a.session_);
  }
  AuthValue operator-() const { return AuthValue({-p_.value, -p_.mac}, {-k_.key}, session_); }
  AuthValue& operator+=(const AuthValue& o) { return *this = *this + o; }
  AuthValue& operator-=(const AuthValue& o) { return *this = *this - o; }

 private:
  friend class Session;
  friend class Dealer;

  AuthValue(ProverShare p, VerifierKey k, std::uint32_t session) : p_(p), k_(k), session_(session) {}

  static void check_same(const AuthValue& a, const AuthValue& b) {
    if (a.session_ != b.session_) throw SetupError("AuthValue operands belong to different dealers");
  }

  ProverShare p_;
  VerifierKey k_;
  std::uint32_t session_ = 0;
};

inline AuthValue add(const AuthValue& a, const AuthValue& b) { return a + b; }
inline AuthValue scalar_mul(Fp c, const AuthValue& a) { return c * a; }

/// Trusted dealer: samples the global key and all correlated randomness
/// deterministically from its seed.
class Dealer {
 public:
  explicit Dealer(const Seed& seed) : seed_(seed), prg_(seed, 0) { delta_ = prg_.nonzero_field(); }

  const Seed& seed() const { return seed_; }
  Fp delta() const { return delta_; }
  std::uint64_t issued_triples() const { return triples_; }
  std::uint64_t issued_masks() const { return masks_; }

  struct Triple {
    ProverShare a, b, c;
    VerifierKey ka, kb, kc;
  };

  // Random authenticated mask u (prover learns u and its MAC, verifier the key).
  std::pair<ProverShare, VerifierKey> mask() {
    ++masks_;
    return authenticated(prg_.field());
  }

  Triple triple() {
    ++triples_;
    Fp a = prg_.field();
    Fp b = prg_.field();
    auto [pa, ka] = authenticated(a);
    auto [pb, kb] = authenticated(b);
    auto [pc, kc] = authenticated(a * b);
    return {pa, pb, pc, ka, kb, kc};
  }

 private:
  std::pair<ProverShare, VerifierKey> authenticated(Fp x) {
    Fp key = prg_.field();
    return {ProverShare{x, key + delta_ * x}, VerifierKey{key}};
  }

  Seed seed_;
  Prg prg_;
  Fp delta_;
  std::uint64_t triples_ = 0;
  std::uint64_t masks_ = 0;
};

inline Dealer dealer_setup(const Seed& seed) { return Dealer(seed); }

/// Hooks a cheating prover may install. The honest prover leaves them unset.
class ProverStrategy {
 public:
  virtual ~ProverStrategy() = default;
  // Called for every committed witness; returns the value actually committed.
  virtual Fp on_input(const char* site, std::uint64_t index, Fp honest) {
    (void)site;
    (void)index;
    return honest;
  }
  // Called for every opening; may alter the value and tag sent to the verifier.
  virtual void on_open(std::uint64_t index, Fp& value, Fp& mac) {
    (void)index;
    (void)value;
    (void)mac;
  }
};

struct SessionStats {
  std::uint64_t inputs = 0;
  std::uint64_t opens = 0;
  std::uint64_t muls = 0;
  std::uint64_t zero_checks = 0;
  std::uint64_t batch_checks = 0;
  std::uint64_t challenges = 0;
  // Field elements sent prover -> verifier.
  std::uint64_t prover_elements = 0;
};

/// One prover/verifier protocol session over a shared dealer.
///
/// Openings are MAC-checked lazily: the verifier accumulates (key, value)
/// pairs and `flush` runs a random-linear-combination check whose coefficient
/// is derived from the transcript hash. Any rejection throws SoundnessError.
class Session {
 public:
  explicit Session(const Seed& dealer_seed, ProverStrategy* strategy = nullptr)
      : dealer_(dealer_seed), delta_(dealer_.delta()), id_(next_id()), strategy_(strategy),
        transcript_("oath-transcript-v1"), schedule_("oath-schedule-v1") {}

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  std::uint32_t id() const { return id_; }
  const Dealer& dealer() const { return dealer_; }
  const SessionStats& stats() const { return stats_; }
  void set_strategy(ProverStrategy* s) { strategy_ = s; }

  /// Prover commits a witness value: dealer mask u, prover sends x - u.
  AuthValue input(Fp x, const char* site = "witness") {
    if (strategy_ != nullptr) x = strategy_->on_input(site, stats_.inputs, x);
    ++stats_.inputs;
    auto [pu, ku] = dealer_.mask();
    Fp masked = x - pu.value;
    send(Msg::kInput, masked);
    return AuthValue({x, pu.mac}, {ku.key - delta_ * masked}, id_);
  }

  AuthValue authenticate(Fp x) { return input(x, "authenticate"); }

  /// Public constant known to both parties; no communication.
  AuthValue constant(Fp c) const { return AuthValue({c, Fp(0)}, {-(delta_ * c)}, id_); }

  AuthValue add_const(const AuthValue& a, Fp c) const {
    check_own(a);
    return AuthValue({a.p_.value + c, a.p_.mac}, {a.k_.key - delta_ * c}, id_);
  }

  /// Beaver multiplication with one dealer triple.
  AuthValue mul(const AuthValue& x, const AuthValue& y) {
    check_own(x);
    check_own(y);
    ++stats_.muls;
    auto t = dealer_.triple();
    AuthValue a(t.a, t.ka, id_), b(t.b, t.kb, id_), c(t.c, t.kc, id_);
    Fp d = open(x - a);
    Fp e = open(y - b);
    return add_const(c + d * b + e * a, d * e);
  }

  /// Prover reveals the value; the MAC is checked at the next flush.
  Fp open(const AuthValue& a) {
    check_own(a);
    Fp value = a.p_.value;
    Fp mac = a.p_.mac;
    if (strategy_ != nullptr) strategy_->on_open(stats_.opens, value, mac);
    ++stats_.opens;
    send(Msg::kOpen, value);
    pending_macs_.push_back(mac);
    pending_keys_.push_back(a.k_.key + delta_ * value);
    if (pending_macs_.size() >= kAutoFlush) flush();
    return value;
  }

  /// Opens and checks the MAC immediately.
  Fp open_and_verify(const AuthValue& a) {
    check_own(a);
    Fp value = a.p_.value;
    Fp mac = a.p_.mac;
    if (strategy_ != nullptr) strategy_->on_open(stats_.opens, value, mac);
    ++stats_.opens;
    send(Msg::kOpen, value);
    send(Msg::kTag, mac);
    if (!verify_opening(a.verifier(), value, mac))
      throw SoundnessError("MAC check failed on opened value");
    return value;
  }

  /// Verifier-side check of a claimed opening (value, mac) against its key.
  bool verify_opening(const VerifierKey& k, Fp value, Fp mac) const { return mac == k.key + delta_ * value; }

  void assert_zero(const AuthValue& a, const char* what = "constraint") {
    ++stats_.zero_checks;
    if (!open(a).is_zero()) throw SoundnessError(std::string("constraint violated: ") + what);
  }

  void assert_equal(const AuthValue& a, Fp expected, const char* what = "equality") {
    assert_zero(add_const(a, -expected), what);
  }

  /// Batched MAC check over all pending openings.
  void flush() {
    if (pending_macs_.empty()) return;
    ++stats_.batch_checks;
    Fp chi = challenge();
    Fp tag(0), expected(0);
    // Horner over both sides with the same coefficient
    for (std::size_t i = pending_macs_.size(); i-- > 0;) {
      tag = tag * chi + pending_macs_[i];
      expected = expected * chi + pending_keys_[i];
    }
    pending_macs_.clear();
    pending_keys_.clear();
    send(Msg::kTag, tag);
    if (tag != expected) throw SoundnessError("batched MAC check failed");
  }

  /// Public challenge derived from the transcript so far.
  Fp challenge() {
    ++stats_.challenges;
    drain();
    Digest d = transcript_.digest();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{d[i]} << (8 * i);
    Fp c(v & Fp::kModulus);
    transcript_.update_u64(0xC4A11E46E0000000ULL | stats_.challenges);
    return c;
  }

  std::size_t pending() const { return pending_macs_.size(); }

  /// Hash of every message exchanged so far.
  Digest transcript_digest() {
    drain();
    return transcript_.digest();
  }
  /// Hash of message kinds only: the schedule visible to a verifier,
  /// independent of the values carried.
  Digest schedule_digest() {
    drain();
    return schedule_.digest();
  }

 private:
  enum class Msg : std::uint8_t { kInput = 1, kOpen = 2, kTag = 3 };
  static constexpr std::size_t kAutoFlush = std::size_t{1} << 16;

  static std::uint32_t next_id() {
    static std::atomic<std::uint32_t> counter{1};
    return counter.fetch_add(1);
  }

  void check_own(const AuthValue& a) const {
    if (a.session_ != id_) throw SetupError("AuthValue does not belong to this session");
  }

  void send(Msg kind, Fp v) {
    ++stats_.prover_elements;
    if (buf_pos_ + 9 > buf_.size()) drain();
    buf_[buf_pos_++] = static_cast<std::uint8_t>(kind);
    std::uint64_t x = v.value();
    for (int i = 0; i < 8; ++i) buf_[buf_pos_++] = static_cast<std::uint8_t>(x >> (8 * i));
    kinds_[kinds_pos_++] = static_cast<std::uint8_t>(kind);
    if (kinds_pos_ == kinds_.size()) drain_kinds();
  }

  void drain() {
    if (buf_pos_ != 0) {
      transcript_.update(std::span<const std::uint8_t>(buf_.data(), buf_pos_));
      buf_pos_ = 0;
    }
    drain_kinds();
  }
  void drain_kinds() {
    if (kinds_pos_ != 0) {
      schedule_.update(std::span<const std::uint8_t>(kinds_.data(), kinds_pos_));
      kinds_pos_ = 0;
    }
  }

  Dealer dealer_;
  Fp delta_;  // verifier's copy of the global key
  std::uint32_t id_;
  ProverStrategy* strategy_;
  SessionStats stats_;
  std::vector<Fp> pending_macs_;  // prover side
  std::vector<Fp> pending_keys_;  // verifier side: key + delta * claimed value
  Hasher transcript_;
  Hasher schedule_;
  std::array<std::uint8_t, 9 * 512> buf_{};
  std::size_t buf_pos_ = 0;
  std::array<std::uint8_t, 4096> kinds_{};
  std::size_t kinds_pos_ = 0;
};

}  // namespace oath
