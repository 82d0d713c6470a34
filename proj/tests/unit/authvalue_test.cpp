#include <gtest/gtest.h>

#include <functional>
#include <memory>
#include <set>

#include "oath/authvalue.hpp"

using namespace oath;

namespace {

Seed zero_seed() { return Seed{}; }

// Invariant check with dealer access: mac = key + delta * x.
bool invariant_holds(const Session& s, const AuthValue& a) {
  return a.prover().mac == a.verifier().key + s.dealer().delta() * a.prover().value;
}

}  // namespace

TEST(Dealer, ZeroSeedIsReproducible) {
  Dealer a = dealer_setup(zero_seed());
  Dealer b = dealer_setup(zero_seed());
  EXPECT_EQ(a.delta(), b.delta());
  EXPECT_FALSE(a.delta().is_zero());
}

TEST(Dealer, SameSeedSameTriples) {
  Dealer a(seed_from_u64(3)), b(seed_from_u64(3));
  for (int i = 0; i < 50; ++i) {
    auto ta = a.triple();
    auto tb = b.triple();
    EXPECT_EQ(ta.c.value, tb.c.value);
    EXPECT_EQ(ta.kc.key, tb.kc.key);
  }
  EXPECT_EQ(a.issued_triples(), 50u);
}

TEST(Dealer, DistinctSeedsGiveDistinctDeltas) {
  std::set<std::uint64_t> deltas;
  for (std::uint64_t i = 0; i < 100; ++i) deltas.insert(Dealer(seed_from_u64(i)).delta().value());
  EXPECT_EQ(deltas.size(), 100u);
}

TEST(Dealer, TriplesAreMultiplicativeAndAuthenticated) {
  Dealer d(seed_from_u64(4));
  for (int i = 0; i < 1000; ++i) {
    auto t = d.triple();
    EXPECT_EQ(t.c.value, t.a.value * t.b.value);
    EXPECT_EQ(t.c.mac, t.kc.key + d.delta() * t.c.value);
    EXPECT_EQ(t.a.mac, t.ka.key + d.delta() * t.a.value);
  }
}

TEST(Authenticate, ZeroAndOne) {
  Session s(seed_from_u64(1));
  AuthValue z = s.authenticate(Fp(0));
  EXPECT_EQ(z.prover().mac, z.verifier().key);
  AuthValue o = s.authenticate(Fp(1));
  EXPECT_EQ(o.prover().mac, o.verifier().key + s.dealer().delta());
}

TEST(Authenticate, InvariantOnRandomValues) {
  Session s(seed_from_u64(2));
  Prg prg(seed_from_u64(99));
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(invariant_holds(s, s.authenticate(prg.field())));
}

TEST(Linear, AddScalarConst) {
  Session s(seed_from_u64(5));
  EXPECT_EQ(s.open_and_verify(add(s.authenticate(Fp(3)), s.authenticate(Fp(4)))), Fp(7));
  EXPECT_EQ(s.open_and_verify(scalar_mul(Fp(0), s.authenticate(Fp(12345)))), Fp(0));
  Prg prg(seed_from_u64(6));
  for (int i = 0; i < 1000; ++i) {
    Fp x = prg.field(), c = prg.field();
    AuthValue r = s.add_const(s.authenticate(x), c);
    EXPECT_TRUE(invariant_holds(s, r));
    EXPECT_EQ(s.open(r), x + c);
  }
  s.flush();
}

TEST(Linear, ConstantsCarryValidMacs) {
  Session s(seed_from_u64(5));
  AuthValue c = s.constant(Fp(42));
  EXPECT_TRUE(invariant_holds(s, c));
  EXPECT_EQ(s.open_and_verify(c), Fp(42));
}

TEST(Linear, MixedDealersRejected) {
  Session s1(seed_from_u64(1)), s2(seed_from_u64(1));
  AuthValue a = s1.authenticate(Fp(1));
  AuthValue b = s2.authenticate(Fp(2));
  EXPECT_THROW((void)(a + b), SetupError);
  EXPECT_THROW((void)s1.mul(a, b), SetupError);
  EXPECT_THROW((void)s1.open(b), SetupError);
}

TEST(Mul, IdentitiesAndRandom) {
  Session s(seed_from_u64(10));
  Prg prg(seed_from_u64(11));
  Fp x = prg.field();
  EXPECT_EQ(s.open(s.mul(s.authenticate(Fp(0)), s.authenticate(x))), Fp(0));
  EXPECT_EQ(s.open(s.mul(s.authenticate(Fp(1)), s.authenticate(x))), x);
  for (int i = 0; i < 1000; ++i) {
    Fp a = prg.field(), b = prg.field();
    AuthValue p = s.mul(s.authenticate(a), s.authenticate(b));
    EXPECT_TRUE(invariant_holds(s, p));
    EXPECT_EQ(s.open(p), a * b);
  }
  s.flush();
  EXPECT_EQ(s.dealer().issued_triples(), 1002u);
}

namespace {

struct TamperOpen : ProverStrategy {
  std::function<void(Fp&, Fp&)> f;
  void on_open(std::uint64_t, Fp& v, Fp& m) override { f(v, m); }
};

}  // namespace

TEST(Open, HonestAccepted) {
  Session s(seed_from_u64(12));
  EXPECT_EQ(s.open_and_verify(s.authenticate(Fp(7))), Fp(7));
}

TEST(Open, ShiftedValueRejected) {
  TamperOpen t;
  t.f = [](Fp& v, Fp&) { v += Fp(1); };
  Session s(seed_from_u64(13));
  AuthValue a = s.authenticate(Fp(7));
  s.set_strategy(&t);
  EXPECT_THROW(s.open_and_verify(a), SoundnessError);
}

TEST(Open, BatchedCheckCatchesTamperAtFlush) {
  Session s(seed_from_u64(14));
  std::vector<AuthValue> vs;
  for (int i = 0; i < 100; ++i) vs.push_back(s.authenticate(Fp(i)));
  for (int i = 0; i < 50; ++i) s.open(vs[i]);
  s.flush();
  TamperOpen t;
  int n = 0;
  t.f = [&n](Fp& v, Fp&) {
    if (++n == 20) v += Fp(5);
  };
  s.set_strategy(&t);
  for (int i = 50; i < 100; ++i) s.open(vs[i]);
  EXPECT_THROW(s.flush(), SoundnessError);
}

TEST(Open, RandomForgeriesNeverAccepted) {
  Session s(seed_from_u64(15));
  Prg adv(seed_from_u64(16));
  AuthValue a = s.authenticate(Fp(7));
  int accepted = 0;
  for (int i = 0; i < 100000; ++i) {
    Fp v = adv.field(), m = adv.field();
    if (v == Fp(7)) continue;  // not a forgery
    accepted += s.verify_opening(a.verifier(), v, m) ? 1 : 0;
  }
  EXPECT_EQ(accepted, 0);
}

namespace {

// Random expression over {add, sub, scalar, add_const, mul}, evaluated both
// over plaintext and over authenticated values.
struct Expr {
  Fp plain;
  AuthValue auth;
};

Expr random_expr(Session& s, Prg& prg, int depth) {
  if (depth == 0 || prg.uniform(4) == 0) {
    Fp x = prg.field();
    return {x, s.authenticate(x)};
  }
  switch (prg.uniform(5)) {
    case 0: {
      auto l = random_expr(s, prg, depth - 1), r = random_expr(s, prg, depth - 1);
      return {l.plain + r.plain, l.auth + r.auth};
    }
    case 1: {
      auto l = random_expr(s, prg, depth - 1), r = random_expr(s, prg, depth - 1);
      return {l.plain - r.plain, l.auth - r.auth};
    }
    case 2: {
      auto l = random_expr(s, prg, depth - 1);
      Fp c = prg.field();
      return {c * l.plain, c * l.auth};
    }
    case 3: {
      auto l = random_expr(s, prg, depth - 1);
      Fp c = prg.field();
      return {l.plain + c, s.add_const(l.auth, c)};
    }
    default: {
      auto l = random_expr(s, prg, depth - 1), r = random_expr(s, prg, depth - 1);
      return {l.plain * r.plain, s.mul(l.auth, r.auth)};
    }
  }
}

}  // namespace

TEST(Property, RandomExpressionTreesMatchPlaintext) {
  Session s(seed_from_u64(20));
  Prg prg(seed_from_u64(21));
  for (int i = 0; i < 10000; ++i) {
    int depth = 1 + static_cast<int>(prg.uniform(8));
    Expr e = random_expr(s, prg, depth);
    ASSERT_EQ(s.open(e.auth), e.plain);
  }
  EXPECT_NO_THROW(s.flush());
}

TEST(Property, TranscriptsAreDeterministic) {
  auto run = [](std::uint64_t seed) {
    Session s(seed_from_u64(seed));
    Prg prg(seed_from_u64(77));
    for (int i = 0; i < 200; ++i) (void)s.open(random_expr(s, prg, 5).auth);
    s.flush();
    return s.transcript_digest();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}
