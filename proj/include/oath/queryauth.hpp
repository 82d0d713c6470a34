#pragma once

// Authenticated query answering between a client and a provider: fair coins,
// signatures in both directions, and a hash commitment of (q, r, o) appended
// to the verifier's store. Blame attestation resolves disputed records.

#include <sodium.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oath/certify.hpp"
#include "oath/coins.hpp"
#include "oath/mimc.hpp"
#include "oath/models.hpp"

namespace oath {

using PublicKey = std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES>;
using Signature = std::array<std::uint8_t, crypto_sign_BYTES>;

/// Any EUF-CMA signature scheme.
class Signer {
 public:
  virtual ~Signer() = default;
  virtual Signature sign(std::span<const std::uint8_t> msg) const = 0;
  virtual const PublicKey& public_key() const = 0;
};

inline bool verify_signature(const PublicKey& pk, std::span<const std::uint8_t> msg, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(), pk.data()) == 0;
}

class Ed25519Signer : public Signer {
 public:
  explicit Ed25519Signer(const Seed& seed) {
    ensure_sodium();
    static_assert(crypto_sign_SEEDBYTES == 32);
    crypto_sign_seed_keypair(pk_.data(), sk_.data(), seed.data());
  }
  ~Ed25519Signer() override { sodium_memzero(sk_.data(), sk_.size()); }

  Signature sign(std::span<const std::uint8_t> msg) const override {
    Signature sig{};
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), sk_.data());
    return sig;
  }
  const PublicKey& public_key() const override { return pk_; }

 private:
  PublicKey pk_{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk_{};
};

// ---------------------------------------------------------------------------
// Canonical encodings

/// A client query: fixed-point features plus the sensitive attribute.
struct Query {
  std::vector<std::int64_t> features;
  Group group = Group::kA;
  bool operator==(const Query&) const = default;
};

inline constexpr char kRecordMagic[8] = {'O', 'A', 'T', 'H', 'R', 'E', 'C', '1'};
inline constexpr std::uint32_t kRecordVersion = 1;
inline const Fp kRecordTag = Fp(0x3143455248544fULL);  // "OATHREC1" low 7 bytes
inline const Fp kQueryTag = Fp(0x51);                   // domain of q || r messages

/// Field sequence for q || r, the client-signed message.
inline std::vector<Fp> query_elements(const Query& q, std::span<const Fp> r) {
  std::vector<Fp> e{kRecordTag, Fp(kRecordVersion), kQueryTag, Fp(q.features.size())};
  for (auto x : q.features) e.push_back(Fp::from_signed(x));
  e.push_back(Fp(group_code(q.group)));
  e.push_back(Fp(r.size()));
  e.insert(e.end(), r.begin(), r.end());
  return e;
}

/// Field sequence for q || r || o, the provider-signed message and the
/// commitment preimage.
inline std::vector<Fp> record_elements(const Query& q, std::span<const Fp> r, int o) {
  std::vector<Fp> e{kRecordTag, Fp(kRecordVersion), Fp(0x52), Fp(q.features.size())};
  for (auto x : q.features) e.push_back(Fp::from_signed(x));
  e.push_back(Fp(group_code(q.group)));
  e.push_back(Fp(r.size()));
  e.insert(e.end(), r.begin(), r.end());
  e.push_back(Fp(static_cast<std::uint64_t>(o)));
  return e;
}

/// "OATHREC1", u32 element count, then each element as u64 little-endian.
inline std::vector<std::uint8_t> canonical_bytes(std::span<const Fp> elements) {
  std::vector<std::uint8_t> out(kRecordMagic, kRecordMagic + 8);
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(elements.size(), 4);
  for (Fp e : elements) put(e.value(), 8);
  return out;
}

inline Fp query_commitment(const Query& q, std::span<const Fp> r, int o) { return mimc::hash(record_elements(q, r, o)); }

// ---------------------------------------------------------------------------
// Records and stores

/// What the provider retains per answered query.
struct QueryRecord {
  std::uint64_t index = 0;
  std::string client_id;
  Query q;
  std::vector<Fp> r;
  int o = 0;
  Signature sig_p{};  // client's signature over q || r
  Signature sig_c{};  // provider's signature over q || r || o
  Fp commitment;      // H(q || r || o) as computed by the provider

  bool operator==(const QueryRecord&) const = default;
};

struct StoreEntry {
  std::uint64_t index = 0;
  Fp commitment;
  std::string client_id;
  bool operator==(const StoreEntry&) const = default;
};

/// The verifier's append-only commitment store.
class CommitmentStore {
 public:
  std::uint64_t append(Fp commitment, const std::string& client_id) {
    const std::uint64_t i = entries_.size();
    entries_.push_back({i, commitment, client_id});
    return i;
  }
  const std::vector<StoreEntry>& entries() const { return entries_; }
  const StoreEntry& at(std::uint64_t i) const { return entries_.at(i); }
  std::size_t size() const { return entries_.size(); }

  void write(std::ostream& os) const {
    os << nlohmann::json{{"format", "oath-commitments"}, {"version", 1}}.dump() << '\n';
    for (const auto& e : entries_)
      os << nlohmann::json{{"index", e.index}, {"commitment", e.commitment.hex()}, {"client_id", e.client_id}}.dump()
         << '\n';
  }
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write(os);
  }

  static CommitmentStore read(std::istream& is) {
    CommitmentStore s;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("commitment store: empty");
    auto head = nlohmann::json::parse(line);
    if (head.value("format", "") != "oath-commitments" || head.value("version", 0) != 1)
      throw std::runtime_error("commitment store: unsupported format");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      const std::uint64_t idx = j.at("index");
      if (idx != s.entries_.size()) throw std::runtime_error("commitment store: indices not dense");
      s.entries_.push_back({idx, Fp::from_hex(j.at("commitment").get<std::string>()), j.at("client_id")});
    }
    return s;
  }
  static CommitmentStore load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read(is);
  }

 private:
  std::vector<StoreEntry> entries_;
};

namespace detail {

inline void put_bytes(std::ostream& os, std::span<const std::uint8_t> b) {
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}
template <std::size_t N>
inline std::array<std::uint8_t, N> get_bytes(std::istream& is) {
  std::array<std::uint8_t, N> out{};
  if (!is.read(reinterpret_cast<char*>(out.data()), N)) throw std::runtime_error("truncated binary input");
  return out;
}

}  // namespace detail

/// Binary provider log: "OATHREC1", u32 version, u64 count, then per record
/// u64 index, u32 id length + id bytes, u32 dim, i64 features, u8 group,
/// u32 |r|, u64 r, u8 o, 64-byte sig_p, 64-byte sig_c, u64 commitment.
inline void write_query_log(std::ostream& os, const std::vector<QueryRecord>& log) {
  os.write(kRecordMagic, 8);
  detail::put_u32(os, kRecordVersion);
  detail::put_u64(os, log.size());
  for (const auto& rec : log) {
    detail::put_u64(os, rec.index);
    detail::put_u32(os, static_cast<std::uint32_t>(rec.client_id.size()));
    os.write(rec.client_id.data(), static_cast<std::streamsize>(rec.client_id.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(rec.q.features.size()));
    for (auto x : rec.q.features) detail::put_u64(os, static_cast<std::uint64_t>(x));
    os.put(static_cast<char>(group_code(rec.q.group)));
    detail::put_u32(os, static_cast<std::uint32_t>(rec.r.size()));
    for (Fp x : rec.r) detail::put_u64(os, x.value());
    os.put(static_cast<char>(rec.o));
    detail::put_bytes(os, rec.sig_p);
    detail::put_bytes(os, rec.sig_c);
    detail::put_u64(os, rec.commitment.value());
  }
}

inline std::vector<QueryRecord> read_query_log(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kRecordMagic, 8) != 0) throw std::runtime_error("not an OATHREC1 log");
  if (detail::get_uint(is, 4) != kRecordVersion) throw std::runtime_error("unsupported query log version");
  const std::uint64_t n = detail::get_uint(is, 8);
  if (n > kMaxRecords) throw std::runtime_error("query log too large");
  std::vector<QueryRecord> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    QueryRecord rec;
    rec.index = detail::get_uint(is, 8);
    const auto id_len = detail::get_uint(is, 4);
    if (id_len > 4096) throw std::runtime_error("query log: implausible client id");
    rec.client_id.resize(id_len);
    if (!is.read(rec.client_id.data(), static_cast<std::streamsize>(id_len))) throw std::runtime_error("truncated binary input");
    const auto d = detail::get_uint(is, 4);
    if (d > 4096) throw std::runtime_error("query log: implausible dimension");
    for (std::uint64_t j = 0; j < d; ++j) rec.q.features.push_back(static_cast<std::int64_t>(detail::get_uint(is, 8)));
    rec.q.group = group_from_code(detail::get_uint(is, 1));
    const auto nr = detail::get_uint(is, 4);
    if (nr > 4096) throw std::runtime_error("query log: implausible randomness length");
    for (std::uint64_t j = 0; j < nr; ++j) {
      std::uint64_t v = detail::get_uint(is, 8);
      if (v >= Fp::kModulus) throw std::runtime_error("query log: non-canonical field element");
      rec.r.push_back(Fp(v));
    }
    rec.o = static_cast<int>(detail::get_uint(is, 1));
    if (rec.o != 0 && rec.o != 1) throw std::runtime_error("query log: outcome must be 0/1");
    rec.sig_p = detail::get_bytes<crypto_sign_BYTES>(is);
    rec.sig_c = detail::get_bytes<crypto_sign_BYTES>(is);
    std::uint64_t c = detail::get_uint(is, 8);
    if (c >= Fp::kModulus) throw std::runtime_error("query log: non-canonical field element");
    rec.commitment = Fp(c);
    out.push_back(std::move(rec));
  }
  return out;
}

inline void save_query_log(const std::string& path, const std::vector<QueryRecord>& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_query_log(os, log);
}
inline std::vector<QueryRecord> load_query_log(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_query_log(is);
}

/// Public keys of registered clients and of the provider.
struct KeyRegistry {
  PublicKey provider{};
  std::map<std::string, PublicKey> clients;

  const PublicKey& client(const std::string& id) const {
    auto it = clients.find(id);
    if (it == clients.end()) throw std::invalid_argument("unregistered client '" + id + "'");
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [id, pk] : clients) c[id] = to_hex(pk);
    return {{"provider", to_hex(provider)}, {"clients", c}};
  }
  static KeyRegistry from_json(const nlohmann::json& j) {
    auto key = [](const std::string& hex) {
      auto b = from_hex(hex);
      if (b.size() != crypto_sign_PUBLICKEYBYTES) throw std::runtime_error("key registry: bad key length");
      PublicKey pk{};
      std::copy(b.begin(), b.end(), pk.begin());
      return pk;
    };
    KeyRegistry r;
    r.provider = key(j.at("provider"));
    for (const auto& [id, hex] : j.at("clients").items()) r.clients[id] = key(hex);
    return r;
  }
};

// ---------------------------------------------------------------------------
// Parties

/// Cheating hooks for the provider; the default is honest.
class ProviderBehavior {
 public:
  virtual ~ProviderBehavior() = default;
  // Outcome actually returned for query number `index`.
  virtual int answer(std::uint64_t index, const Query& q, std::span<const Fp> r, int honest) {
    (void)index;
    (void)q;
    (void)r;
    return honest;
  }
  virtual void corrupt_signature(std::uint64_t index, Signature& sig_c) {
    (void)index;
    (void)sig_c;
  }
};

/// Cheating hooks for a client.
class ClientBehavior {
 public:
  virtual ~ClientBehavior() = default;
  virtual void corrupt_signature(std::uint64_t index, Signature& sig_p) {
    (void)index;
    (void)sig_p;
  }
  virtual Fp commitment(std::uint64_t index, Fp honest) {
    (void)index;
    return honest;
  }
};

class Provider {
 public:
  Provider(ThresholdedModel model, const Seed& key_seed, CertificationResult cert)
      : model_(std::move(model)), signer_(key_seed), cert_(std::move(cert)), digest_(model_digest(model_)),
        coins_(derive_seed(key_seed, "coins")) {}

  const ThresholdedModel& model() const { return model_; }
  const Signer& signer() const { return signer_; }
  const CertificationResult& certification() const { return cert_; }
  bool certified() const { return cert_.certified && cert_.model_digest == digest_; }
  void set_behavior(ProviderBehavior* b) { behavior_ = b; }
  ProviderBehavior* behavior() const { return behavior_; }
  Prg& coin_prg() { return coins_; }

  std::vector<QueryRecord>& log() { return log_; }
  const std::vector<QueryRecord>& log() const { return log_; }

 private:
  ThresholdedModel model_;
  Ed25519Signer signer_;
  CertificationResult cert_;
  Fp digest_;
  Prg coins_;
  ProviderBehavior* behavior_ = nullptr;
  std::vector<QueryRecord> log_;
};

class Client {
 public:
  Client(std::string id, const Seed& key_seed) : id_(std::move(id)), signer_(key_seed), coins_(derive_seed(key_seed, "coins")) {}

  const std::string& id() const { return id_; }
  const Signer& signer() const { return signer_; }
  Prg& coin_prg() { return coins_; }
  void set_behavior(ClientBehavior* b) { behavior_ = b; }
  ClientBehavior* behavior() const { return behavior_; }

  // Signed answers received, by store index.
  struct Receipt {
    Query q;
    std::vector<Fp> r;
    int o = 0;
    Signature sig_c{};
  };
  std::map<std::uint64_t, Receipt>& receipts() { return receipts_; }
  const std::map<std::uint64_t, Receipt>& receipts() const { return receipts_; }

 private:
  std::string id_;
  Ed25519Signer signer_;
  Prg coins_;
  ClientBehavior* behavior_ = nullptr;
  std::map<std::uint64_t, Receipt> receipts_;
};

enum class Party { kNone, kClient, kProvider };
inline const char* party_name(Party p) { return p == Party::kClient ? "client" : p == Party::kProvider ? "provider" : "none"; }

class ProtocolAbort : public std::runtime_error {
 public:
  ProtocolAbort(const std::string& msg, Party blamed) : std::runtime_error(msg), blamed_(blamed) {}
  Party blamed() const { return blamed_; }

 private:
  Party blamed_;
};

struct QueryAuthStats {
  std::uint64_t queries = 0;
  std::uint64_t signatures = 0;
  std::uint64_t verifications = 0;
  std::uint64_t hashes = 0;
  std::uint64_t coin_rounds = 0;
};

/// One run of the query protocol. Returns the outcome delivered to the client.
/// The provider appends a QueryRecord to its log and the client's commitment
/// is appended to `store`. Throws ProtocolAbort on a signature failure.
inline int answer_query(Client& client, Provider& provider, CommitmentStore& store, const Query& q,
                        QueryAuthStats* stats = nullptr) {
  if (!provider.certified()) throw std::logic_error("answer_query: provider has no certification for this model");
  if (q.features.size() != provider.model().model.input_dim()) throw std::invalid_argument("answer_query: query dimension");
  const std::uint64_t index = store.size();

  // 1. fair coins, client commits first
  auto coins = coin_flip(CoinParty::from_prg(client.coin_prg()), CoinParty::from_prg(provider.coin_prg()), 1, "client");
  const std::vector<Fp>& r = coins.elements;

  // 2-3. client sends q and its signature over q || r
  const auto qr = canonical_bytes(query_elements(q, r));
  Signature sig_p = client.signer().sign(qr);
  if (client.behavior()) client.behavior()->corrupt_signature(index, sig_p);

  // 4. provider verifies before inference
  if (!verify_signature(client.signer().public_key(), qr, sig_p))
    throw ProtocolAbort("provider rejected the client's signature", Party::kClient);

  // 5-6. inference and signed answer
  int o = provider.model().predict_q(q.features, q.group) ? 1 : 0;
  if (provider.behavior()) o = provider.behavior()->answer(index, q, r, o);
  const auto qro = canonical_bytes(record_elements(q, r, o));
  Signature sig_c = provider.signer().sign(qro);
  if (provider.behavior()) provider.behavior()->corrupt_signature(index, sig_c);

  // 7-8. client verifies the answer
  if (!verify_signature(provider.signer().public_key(), qro, sig_c))
    throw ProtocolAbort("client rejected the provider's signature", Party::kProvider);

  // 9. client commits to the transcript with the verifier
  Fp c = query_commitment(q, r, o);
  Fp sent = client.behavior() ? client.behavior()->commitment(index, c) : c;
  store.append(sent, client.id());
  client.receipts()[index] = {q, r, o, sig_c};
  provider.log().push_back({index, client.id(), q, r, o, sig_p, sig_c, c});

  if (stats) {
    stats->queries += 1;
    stats->signatures += 2;
    stats->verifications += 2;
    stats->hashes += 1;
    stats->coin_rounds += 1;
  }
  return o;
}

/// Decides who falsified a disputed record. `audited` is the record as the
/// provider presented it for audit (carrying the client's sig_p over its
/// q || r); `receipt` is the client's signed answer. The party whose signed
/// data contradicts the stored commitment is blamed.
inline Party blame_attestation(const QueryRecord& audited, const Client::Receipt& receipt, const StoreEntry& stored,
                               const KeyRegistry& keys) {
  const PublicKey& client_pk = keys.client(stored.client_id);
  // The client must back its account with the provider's signature.
  if (!verify_signature(keys.provider, canonical_bytes(record_elements(receipt.q, receipt.r, receipt.o)), receipt.sig_c))
    return Party::kClient;
  // The provider must back the audited query with the client's signature.
  if (!verify_signature(client_pk, canonical_bytes(query_elements(audited.q, audited.r)), audited.sig_p))
    return Party::kProvider;
  if (query_commitment(receipt.q, receipt.r, receipt.o) != stored.commitment) return Party::kClient;
  if (audited.q != receipt.q || audited.r != receipt.r || audited.o != receipt.o) return Party::kProvider;
  return Party::kNone;
}

/// Full-corpus check of the provider log against the store and the keys.
inline std::vector<std::uint64_t> verify_log(const std::vector<QueryRecord>& log, const CommitmentStore& store,
                                             const KeyRegistry& keys) {
  std::vector<std::uint64_t> bad;
  if (log.size() != store.size()) throw std::invalid_argument("verify_log: log and store sizes differ");
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& rec = log[i];
    if (rec.index != i) {
      bad.push_back(i);
      continue;
    }
    const auto& e = store.at(i);
    const Fp c = query_commitment(rec.q, rec.r, rec.o);
    bool ok = e.client_id == rec.client_id && c == e.commitment && c == rec.commitment &&
              verify_signature(keys.client(rec.client_id), canonical_bytes(query_elements(rec.q, rec.r)), rec.sig_p) &&
              verify_signature(keys.provider, canonical_bytes(record_elements(rec.q, rec.r, rec.o)), rec.sig_c);
    if (!ok) bad.push_back(rec.index);
  }
  return bad;
}

}  // namespace oath
