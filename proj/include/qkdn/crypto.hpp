// Relay ciphers protecting key material hop-by-hop: one-time pad with a
// one-time-key MAC, and AES-256-GCM with epoch-based rekeying. Both debit
// KMA pools through a KmaSource and share one wire frame:
//   mode(1) || nonce(12, zero for OTP) || length(4, big-endian bits) ||
//   ciphertext || tag(16)
#pragma once

#include <array>
#include <memory>

#include <openssl/evp.h>

#include "qkdn/bytes.hpp"
#include "qkdn/error.hpp"
#include "qkdn/hash.hpp"
#include "qkdn/key_store.hpp"

namespace qkdn {

enum class CipherMode : std::uint8_t { Otp = 1, Aes256Gcm = 2 };

inline const char* to_string(CipherMode m) { return m == CipherMode::Otp ? "OTP" : "AES256GCM"; }

inline CipherMode cipher_mode_from(const std::string& s) {
    if (s == "OTP") return CipherMode::Otp;
    if (s == "AES256GCM") return CipherMode::Aes256Gcm;
    throw Error(Errc::CONFIG_INVALID, "unknown cipher mode " + s);
}

constexpr std::size_t kOtpMacKeyBits = 128;
constexpr std::size_t kGcmKeyBits = 256;
constexpr std::size_t kTagBytes = 16;
constexpr std::size_t kNonceBytes = 12;

struct WrappedKey {
    CipherMode mode{CipherMode::Otp};
    std::array<std::uint8_t, kNonceBytes> nonce{};
    std::uint32_t length_bits{0};
    Bytes ciphertext;
    std::array<std::uint8_t, kTagBytes> tag{};
    std::uint64_t consumed_kma_bits{0};  // local bookkeeping, not on the wire

    Bytes header() const {
        Bytes h;
        h.reserve(1 + kNonceBytes + 4);
        h.push_back(static_cast<std::uint8_t>(mode));
        h.insert(h.end(), nonce.begin(), nonce.end());
        put_be32(h, length_bits);
        return h;
    }

    Bytes encode() const {
        Bytes out = header();
        out.insert(out.end(), ciphertext.begin(), ciphertext.end());
        out.insert(out.end(), tag.begin(), tag.end());
        return out;
    }

    static WrappedKey decode(const Bytes& wire) {
        if (wire.size() < 1 + kNonceBytes + 4 + kTagBytes)
            throw Error(Errc::SCHEMA_VIOLATION, "wrapped-key frame too short");
        WrappedKey w;
        if (wire[0] != 1 && wire[0] != 2)
            throw Error(Errc::SCHEMA_VIOLATION, "unknown cipher mode byte");
        w.mode = static_cast<CipherMode>(wire[0]);
        std::copy(wire.begin() + 1, wire.begin() + 1 + kNonceBytes, w.nonce.begin());
        w.length_bits = get_be32(wire.data() + 1 + kNonceBytes);
        std::size_t ct_len = wire.size() - (1 + kNonceBytes + 4 + kTagBytes);
        if (w.length_bits % 8 != 0 || ct_len != w.length_bits / 8)
            throw Error(Errc::SCHEMA_VIOLATION, "frame length mismatch");
        w.ciphertext.assign(wire.begin() + 1 + kNonceBytes + 4, wire.end() - kTagBytes);
        std::copy(wire.end() - kTagBytes, wire.end(), w.tag.begin());
        return w;
    }
};

// Consume-capable pool handle used by the ciphers.
class KmaSource {
public:
    virtual ~KmaSource() = default;
    virtual Bytes take(std::size_t n_bits, const ConsumeContext& ctx) = 0;
    virtual std::uint64_t available_bits() const = 0;
};

class PoolKmaSource : public KmaSource {
public:
    PoolKmaSource(KeyStore& store, EntityId peer, std::string lane)
        : store_(store), peer_(std::move(peer)), lane_(std::move(lane)) {}

    Bytes take(std::size_t n_bits, const ConsumeContext& ctx) override {
        auto blocks = store_.consume(peer_, n_bits, ctx, lane_);
        Bytes out;
        out.reserve(n_bits / 8);
        for (const auto& b : blocks) out.insert(out.end(), b.bits.begin(), b.bits.end());
        return out;
    }

    std::uint64_t available_bits() const override { return store_.available_bits(peer_, lane_); }

private:
    KeyStore& store_;
    EntityId peer_;
    std::string lane_;
};

namespace detail {

struct EvpCtx {
    EVP_CIPHER_CTX* ctx;
    EvpCtx() : ctx(EVP_CIPHER_CTX_new()) {
        if (!ctx) throw Error(Errc::INTERNAL, "EVP_CIPHER_CTX_new failed");
    }
    ~EvpCtx() { EVP_CIPHER_CTX_free(ctx); }
};

inline Bytes gcm_seal(const Bytes& key32, const std::uint8_t* nonce, const Bytes& aad,
                      const Bytes& plain, std::array<std::uint8_t, kTagBytes>& tag_out) {
    EvpCtx c;
    Bytes ct(plain.size());
    int len = 0;
    if (EVP_EncryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, key32.data(), nonce) != 1)
        throw Error(Errc::INTERNAL, "gcm init failed");
    if (!aad.empty() && EVP_EncryptUpdate(c.ctx, nullptr, &len, aad.data(), (int)aad.size()) != 1)
        throw Error(Errc::INTERNAL, "gcm aad failed");
    if (!plain.empty() &&
        EVP_EncryptUpdate(c.ctx, ct.data(), &len, plain.data(), (int)plain.size()) != 1)
        throw Error(Errc::INTERNAL, "gcm encrypt failed");
    int fin = 0;
    if (EVP_EncryptFinal_ex(c.ctx, ct.data() + len, &fin) != 1)
        throw Error(Errc::INTERNAL, "gcm final failed");
    if (EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_GET_TAG, kTagBytes, tag_out.data()) != 1)
        throw Error(Errc::INTERNAL, "gcm get tag failed");
    return ct;
}

inline Bytes gcm_open(const Bytes& key32, const std::uint8_t* nonce, const Bytes& aad,
                      const Bytes& ct, const std::array<std::uint8_t, kTagBytes>& tag) {
    EvpCtx c;
    Bytes pt(ct.size());
    int len = 0;
    if (EVP_DecryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, key32.data(), nonce) != 1)
        throw Error(Errc::INTERNAL, "gcm init failed");
    if (!aad.empty() && EVP_DecryptUpdate(c.ctx, nullptr, &len, aad.data(), (int)aad.size()) != 1)
        throw Error(Errc::INTERNAL, "gcm aad failed");
    if (!ct.empty() && EVP_DecryptUpdate(c.ctx, pt.data(), &len, ct.data(), (int)ct.size()) != 1)
        throw Error(Errc::INTERNAL, "gcm decrypt failed");
    std::array<std::uint8_t, kTagBytes> tag_copy = tag;
    if (EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_SET_TAG, kTagBytes, tag_copy.data()) != 1)
        throw Error(Errc::INTERNAL, "gcm set tag failed");
    int fin = 0;
    if (EVP_DecryptFinal_ex(c.ctx, pt.data() + len, &fin) != 1)
        throw Error(Errc::AUTH_FAIL, "GCM tag verification failed");
    return pt;
}

}  // namespace detail

// One-time pad with a fresh 128-bit MAC key per frame. Pool debit is
// plaintext bits + 128; the MAC covers the frame header and ciphertext.
inline WrappedKey otp_wrap(const Bytes& plain, KmaSource& kma, const ConsumeContext& ctx) {
    if (plain.empty()) throw Error(Errc::EMPTY_MATERIAL, "nothing to wrap");
    std::size_t need = plain.size() * 8 + kOtpMacKeyBits;
    if (kma.available_bits() < need)
        throw Error(Errc::INSUFFICIENT_KEY, "OTP wrap needs " + std::to_string(need) + " bits");
    Bytes material = kma.take(need, ctx);
    WrappedKey w;
    w.mode = CipherMode::Otp;
    w.length_bits = static_cast<std::uint32_t>(plain.size() * 8);
    w.ciphertext = plain;
    xor_into(w.ciphertext, material.data(), plain.size());
    Bytes mac_key(material.begin() + plain.size(), material.end());
    Bytes mac_input = w.header();
    mac_input.insert(mac_input.end(), w.ciphertext.begin(), w.ciphertext.end());
    auto mac = hmac_sha256(mac_key, mac_input);
    std::copy(mac.begin(), mac.begin() + kTagBytes, w.tag.begin());
    w.consumed_kma_bits = need;
    return w;
}

inline Bytes otp_unwrap(const WrappedKey& w, KmaSource& kma, const ConsumeContext& ctx) {
    std::size_t need = w.length_bits + kOtpMacKeyBits;
    if (kma.available_bits() < need)
        throw Error(Errc::INSUFFICIENT_KEY, "OTP unwrap needs " + std::to_string(need) + " bits");
    Bytes material = kma.take(need, ctx);
    Bytes mac_key(material.begin() + w.length_bits / 8, material.end());
    Bytes mac_input = w.header();
    mac_input.insert(mac_input.end(), w.ciphertext.begin(), w.ciphertext.end());
    auto mac = hmac_sha256(mac_key, mac_input);
    if (!ct_equal(mac.data(), w.tag.data(), kTagBytes))
        throw Error(Errc::AUTH_FAIL, "OTP frame MAC mismatch");
    Bytes plain = w.ciphertext;
    xor_into(plain, material.data(), plain.size());
    return plain;
}

// AES-256-GCM session for one direction of one channel. The session key is
// 256 pool bits; a new epoch (and key) starts after rekey_after_wraps frames.
// The receiver mirrors key consumption when it sees a higher epoch in the
// nonce, so both pool mirrors stay aligned.
class GcmSession {
public:
    explicit GcmSession(std::uint64_t rekey_after_wraps = 1u << 20)
        : rekey_after_wraps_(rekey_after_wraps) {}

    WrappedKey wrap(const Bytes& plain, KmaSource& kma, ConsumeContext ctx) {
        if (plain.empty()) throw Error(Errc::EMPTY_MATERIAL, "nothing to wrap");
        std::uint64_t consumed = 0;
        if (!keyed_ || counter_ >= rekey_after_wraps_) {
            if (counter_ >= kHardNonceCap) throw Error(Errc::NONCE_EXHAUSTION);
            ctx.purpose = ctx.purpose.empty() ? "gcm_rekey" : ctx.purpose;
            key_ = kma.take(kGcmKeyBits, ctx);
            keyed_ = true;
            epoch_ += 1;
            counter_ = 0;
            consumed = kGcmKeyBits;
        }
        if (counter_ >= kHardNonceCap) throw Error(Errc::NONCE_EXHAUSTION);
        WrappedKey w;
        w.mode = CipherMode::Aes256Gcm;
        w.length_bits = static_cast<std::uint32_t>(plain.size() * 8);
        put_nonce(w.nonce, epoch_, counter_);
        counter_ += 1;
        Bytes aad = w.header();
        w.ciphertext = detail::gcm_seal(key_, w.nonce.data(), aad, plain, w.tag);
        w.consumed_kma_bits = consumed;
        return w;
    }

    Bytes unwrap(const WrappedKey& w, KmaSource& kma, ConsumeContext ctx) {
        std::uint32_t frame_epoch = get_be32(w.nonce.data());
        if (!keyed_ || frame_epoch > epoch_) {
            if (frame_epoch != epoch_ + 1)
                throw Error(Errc::AUTH_FAIL, "unexpected GCM epoch jump");
            ctx.purpose = ctx.purpose.empty() ? "gcm_rekey" : ctx.purpose;
            key_ = kma.take(kGcmKeyBits, ctx);
            keyed_ = true;
            epoch_ = frame_epoch;
        } else if (frame_epoch < epoch_) {
            throw Error(Errc::AUTH_FAIL, "stale GCM epoch");
        }
        Bytes aad = w.header();
        return detail::gcm_open(key_, w.nonce.data(), aad, w.ciphertext, w.tag);
    }

private:
    static constexpr std::uint64_t kHardNonceCap = 1ull << 48;

    static void put_nonce(std::array<std::uint8_t, kNonceBytes>& nonce, std::uint32_t epoch,
                          std::uint64_t counter) {
        nonce[0] = static_cast<std::uint8_t>(epoch >> 24);
        nonce[1] = static_cast<std::uint8_t>(epoch >> 16);
        nonce[2] = static_cast<std::uint8_t>(epoch >> 8);
        nonce[3] = static_cast<std::uint8_t>(epoch);
        for (int i = 0; i < 8; ++i)
            nonce[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
    }

    std::uint64_t rekey_after_wraps_;
    Bytes key_;
    bool keyed_{false};
    std::uint32_t epoch_{0};
    std::uint64_t counter_{0};
};

// Directional cipher endpoint over one KMA pool lane. A given instance only
// wraps (outbound lane) or only unwraps (inbound lane).
class SecureLink {
public:
    SecureLink(CipherMode mode, std::unique_ptr<KmaSource> source,
               std::uint64_t gcm_rekey_after = 1u << 20)
        : mode_(mode), source_(std::move(source)), gcm_(gcm_rekey_after) {}

    CipherMode mode() const { return mode_; }
    KmaSource& source() { return *source_; }

    WrappedKey wrap(const Bytes& plain, const ConsumeContext& ctx) {
        return mode_ == CipherMode::Otp ? otp_wrap(plain, *source_, ctx)
                                        : gcm_.wrap(plain, *source_, ctx);
    }

    Bytes unwrap(const WrappedKey& w, const ConsumeContext& ctx) {
        if (w.mode != mode_) throw Error(Errc::SCHEMA_VIOLATION, "cipher mode mismatch on link");
        return mode_ == CipherMode::Otp ? otp_unwrap(w, *source_, ctx)
                                        : gcm_.unwrap(w, *source_, ctx);
    }

private:
    CipherMode mode_;
    std::unique_ptr<KmaSource> source_;
    GcmSession gcm_;
};

}  // namespace qkdn
