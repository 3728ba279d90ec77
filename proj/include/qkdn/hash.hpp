// Thin OpenSSL wrappers: SHA-256 and HMAC-SHA256.
#pragma once

#include <array>
#include <stdexcept>

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "qkdn/bytes.hpp"

namespace qkdn {

using Digest32 = std::array<std::uint8_t, 32>;

inline Digest32 sha256(const std::uint8_t* data, std::size_t len) {
    Digest32 out{};
    unsigned int outlen = 0;
    if (EVP_Digest(data, len, out.data(), &outlen, EVP_sha256(), nullptr) != 1 || outlen != 32)
        throw std::runtime_error("sha256 failed");
    return out;
}

inline Digest32 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

inline Digest32 hmac_sha256(const std::uint8_t* key, std::size_t keylen, const std::uint8_t* data,
                            std::size_t len) {
    Digest32 out{};
    unsigned int outlen = 0;
    if (HMAC(EVP_sha256(), key, static_cast<int>(keylen), data, len, out.data(), &outlen) == nullptr ||
        outlen != 32)
        throw std::runtime_error("hmac-sha256 failed");
    return out;
}

inline Digest32 hmac_sha256(const Bytes& key, const Bytes& data) {
    return hmac_sha256(key.data(), key.size(), data.data(), data.size());
}

}  // namespace qkdn
