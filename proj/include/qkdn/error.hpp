// Error vocabulary. Reason codes double as wire/metrics strings, so the
// spelling here is load-bearing.
#pragma once

#include <stdexcept>
#include <string>

namespace qkdn {

enum class Errc {
    EMPTY_MATERIAL,
    INSUFFICIENT_KEY,
    CAPACITY_EXCEEDED,
    AUTH_FAIL,
    NONCE_EXHAUSTION,
    POLICY_DENY,
    FORBIDDEN_CHANNEL,
    CHANNEL_DOWN,
    UNKNOWN_SAE,
    OVERSIZE_REQUEST,
    NO_SUCH_EXCHANGE,
    NOT_READY,
    FORBIDDEN,
    UNKNOWN_USER,
    PAYMENT_INVALID,
    PEER_NOT_ALLOWED,
    QUOTA_EXCEEDED,
    AAA_TIMEOUT,
    PEER_UNREACHABLE,
    PEER_BUSY,
    SCHEMA_VIOLATION,
    CORRELATION_MISMATCH,
    KEY_STARVATION,
    NO_ROUTE,
    NO_PATH,
    HOP_LIMIT,
    INSTALL_TIMEOUT,
    UNKNOWN_SENDER,
    DUPLICATE_RECORD,
    CONFIG_INVALID,
    UNMAPPED_REQUIREMENT,
    RNG_DEGRADED,
    INTERNAL,
};

inline const char* to_string(Errc e) {
    switch (e) {
        case Errc::EMPTY_MATERIAL: return "EMPTY_MATERIAL";
        case Errc::INSUFFICIENT_KEY: return "INSUFFICIENT_KEY";
        case Errc::CAPACITY_EXCEEDED: return "CAPACITY_EXCEEDED";
        case Errc::AUTH_FAIL: return "AUTH_FAIL";
        case Errc::NONCE_EXHAUSTION: return "NONCE_EXHAUSTION";
        case Errc::POLICY_DENY: return "POLICY_DENY";
        case Errc::FORBIDDEN_CHANNEL: return "FORBIDDEN_CHANNEL";
        case Errc::CHANNEL_DOWN: return "CHANNEL_DOWN";
        case Errc::UNKNOWN_SAE: return "UNKNOWN_SAE";
        case Errc::OVERSIZE_REQUEST: return "OVERSIZE_REQUEST";
        case Errc::NO_SUCH_EXCHANGE: return "NO_SUCH_EXCHANGE";
        case Errc::NOT_READY: return "NOT_READY";
        case Errc::FORBIDDEN: return "FORBIDDEN";
        case Errc::UNKNOWN_USER: return "UNKNOWN_USER";
        case Errc::PAYMENT_INVALID: return "PAYMENT_INVALID";
        case Errc::PEER_NOT_ALLOWED: return "PEER_NOT_ALLOWED";
        case Errc::QUOTA_EXCEEDED: return "QUOTA_EXCEEDED";
        case Errc::AAA_TIMEOUT: return "AAA_TIMEOUT";
        case Errc::PEER_UNREACHABLE: return "PEER_UNREACHABLE";
        case Errc::PEER_BUSY: return "PEER_BUSY";
        case Errc::SCHEMA_VIOLATION: return "SCHEMA_VIOLATION";
        case Errc::CORRELATION_MISMATCH: return "CORRELATION_MISMATCH";
        case Errc::KEY_STARVATION: return "KEY_STARVATION";
        case Errc::NO_ROUTE: return "NO_ROUTE";
        case Errc::NO_PATH: return "NO_PATH";
        case Errc::HOP_LIMIT: return "HOP_LIMIT";
        case Errc::INSTALL_TIMEOUT: return "INSTALL_TIMEOUT";
        case Errc::UNKNOWN_SENDER: return "UNKNOWN_SENDER";
        case Errc::DUPLICATE_RECORD: return "DUPLICATE_RECORD";
        case Errc::CONFIG_INVALID: return "CONFIG_INVALID";
        case Errc::UNMAPPED_REQUIREMENT: return "UNMAPPED_REQUIREMENT";
        case Errc::RNG_DEGRADED: return "RNG_DEGRADED";
        case Errc::INTERNAL: return "INTERNAL";
    }
    return "UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail = {})
        : std::runtime_error(detail.empty() ? to_string(code)
                                            : std::string(to_string(code)) + ": " + detail),
          code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

}  // namespace qkdn
