// KeyBlock: a contiguous run of secret bits, the unit of all key material.
#pragma once

#include <cstdint>
#include <string>

#include "qkdn/bytes.hpp"
#include "qkdn/error.hpp"
#include "qkdn/ids.hpp"
#include "qkdn/time.hpp"

namespace qkdn {

enum class KeyRole { Kma, Qbn, Ksa };

inline const char* to_string(KeyRole r) {
    switch (r) {
        case KeyRole::Kma: return "KMA";
        case KeyRole::Qbn: return "QBN";
        case KeyRole::Ksa: return "KSA";
    }
    return "?";
}

struct KeyOrigin {
    enum class Kind { QkdLink, LocalRng } kind{Kind::LocalRng};
    std::string link_id;  // set when kind == QkdLink

    static KeyOrigin qkd_link(std::string id) { return {Kind::QkdLink, std::move(id)}; }
    static KeyOrigin local_rng() { return {Kind::LocalRng, {}}; }

    std::string str() const { return kind == Kind::QkdLink ? "qkd:" + link_id : "rng"; }
};

struct KeyBlock {
    Uuid key_id;
    Bytes bits;
    KeyOrigin origin;
    KeyRole role{KeyRole::Kma};
    SimTime created_at{0};
    bool consumed{false};

    // Provenance for the offset-level one-time-use audit: every block knows
    // which original block its bits came from and at what bit offset.
    Uuid root_id;
    std::uint64_t root_offset_bits{0};
    std::uint32_t split_ordinal{0};

    std::size_t size_bits() const { return bits.size() * 8; }
};

inline KeyBlock new_key_block(Bytes bits, KeyOrigin origin, KeyRole role, Uuid key_id,
                              SimTime created_at) {
    if (bits.empty()) throw Error(Errc::EMPTY_MATERIAL);
    KeyBlock b;
    b.key_id = key_id;
    b.root_id = key_id;
    b.bits = std::move(bits);
    b.origin = std::move(origin);
    b.role = role;
    b.created_at = created_at;
    return b;
}

}  // namespace qkdn
