// Identities: entity addressing and 128-bit identifiers.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "qkdn/bytes.hpp"
#include "qkdn/hash.hpp"

namespace qkdn {

enum class EntityKind { Sae, Ukms, Akms, Ckms, QkdModule, Controller, Manager, Aaa };

inline const char* to_string(EntityKind k) {
    switch (k) {
        case EntityKind::Sae: return "sae";
        case EntityKind::Ukms: return "ukms";
        case EntityKind::Akms: return "akms";
        case EntityKind::Ckms: return "ckms";
        case EntityKind::QkdModule: return "qkd";
        case EntityKind::Controller: return "controller";
        case EntityKind::Manager: return "manager";
        case EntityKind::Aaa: return "aaa";
    }
    return "?";
}

inline EntityKind entity_kind_from(const std::string& s) {
    if (s == "sae") return EntityKind::Sae;
    if (s == "ukms") return EntityKind::Ukms;
    if (s == "akms") return EntityKind::Akms;
    if (s == "ckms") return EntityKind::Ckms;
    if (s == "qkd") return EntityKind::QkdModule;
    if (s == "controller") return EntityKind::Controller;
    if (s == "manager") return EntityKind::Manager;
    if (s == "aaa") return EntityKind::Aaa;
    throw std::invalid_argument("unknown entity kind: " + s);
}

// (kind, name) is globally unique within one deployment; rendered "kind:name".
struct EntityId {
    EntityKind kind{EntityKind::Sae};
    std::string name;

    auto operator<=>(const EntityId&) const = default;

    std::string str() const { return std::string(to_string(kind)) + ":" + name; }

    static EntityId parse(const std::string& s) {
        auto pos = s.find(':');
        if (pos == std::string::npos || pos + 1 >= s.size())
            throw std::invalid_argument("malformed entity id: " + s);
        return EntityId{entity_kind_from(s.substr(0, pos)), s.substr(pos + 1)};
    }
};

// 128-bit identifier, canonical 36-char dashed-hex text form.
struct Uuid {
    std::array<std::uint8_t, 16> raw{};

    auto operator<=>(const Uuid&) const = default;

    bool is_nil() const {
        for (auto b : raw)
            if (b != 0) return false;
        return true;
    }

    std::string str() const {
        std::string h = to_hex(raw.data(), raw.size());
        return h.substr(0, 8) + "-" + h.substr(8, 4) + "-" + h.substr(12, 4) + "-" + h.substr(16, 4) +
               "-" + h.substr(20, 12);
    }

    static Uuid parse(const std::string& s) {
        std::string h;
        h.reserve(32);
        for (char c : s)
            if (c != '-') h.push_back(c);
        Bytes b = from_hex(h);
        if (b.size() != 16) throw std::invalid_argument("malformed uuid: " + s);
        Uuid u;
        std::copy(b.begin(), b.end(), u.raw.begin());
        return u;
    }

    static Uuid from_bytes(const std::uint8_t* p) {
        Uuid u;
        std::copy(p, p + 16, u.raw.begin());
        return u;
    }

    // Deterministic child identifier (split remainders, derived sessions).
    static Uuid derive(const Uuid& parent, std::uint32_t ordinal) {
        Bytes buf(parent.raw.begin(), parent.raw.end());
        put_be32(buf, ordinal);
        auto d = sha256(buf);
        return from_bytes(d.data());
    }
};

}  // namespace qkdn

template <>
struct std::hash<qkdn::EntityId> {
    std::size_t operator()(const qkdn::EntityId& e) const {
        return std::hash<std::string>{}(e.str());
    }
};

template <>
struct std::hash<qkdn::Uuid> {
    std::size_t operator()(const qkdn::Uuid& u) const {
        std::size_t h = 1469598103934665603ull;
        for (auto b : u.raw) h = (h ^ b) * 1099511628211ull;
        return h;
    }
};
