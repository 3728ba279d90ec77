// Protocol envelope: typed, classified messages exchanged between components.
#pragma once

#include <string>

#include <json.hpp>

#include "qkdn/error.hpp"
#include "qkdn/ids.hpp"

namespace qkdn {

using json = nlohmann::json;

enum class MsgKind {
    KeyRequest,
    EnrichedRequest,
    Validate,
    ServiceProperties,
    PeerInit,
    QbnRelay,
    QbnAck,
    KsaTransfer,
    KsaPush,
    KsaDeliver,
    StatusUpdate,
    RouteRequest,
    RouteUpdate,
    RouteAck,
    Alarm,
    ErrorMsg,
};

inline constexpr MsgKind kAllMsgKinds[] = {
    MsgKind::KeyRequest,  MsgKind::EnrichedRequest, MsgKind::Validate,   MsgKind::ServiceProperties,
    MsgKind::PeerInit,    MsgKind::QbnRelay,        MsgKind::QbnAck,     MsgKind::KsaTransfer,
    MsgKind::KsaPush,     MsgKind::KsaDeliver,      MsgKind::StatusUpdate, MsgKind::RouteRequest,
    MsgKind::RouteUpdate, MsgKind::RouteAck,        MsgKind::Alarm,      MsgKind::ErrorMsg,
};

inline const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::KeyRequest: return "KEY_REQUEST";
        case MsgKind::EnrichedRequest: return "ENRICHED_REQUEST";
        case MsgKind::Validate: return "VALIDATE";
        case MsgKind::ServiceProperties: return "SERVICE_PROPERTIES";
        case MsgKind::PeerInit: return "PEER_INIT";
        case MsgKind::QbnRelay: return "QBN_RELAY";
        case MsgKind::QbnAck: return "QBN_ACK";
        case MsgKind::KsaTransfer: return "KSA_TRANSFER";
        case MsgKind::KsaPush: return "KSA_PUSH";
        case MsgKind::KsaDeliver: return "KSA_DELIVER";
        case MsgKind::StatusUpdate: return "STATUS_UPDATE";
        case MsgKind::RouteRequest: return "ROUTE_REQUEST";
        case MsgKind::RouteUpdate: return "ROUTE_UPDATE";
        case MsgKind::RouteAck: return "ROUTE_ACK";
        case MsgKind::Alarm: return "ALARM";
        case MsgKind::ErrorMsg: return "ERROR";
    }
    return "?";
}

inline MsgKind msg_kind_from(const std::string& s) {
    for (auto k : kAllMsgKinds)
        if (s == to_string(k)) return k;
    throw Error(Errc::SCHEMA_VIOLATION, "unknown message kind " + s);
}

enum class AssetClass { KeyData, MetaData, ControlMgmt, UserProfile };

inline const char* to_string(AssetClass c) {
    switch (c) {
        case AssetClass::KeyData: return "KEY_DATA";
        case AssetClass::MetaData: return "META_DATA";
        case AssetClass::ControlMgmt: return "CONTROL_MGMT";
        case AssetClass::UserProfile: return "USER_PROFILE";
    }
    return "?";
}

inline AssetClass asset_class_from(const std::string& s) {
    if (s == "KEY_DATA") return AssetClass::KeyData;
    if (s == "META_DATA") return AssetClass::MetaData;
    if (s == "CONTROL_MGMT") return AssetClass::ControlMgmt;
    if (s == "USER_PROFILE") return AssetClass::UserProfile;
    throw Error(Errc::SCHEMA_VIOLATION, "unknown asset class " + s);
}

// Total classification: every kind resolves to exactly one class. The key
// distribution verbs are KEY_DATA when the payload carries key bits and
// META_DATA otherwise (acknowledgements).
inline AssetClass classify(MsgKind kind, bool carries_key_bits) {
    switch (kind) {
        case MsgKind::QbnRelay:
        case MsgKind::KsaTransfer:
        case MsgKind::KsaPush:
        case MsgKind::KsaDeliver:
            return carries_key_bits ? AssetClass::KeyData : AssetClass::MetaData;
        case MsgKind::KeyRequest:
        case MsgKind::EnrichedRequest:
            return kind == MsgKind::EnrichedRequest ? AssetClass::UserProfile : AssetClass::MetaData;
        case MsgKind::QbnAck:
            return AssetClass::MetaData;
        case MsgKind::PeerInit:
            return AssetClass::MetaData;
        case MsgKind::Validate:
        case MsgKind::ServiceProperties:
            return AssetClass::UserProfile;
        case MsgKind::StatusUpdate:
        case MsgKind::RouteRequest:
        case MsgKind::RouteUpdate:
        case MsgKind::RouteAck:
        case MsgKind::Alarm:
        case MsgKind::ErrorMsg:
            return AssetClass::ControlMgmt;
    }
    throw Error(Errc::INTERNAL, "unclassified message kind");
}

struct ProtocolMessage {
    Uuid msg_id;
    EntityId from;
    EntityId to;
    MsgKind kind{MsgKind::ErrorMsg};
    AssetClass asset_class{AssetClass::ControlMgmt};
    Uuid correlation_id;
    json payload;

    json to_json() const {
        return {{"msg_id", msg_id.str()},   {"from", from.str()},
                {"to", to.str()},           {"kind", to_string(kind)},
                {"asset_class", to_string(asset_class)},
                {"correlation_id", correlation_id.str()},
                {"payload", payload}};
    }

    static ProtocolMessage from_json(const json& j) {
        ProtocolMessage m;
        m.msg_id = Uuid::parse(j.at("msg_id").get<std::string>());
        m.from = EntityId::parse(j.at("from").get<std::string>());
        m.to = EntityId::parse(j.at("to").get<std::string>());
        m.kind = msg_kind_from(j.at("kind").get<std::string>());
        m.asset_class = asset_class_from(j.at("asset_class").get<std::string>());
        m.correlation_id = Uuid::parse(j.at("correlation_id").get<std::string>());
        m.payload = j.at("payload");
        return m;
    }
};

// Conventional payload key under which wrapped/plaintext key frames travel.
inline constexpr const char* kFrameField = "frame";

inline ProtocolMessage make_message(Uuid msg_id, EntityId from, EntityId to, MsgKind kind,
                                    Uuid correlation, json payload) {
    bool key_bits = payload.is_object() && payload.contains(kFrameField);
    ProtocolMessage m;
    m.msg_id = msg_id;
    m.from = std::move(from);
    m.to = std::move(to);
    m.kind = kind;
    m.asset_class = classify(kind, key_bits);
    m.correlation_id = correlation;
    m.payload = std::move(payload);
    return m;
}

}  // namespace qkdn
