// Channel-policy gate: which asset classes may traverse which channels.
// No default-allow: traffic on unregistered channels is denied, and some
// pairings are forbidden outright regardless of configuration.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "qkdn/error.hpp"
#include "qkdn/message.hpp"
#include "qkdn/time.hpp"

namespace qkdn {

struct ChannelSecurity {
    bool confidentiality{true};
    bool integrity{true};
    bool authenticity{true};
};

struct ChannelSpec {
    std::string id;
    EntityId a;
    EntityId b;
    std::set<AssetClass> allowed;
    ChannelSecurity security;
    bool colocated{false};  // intra-node: confidentiality not required
    SimTime latency{5_ms};
};

struct Verdict {
    bool allowed{false};
    Errc reason{Errc::POLICY_DENY};
    std::string detail;

    static Verdict allow() { return Verdict{true, Errc::POLICY_DENY, {}}; }
    static Verdict deny(Errc reason, std::string detail) {
        return Verdict{false, reason, std::move(detail)};
    }
};

class PolicyGate {
public:
    void register_channel(ChannelSpec spec) { channels_[pair_key(spec.a, spec.b)] = std::move(spec); }

    const ChannelSpec* find(const EntityId& a, const EntityId& b) const {
        auto it = channels_.find(pair_key(a, b));
        return it == channels_.end() ? nullptr : &it->second;
    }

    // Pairings the architecture forbids regardless of configuration: the
    // access/carrier demarcation keeps the AKMS away from the controller and
    // user-node components away from carrier-interior ones.
    static bool forbidden_pair(const EntityId& from, const EntityId& to) {
        auto pair_is = [&](EntityKind x, EntityKind y) {
            return (from.kind == x && to.kind == y) || (from.kind == y && to.kind == x);
        };
        if (pair_is(EntityKind::Akms, EntityKind::Controller)) return true;
        for (EntityKind user_side : {EntityKind::Sae, EntityKind::Ukms}) {
            for (EntityKind carrier_side : {EntityKind::Ckms, EntityKind::Controller}) {
                if (pair_is(user_side, carrier_side)) return true;
            }
        }
        return false;
    }

    Verdict enforce(const ProtocolMessage& msg) const {
        if (forbidden_pair(msg.from, msg.to))
            return Verdict::deny(Errc::FORBIDDEN_CHANNEL,
                                 msg.from.str() + " -> " + msg.to.str() + " is forbidden");
        const ChannelSpec* chan = find(msg.from, msg.to);
        if (!chan)
            return Verdict::deny(Errc::FORBIDDEN_CHANNEL,
                                 "no channel " + msg.from.str() + " <-> " + msg.to.str());
        if (!chan->allowed.count(msg.asset_class))
            return Verdict::deny(Errc::POLICY_DENY,
                                 std::string(to_string(msg.asset_class)) + " not allowed on " + chan->id);
        return class_requirements(msg.asset_class, *chan, msg);
    }

private:
    static std::pair<std::string, std::string> pair_key(const EntityId& a, const EntityId& b) {
        auto sa = a.str(), sb = b.str();
        return sa < sb ? std::make_pair(sa, sb) : std::make_pair(sb, sa);
    }

    static Verdict class_requirements(AssetClass cls, const ChannelSpec& chan,
                                      const ProtocolMessage& msg) {
        const auto& sec = chan.security;
        if (!sec.integrity || !sec.authenticity)
            return Verdict::deny(Errc::POLICY_DENY, "channel " + chan.id + " lacks integrity/authenticity");
        bool needs_conf = false;
        switch (cls) {
            case AssetClass::KeyData:
            case AssetClass::MetaData:
            case AssetClass::UserProfile:
                needs_conf = !chan.colocated;
                break;
            case AssetClass::ControlMgmt:
                needs_conf = false;
                break;
        }
        if (needs_conf && !sec.confidentiality)
            return Verdict::deny(Errc::POLICY_DENY,
                                 std::string(to_string(cls)) + " needs confidentiality on " + chan.id);
        if (cls == AssetClass::UserProfile) {
            auto pair_is = [&](EntityKind x, EntityKind y) {
                return (msg.from.kind == x && msg.to.kind == y) ||
                       (msg.from.kind == y && msg.to.kind == x);
            };
            bool ok = pair_is(EntityKind::Akms, EntityKind::Aaa) ||
                      pair_is(EntityKind::Ukms, EntityKind::Akms);
            if (!ok)
                return Verdict::deny(Errc::POLICY_DENY,
                                     "USER_PROFILE confined to AKMS<->AAA and UKMS<->AKMS");
        }
        return Verdict::allow();
    }

    std::map<std::pair<std::string, std::string>, ChannelSpec> channels_;
};

}  // namespace qkdn
