#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "qkdn/fabric.hpp"
#include "qkdn/policy.hpp"

using namespace qkdn;

namespace {

EntityId sae_a{EntityKind::Sae, "sae-a"};
EntityId ukms_a{EntityKind::Ukms, "node-1"};
EntityId akms_a{EntityKind::Akms, "node-2"};
EntityId ckms_a{EntityKind::Ckms, "node-2"};
EntityId ckms_mid{EntityKind::Ckms, "node-8"};
EntityId akms_b{EntityKind::Akms, "node-14"};
EntityId controller{EntityKind::Controller, "dc"};
EntityId aaa{EntityKind::Aaa, "dc"};

PolicyGate reference_gate() {
    PolicyGate gate;
    gate.register_channel({"sae-a|ukms-1", sae_a, ukms_a,
                           {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                           {true, true, true}, false, 5_ms});
    gate.register_channel({"ukms-1|akms-2", ukms_a, akms_a,
                           {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt,
                            AssetClass::UserProfile},
                           {true, true, true}, false, 5_ms});
    gate.register_channel({"akms-2|akms-14", akms_a, akms_b,
                           {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                           {true, true, true}, false, 5_ms});
    // Intra-node transfer: integrity+authenticity only, colocated.
    gate.register_channel({"akms-2|ckms-2", akms_a, ckms_a,
                           {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                           {false, true, true}, true, 1_ms});
    gate.register_channel({"ckms-2|ckms-8", ckms_a, ckms_mid,
                           {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                           {true, true, true}, false, 5_ms});
    gate.register_channel({"ckms-8|controller", ckms_mid, controller,
                           {AssetClass::ControlMgmt}, {false, true, true}, false, 5_ms});
    gate.register_channel({"akms-2|aaa", akms_a, aaa,
                           {AssetClass::UserProfile, AssetClass::ControlMgmt},
                           {true, true, true}, false, 5_ms});
    return gate;
}

ProtocolMessage msg_of(EntityId from, EntityId to, MsgKind kind, json payload = json::object()) {
    return make_message(Uuid::derive(Uuid{}, 1), std::move(from), std::move(to), kind,
                        Uuid::derive(Uuid{}, 2), std::move(payload));
}

}  // namespace

TEST_CASE("classification is total and pins the stated mappings") {
    for (auto kind : kAllMsgKinds) {
        for (bool bits : {false, true}) {
            AssetClass c = classify(kind, bits);
            CHECK((c == AssetClass::KeyData || c == AssetClass::MetaData ||
                   c == AssetClass::ControlMgmt || c == AssetClass::UserProfile));
        }
    }
    CHECK(classify(MsgKind::Validate, false) == AssetClass::UserProfile);
    CHECK(classify(MsgKind::ServiceProperties, false) == AssetClass::UserProfile);
    CHECK(classify(MsgKind::EnrichedRequest, false) == AssetClass::UserProfile);
    CHECK(classify(MsgKind::StatusUpdate, false) == AssetClass::ControlMgmt);
    CHECK(classify(MsgKind::RouteUpdate, false) == AssetClass::ControlMgmt);
    CHECK(classify(MsgKind::Alarm, false) == AssetClass::ControlMgmt);
    CHECK(classify(MsgKind::KsaPush, true) == AssetClass::KeyData);
    CHECK(classify(MsgKind::KsaDeliver, false) == AssetClass::MetaData);
    CHECK(classify(MsgKind::QbnRelay, true) == AssetClass::KeyData);
    CHECK(classify(MsgKind::KeyRequest, false) == AssetClass::MetaData);
    CHECK(classify(MsgKind::PeerInit, false) == AssetClass::MetaData);
}

TEST_CASE("AKMS to controller is always a forbidden channel") {
    auto gate = reference_gate();
    auto v = gate.enforce(msg_of(akms_a, controller, MsgKind::StatusUpdate));
    CHECK_FALSE(v.allowed);
    CHECK(v.reason == Errc::FORBIDDEN_CHANNEL);
    // ... in both directions, and regardless of registration.
    CHECK_FALSE(gate.enforce(msg_of(controller, akms_a, MsgKind::RouteUpdate)).allowed);
}

TEST_CASE("user-side components never reach carrier-interior ones") {
    auto gate = reference_gate();
    CHECK_FALSE(gate.enforce(msg_of(ukms_a, ckms_mid, MsgKind::StatusUpdate)).allowed);
    CHECK_FALSE(gate.enforce(msg_of(sae_a, ckms_mid, MsgKind::KeyRequest)).allowed);
    CHECK_FALSE(gate.enforce(msg_of(ukms_a, controller, MsgKind::StatusUpdate)).allowed);
    CHECK_FALSE(gate.enforce(msg_of(sae_a, controller, MsgKind::KeyRequest)).allowed);
}

TEST_CASE("key data flows on secured and colocated channels") {
    auto gate = reference_gate();
    // UKMS<->AKMS secured channel carries KSA pushes.
    auto push = msg_of(akms_a, ukms_a, MsgKind::KsaPush, {{"frame", "00ff"}});
    CHECK(gate.enforce(push).allowed);
    // Reverse direction is a policy-level allow too (the flow-direction
    // property is enforced as a trace audit, not a gate rule).
    auto reverse = msg_of(ukms_a, akms_a, MsgKind::KsaPush, {{"frame", "00ff"}});
    CHECK(gate.enforce(reverse).allowed);
    // Intra-node AKMS->CKMS transfer carries the QBN key without
    // confidentiality, integrity+authenticity only.
    auto qbn = msg_of(akms_a, ckms_a, MsgKind::QbnRelay, {{"frame", "00ff"}});
    CHECK(gate.enforce(qbn).allowed);
}

TEST_CASE("unregistered channels deny everything") {
    auto gate = reference_gate();
    auto v = gate.enforce(msg_of(akms_b, aaa, MsgKind::Validate));
    CHECK_FALSE(v.allowed);
    CHECK(v.reason == Errc::FORBIDDEN_CHANNEL);
}

TEST_CASE("user profile data is confined to AKMS<->AAA and UKMS<->AKMS") {
    auto gate = reference_gate();
    CHECK(gate.enforce(msg_of(akms_a, aaa, MsgKind::Validate)).allowed);
    CHECK(gate.enforce(msg_of(ukms_a, akms_a, MsgKind::EnrichedRequest)).allowed);
    auto v = gate.enforce(msg_of(akms_a, akms_b, MsgKind::Validate));
    CHECK_FALSE(v.allowed);
    CHECK(v.reason == Errc::POLICY_DENY);
}

TEST_CASE("class requirements against channel security properties") {
    PolicyGate gate;
    gate.register_channel({"weak", akms_a, akms_b,
                           {AssetClass::KeyData, AssetClass::ControlMgmt},
                           {false, true, true}, false, 5_ms});
    // CONTROL_MGMT needs integrity+authenticity only.
    CHECK(gate.enforce(msg_of(akms_a, akms_b, MsgKind::Alarm)).allowed);
    // KEY_DATA needs confidentiality on non-colocated channels.
    auto v = gate.enforce(msg_of(akms_a, akms_b, MsgKind::KsaTransfer, {{"frame", "00"}}));
    CHECK_FALSE(v.allowed);
}

TEST_CASE("policy completeness: every kind x channel resolves to a verdict") {
    auto gate = reference_gate();
    std::vector<std::pair<EntityId, EntityId>> pairs = {
        {sae_a, ukms_a},  {ukms_a, akms_a},   {akms_a, akms_b}, {akms_a, ckms_a},
        {ckms_a, ckms_mid}, {ckms_mid, controller}, {akms_a, aaa},  {sae_a, controller},
        {ukms_a, ckms_mid}, {akms_a, controller}};
    for (const auto& [from, to] : pairs) {
        for (auto kind : kAllMsgKinds) {
            for (bool bits : {false, true}) {
                auto m = msg_of(from, to, kind, bits ? json{{"frame", "00"}} : json::object());
                CHECK_NOTHROW(gate.enforce(m));
                auto r = gate.enforce(m);
                CHECK((r.allowed || !r.detail.empty() || r.reason == Errc::POLICY_DENY ||
                       r.reason == Errc::FORBIDDEN_CHANNEL));
            }
        }
    }
}

TEST_CASE("sim fabric applies latency, FIFO order and policy") {
    SimRuntime rt;
    struct Probe : Component {
        using Component::Component;
        std::vector<std::string> seen;
        void handle(const ProtocolMessage& m) override {
            seen.push_back(m.payload.value("tag", ""));
        }
    };
    auto gate = reference_gate();
    CollectingSink sink;
    SimFabric fabric(rt, gate, 1, &sink);
    Probe ua(ukms_a), aa(akms_a);
    fabric.register_component(&ua);
    fabric.register_component(&aa);

    auto m1 = fabric.make(ukms_a, akms_a, MsgKind::EnrichedRequest, fabric.fresh_id(), {{"tag", "one"}});
    auto m2 = fabric.make(ukms_a, akms_a, MsgKind::EnrichedRequest, fabric.fresh_id(), {{"tag", "two"}});
    CHECK(fabric.send(m1).allowed);
    CHECK(fabric.send(m2).allowed);
    CHECK(aa.seen.empty());
    rt.run_for(10_ms);
    CHECK(aa.seen == std::vector<std::string>{"one", "two"});

    // Deny goes nowhere but is observable.
    auto bad = fabric.make(akms_a, controller, MsgKind::StatusUpdate, fabric.fresh_id(), {});
    CHECK_FALSE(fabric.send(bad).allowed);
    bool saw_deny = false;
    for (const auto& l : sink.lines)
        if (l.at("type") == "deny" && l.at("reason") == "FORBIDDEN_CHANNEL") saw_deny = true;
    CHECK(saw_deny);

    // Channel-down injection.
    fabric.set_channel_state(ukms_a, akms_a, false);
    auto m3 = fabric.make(ukms_a, akms_a, MsgKind::EnrichedRequest, fabric.fresh_id(), {{"tag", "x"}});
    auto v = fabric.send(m3);
    CHECK_FALSE(v.allowed);
    CHECK(v.reason == Errc::CHANNEL_DOWN);
}
