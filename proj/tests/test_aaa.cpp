#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "qkdn/aaa.hpp"
#include "qkdn/controller.hpp"

using namespace qkdn;

namespace {

struct AaaRig {
    SimRuntime rt;
    CollectingSink sink;
    std::unique_ptr<SimFabric> fabric;
    std::unique_ptr<Aaa> aaa;
    std::unique_ptr<Manager> manager;

    struct Probe : Component {
        using Component::Component;
        std::vector<ProtocolMessage> seen;
        void handle(const ProtocolMessage& msg) override { seen.push_back(msg); }
        const json* last(MsgKind k) const {
            for (auto it = seen.rbegin(); it != seen.rend(); ++it)
                if (it->kind == k) return &it->payload;
            return nullptr;
        }
    };
    std::unique_ptr<Probe> akms;
    std::unique_ptr<Probe> controller;

    explicit AaaRig(bool permissive = false) {
        EntityId aaa_id{EntityKind::Aaa, "dc"};
        EntityId mgr_id{EntityKind::Manager, "dc"};
        EntityId ctl_id{EntityKind::Controller, "dc"};
        EntityId akms_id{EntityKind::Akms, "node-2"};
        PolicyGate gate;
        gate.register_channel({"a", akms_id, aaa_id,
                               {AssetClass::UserProfile, AssetClass::ControlMgmt},
                               {true, true, true}, false, 5_ms});
        gate.register_channel({"b", akms_id, mgr_id, {AssetClass::ControlMgmt},
                               {false, true, true}, false, 5_ms});
        gate.register_channel({"c", mgr_id, ctl_id, {AssetClass::ControlMgmt},
                               {false, true, true}, false, 5_ms});
        gate.register_channel({"d", EntityId{EntityKind::QkdModule, "node-1/1-2"}, mgr_id,
                               {AssetClass::ControlMgmt}, {false, true, true}, false, 5_ms});
        fabric = std::make_unique<SimFabric>(rt, std::move(gate), 9, &sink);
        aaa = std::make_unique<Aaa>(aaa_id, permissive, &sink);
        manager = std::make_unique<Manager>(mgr_id, ctl_id, 30.0, &sink);
        akms = std::make_unique<Probe>(akms_id);
        controller = std::make_unique<Probe>(ctl_id);
        fabric->register_component(aaa.get());
        fabric->register_component(manager.get());
        fabric->register_component(akms.get());
        fabric->register_component(controller.get());
        manager->on_start();
        manager->register_device(akms_id);

        aaa->add_profile(UserProfile{"acct-1", {{"sae-a", "sae-b"}}, 1000, 4096, true});
        aaa->add_profile(UserProfile{"acct-small", {{"sae-a", "sae-b"}}, 3, 4096, true});
        aaa->add_profile(UserProfile{"acct-broke", {{"sae-a", "sae-b"}}, 1000, 4096, false});
        aaa->add_translation("sae-a", {{EntityKind::Ukms, "node-1"}, {EntityKind::Akms, "node-2"}});
        aaa->add_translation("sae-b", {{EntityKind::Ukms, "node-5"}, {EntityKind::Akms, "node-4"}});
        aaa->add_translation("sae-c", {{EntityKind::Ukms, "node-1"}, {EntityKind::Akms, "node-2"}});
    }

    json validate(const std::string& account, const std::string& master, const std::string& slave,
                  std::uint64_t number = 1) {
        akms->seen.clear();
        fabric->send(fabric->make(akms->id(), aaa->id(), MsgKind::Validate, fabric->fresh_id(),
                                  {{"phase", "authorize"},
                                   {"account", account},
                                   {"master_sae", master},
                                   {"slave_sae", slave},
                                   {"number", number},
                                   {"size_bits", 256}}));
        rt.run_for(50_ms);
        const json* reply = akms->last(MsgKind::ServiceProperties);
        return reply ? *reply : json{};
    }

    void report(Uuid corr, const std::string& account, std::uint64_t keys, std::uint64_t bits,
                const std::string& outcome) {
        fabric->send(fabric->make(akms->id(), aaa->id(), MsgKind::Validate, corr,
                                  {{"phase", "report"},
                                   {"account", account},
                                   {"keys_delivered", keys},
                                   {"bits_delivered", bits},
                                   {"outcome", outcome}}));
        rt.run_for(50_ms);
    }
};

}  // namespace

TEST_CASE("valid first request returns properties and translation") {
    AaaRig rig;
    json reply = rig.validate("acct-1", "sae-a", "sae-b");
    REQUIRE(reply.value("ok", false));
    CHECK(reply.at("properties").at("max_keys_per_day") == 1000);
    CHECK(reply.at("translation").at("slave_ukms") == "ukms:node-5");
    CHECK(reply.at("translation").at("slave_akms") == "akms:node-4");
}

TEST_CASE("rejections carry the right reason and exactly one accounting record") {
    AaaRig rig;
    auto records_for = [&](const std::string& account) {
        int n = 0;
        for (const auto& r : rig.aaa->records())
            if (r.account_id == account) ++n;
        return n;
    };

    SUBCASE("unknown account") {
        json r = rig.validate("acct-ghost", "sae-a", "sae-b");
        CHECK_FALSE(r.value("ok", true));
        CHECK(r.value("reason", "") == "UNKNOWN_USER");
        CHECK(records_for("acct-ghost") == 1);
    }
    SUBCASE("invalid payment") {
        json r = rig.validate("acct-broke", "sae-a", "sae-b");
        CHECK(r.value("reason", "") == "PAYMENT_INVALID");
        CHECK(records_for("acct-broke") == 1);
    }
    SUBCASE("pair outside the contract") {
        json r = rig.validate("acct-1", "sae-a", "sae-c");
        CHECK(r.value("reason", "") == "PEER_NOT_ALLOWED");
        CHECK(records_for("acct-1") == 1);
    }
    SUBCASE("unresolvable slave") {
        json r = rig.validate("acct-1", "sae-a", "sae-zz");
        CHECK(r.value("reason", "") == "PEER_NOT_ALLOWED");
    }
}

TEST_CASE("the 1001st key against a 1000-per-day quota is rejected") {
    AaaRig rig;
    for (int i = 0; i < 1000; ++i) {
        json r = rig.validate("acct-1", "sae-a", "sae-b");
        REQUIRE(r.value("ok", false));
    }
    json r = rig.validate("acct-1", "sae-a", "sae-b");
    CHECK_FALSE(r.value("ok", true));
    CHECK(r.value("reason", "") == "QUOTA_EXCEEDED");
    CHECK(rig.aaa->usage("acct-1").at("authorized_today") == 1000);
}

TEST_CASE("quota counts the whole batch and resets at simulated midnight") {
    AaaRig rig;
    CHECK(rig.validate("acct-small", "sae-a", "sae-b", 2).value("ok", false));
    json r = rig.validate("acct-small", "sae-a", "sae-b", 2);  // 4 > 3
    CHECK(r.value("reason", "") == "QUOTA_EXCEEDED");
    // Advance past the day boundary: the counter starts fresh.
    rig.rt.run_for(86400_s);
    CHECK(rig.validate("acct-small", "sae-a", "sae-b", 2).value("ok", false));
}

TEST_CASE("delivery reports are idempotent per correlation") {
    AaaRig rig;
    Uuid corr = rig.fabric->fresh_id();
    rig.report(corr, "acct-1", 1, 256, "DELIVERED");
    CHECK(rig.aaa->records().size() == 1);
    CHECK(rig.aaa->records()[0].bits_delivered == 256);

    rig.akms->seen.clear();
    rig.report(corr, "acct-1", 1, 256, "DELIVERED");
    CHECK(rig.aaa->records().size() == 1);  // no double record
    const json* err = rig.akms->last(MsgKind::ErrorMsg);
    REQUIRE(err != nullptr);
    CHECK(err->value("reason", "") == "DUPLICATE_RECORD");
}

TEST_CASE("usage aggregates replay the accounting log") {
    AaaRig rig;
    rig.report(rig.fabric->fresh_id(), "acct-1", 1, 256, "DELIVERED");
    rig.report(rig.fabric->fresh_id(), "acct-1", 2, 512, "DELIVERED");
    rig.report(rig.fabric->fresh_id(), "acct-1", 0, 0, "FAILED(KEY_STARVATION)");
    std::uint64_t keys = 0, bits = 0;
    for (const auto& r : rig.aaa->records())
        if (r.account_id == "acct-1" && r.outcome == "DELIVERED") {
            keys += r.keys_delivered;
            bits += r.bits_delivered;
        }
    json usage = rig.aaa->usage("acct-1");
    CHECK(usage.at("keys_delivered") == keys);
    CHECK(usage.at("bits_delivered") == bits);
    CHECK(usage.at("failed") == 1);
}

TEST_CASE("resolve maps SAEs through their UKMS to the AKMS") {
    AaaRig rig;
    auto e = rig.aaa->resolve("sae-b");
    REQUIRE(e.has_value());
    CHECK(e->ukms == EntityId{EntityKind::Ukms, "node-5"});
    CHECK(e->akms == EntityId{EntityKind::Akms, "node-4"});
    CHECK_FALSE(rig.aaa->resolve("sae-zz").has_value());
    // Two SAEs on one UKMS resolve to the same ukms id.
    CHECK(rig.aaa->resolve("sae-a")->ukms == rig.aaa->resolve("sae-c")->ukms);
}

TEST_CASE("permissive mode validates unknown accounts but still needs the directory") {
    AaaRig rig(true);
    CHECK(rig.validate("acct-ghost", "sae-a", "sae-b").value("ok", false));
    CHECK(rig.validate("acct-ghost", "sae-a", "sae-zz").value("reason", "") == "PEER_NOT_ALLOWED");
}

TEST_CASE("manager tracks heartbeats and flags lapses as CRITICAL") {
    AaaRig rig;
    auto heartbeat = [&] {
        rig.fabric->send(rig.fabric->make(rig.akms->id(), rig.manager->id(), MsgKind::StatusUpdate,
                                          rig.fabric->fresh_id(), {{"heartbeat", true}}));
    };
    heartbeat();
    rig.rt.run_for(60_s);
    heartbeat();
    rig.rt.run_for(60_s);
    for (const auto& a : rig.manager->alarms()) CHECK(a.kind != "DEVICE_UNRESPONSIVE");
    // Silence for more than three heartbeat intervals.
    rig.rt.run_for(200_s);
    bool flagged = false;
    for (const auto& a : rig.manager->alarms())
        if (a.kind == "DEVICE_UNRESPONSIVE" && a.severity == "CRITICAL") flagged = true;
    CHECK(flagged);
}

TEST_CASE("manager records unknown senders and forwards LINK_DOWN to the controller") {
    AaaRig rig;
    // Heartbeat from a device never registered.
    rig.fabric->send(rig.fabric->make(EntityId{EntityKind::QkdModule, "node-1/1-2"},
                                      rig.manager->id(), MsgKind::StatusUpdate,
                                      rig.fabric->fresh_id(), {{"heartbeat", true}}));
    rig.rt.run_for(50_ms);
    bool warned = false;
    for (const auto& a : rig.manager->alarms())
        if (a.kind == "UNKNOWN_SENDER" && a.severity == "WARN") warned = true;
    CHECK(warned);

    rig.fabric->send(rig.fabric->make(EntityId{EntityKind::QkdModule, "node-1/1-2"},
                                      rig.manager->id(), MsgKind::Alarm, rig.fabric->fresh_id(),
                                      {{"severity", "CRITICAL"},
                                       {"kind", "LINK_DOWN"},
                                       {"link_id", "1-2"},
                                       {"state", "DOWN"},
                                       {"source", "qkd:node-1/1-2"}}));
    rig.rt.run_for(50_ms);
    const json* fwd = rig.controller->last(MsgKind::Alarm);
    REQUIRE(fwd != nullptr);
    CHECK(fwd->value("link_id", "") == "1-2");
}
