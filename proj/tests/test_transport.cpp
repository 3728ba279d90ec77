#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "qkdn/controller.hpp"
#include "qkdn/harness.hpp"
#include "test_support.hpp"

using namespace qkdn;
using qkdn_test::mini_config;

namespace {

EntityId ck(int i) { return {EntityKind::Ckms, "node-" + std::to_string(i)}; }

// Minimal carrier rig: a controller plus scripted CKMS stand-ins.
struct ControllerRig {
    SimRuntime rt;
    CollectingSink sink;
    std::unique_ptr<SimFabric> fabric;
    std::unique_ptr<Controller> controller;

    struct FakeCkms : Component {
        using Component::Component;
        bool ack{true};
        std::vector<json> updates;
        json last_route_ack;  // replies addressed to us as initiator
        void handle(const ProtocolMessage& msg) override {
            if (msg.kind == MsgKind::RouteUpdate) {
                updates.push_back(msg.payload);
                if (ack)
                    fabric().send(fabric().make(id(), msg.from, MsgKind::RouteAck,
                                                msg.correlation_id,
                                                {{"ok", true},
                                                 {"destination", msg.payload.at("destination")},
                                                 {"version", updates.size()}}));
            } else if (msg.kind == MsgKind::RouteAck) {
                last_route_ack = msg.payload;
            }
        }
    };
    struct Probe : Component {
        using Component::Component;
        std::vector<ProtocolMessage> seen;
        void handle(const ProtocolMessage& msg) override { seen.push_back(msg); }
    };

    std::map<int, std::unique_ptr<FakeCkms>> nodes;
    std::unique_ptr<Probe> manager;

    explicit ControllerRig(int n_nodes) {
        PolicyGate gate;
        EntityId controller_id{EntityKind::Controller, "dc"};
        EntityId manager_id{EntityKind::Manager, "dc"};
        for (int i = 1; i <= n_nodes; ++i)
            gate.register_channel({"ctl" + std::to_string(i), ck(i), controller_id,
                                   {AssetClass::ControlMgmt}, {false, true, true}, false, 5_ms});
        gate.register_channel({"mgr", manager_id, controller_id, {AssetClass::ControlMgmt},
                               {false, true, true}, false, 5_ms});
        // An unregistered-at-the-controller CKMS still has a channel.
        gate.register_channel({"ctl99", ck(99), controller_id, {AssetClass::ControlMgmt},
                               {false, true, true}, false, 5_ms});
        fabric = std::make_unique<SimFabric>(rt, std::move(gate), 5, &sink);

        ControllerConfig cc;
        cc.manager = manager_id;
        cc.status_interval_s = 30.0;
        cc.install_timeout_s = 1.0;
        controller = std::make_unique<Controller>(controller_id, cc);
        std::vector<EntityId> ids;
        std::vector<Controller::CarrierLink> links;
        for (int i = 1; i <= n_nodes; ++i) {
            ids.push_back(ck(i));
            nodes[i] = std::make_unique<FakeCkms>(ck(i));
            fabric->register_component(nodes[i].get());
        }
        for (int i = 1; i < n_nodes; ++i)
            links.push_back({std::to_string(i) + "-" + std::to_string(i + 1), ck(i), ck(i + 1)});
        controller->register_carrier(ids, links);
        fabric->register_component(controller.get());
        nodes[99] = std::make_unique<FakeCkms>(ck(99));
        fabric->register_component(nodes[99].get());
        manager = std::make_unique<Probe>(manager_id);
        fabric->register_component(manager.get());
    }

    void push_status(int node, const std::string& link, double avail, double rate) {
        fabric->send(fabric->make(ck(node), controller->id(), MsgKind::StatusUpdate,
                                  fabric->fresh_id(),
                                  {{"pools", json::array({{{"peer", "x"},
                                                           {"link_id", link},
                                                           {"available_bits", avail},
                                                           {"rate_bps", rate}}})}}));
        rt.run_for(10_ms);
    }
};

}  // namespace

TEST_CASE("weight strictly increases as available bits shrink") {
    ControllerRig rig(3);
    rig.push_status(1, "1-2", 2560, 1000);
    rig.push_status(2, "1-2", 2560, 1000);
    double w_full = rig.controller->weight_of("1-2");
    REQUIRE(w_full > 0);
    // EWMA converges downward over repeated reports of the lower value.
    for (int i = 0; i < 40; ++i) {
        rig.push_status(1, "1-2", 256, 1000);
        rig.push_status(2, "1-2", 256, 1000);
    }
    double w_low = rig.controller->weight_of("1-2");
    CHECK(w_low > w_full);
}

TEST_CASE("stale links are treated as down") {
    ControllerRig rig(3);
    rig.push_status(1, "1-2", 1000, 100);
    rig.push_status(2, "1-2", 1000, 100);
    rig.push_status(2, "2-3", 1000, 100);
    rig.push_status(3, "2-3", 1000, 100);
    CHECK(rig.controller->compute_path(ck(1), ck(3)).has_value());
    // Beyond 3x the status interval with no updates, links go stale.
    rig.rt.run_for(91_s);
    CHECK_FALSE(rig.controller->compute_path(ck(1), ck(3)).has_value());
}

TEST_CASE("status updates from unregistered senders are dropped with an alarm") {
    ControllerRig rig(3);
    rig.push_status(99, "1-2", 1000, 100);
    CHECK(rig.controller->dropped_updates() == 1);
    CHECK(rig.controller->weight_of("1-2") < 0);  // nothing ingested
    bool alarmed = false;
    for (const auto& m : rig.manager->seen)
        if (m.kind == MsgKind::Alarm && m.payload.value("kind", "") == "UNKNOWN_SENDER")
            alarmed = true;
    CHECK(alarmed);
}

TEST_CASE("install updates nodes in path order and acks the initiator") {
    ControllerRig rig(4);
    for (int i = 1; i <= 4; ++i) {
        if (i < 4) {
            std::string link = std::to_string(i) + "-" + std::to_string(i + 1);
            rig.push_status(i, link, 10000, 100);
            rig.push_status(i + 1, link, 10000, 100);
        }
    }
    rig.fabric->send(rig.fabric->make(ck(1), rig.controller->id(), MsgKind::RouteRequest,
                                      rig.fabric->fresh_id(),
                                      {{"src", ck(1).str()}, {"dst", ck(4).str()}}));
    rig.rt.run_for(1_s);
    // Every node on the path received exactly one update; initiator has the
    // final acknowledgement with the full path.
    for (int i = 1; i <= 4; ++i) CHECK(rig.nodes[i]->updates.size() == 1);
    CHECK(rig.nodes[1]->updates[0].at("next_hop") == ck(2).str());
    CHECK(rig.nodes[4]->updates[0].at("next_hop") == ck(4).str());  // destination self-marker
    REQUIRE(!rig.nodes[1]->last_route_ack.is_null());
    CHECK(rig.nodes[1]->last_route_ack.value("ok", false));
    CHECK(rig.nodes[1]->last_route_ack.at("path").size() == 4);
}

TEST_CASE("unresponsive node triggers rollback and NO_PATH") {
    ControllerRig rig(4);
    for (int i = 1; i < 4; ++i) {
        std::string link = std::to_string(i) + "-" + std::to_string(i + 1);
        rig.push_status(i, link, 10000, 100);
        rig.push_status(i + 1, link, 10000, 100);
    }
    rig.nodes[3]->ack = false;  // node 3 swallows updates
    rig.fabric->send(rig.fabric->make(ck(1), rig.controller->id(), MsgKind::RouteRequest,
                                      rig.fabric->fresh_id(),
                                      {{"src", ck(1).str()}, {"dst", ck(4).str()}}));
    rig.rt.run_for(5_s);
    REQUIRE(!rig.nodes[1]->last_route_ack.is_null());
    CHECK_FALSE(rig.nodes[1]->last_route_ack.value("ok", true));
    CHECK(rig.nodes[1]->last_route_ack.value("reason", "") == "NO_PATH");
    // Nodes 1 and 2 saw their install followed by a removal (rollback to the
    // previous, empty state).
    REQUIRE(rig.nodes[1]->updates.size() == 2);
    CHECK(rig.nodes[1]->updates[1].at("next_hop").is_null());
    REQUIRE(rig.nodes[2]->updates.size() == 2);
    CHECK(rig.nodes[2]->updates[1].at("next_hop").is_null());
    CHECK(rig.nodes[4]->updates.empty());  // never reached
}

TEST_CASE("installs for disjoint destinations interleave") {
    ControllerRig rig(6);
    for (int i = 1; i < 6; ++i) {
        std::string link = std::to_string(i) + "-" + std::to_string(i + 1);
        rig.push_status(i, link, 10000, 100);
        rig.push_status(i + 1, link, 10000, 100);
    }
    // 1->2 and 4->6 share no nodes.
    rig.fabric->send(rig.fabric->make(ck(1), rig.controller->id(), MsgKind::RouteRequest,
                                      rig.fabric->fresh_id(),
                                      {{"src", ck(1).str()}, {"dst", ck(2).str()}}));
    rig.fabric->send(rig.fabric->make(ck(4), rig.controller->id(), MsgKind::RouteRequest,
                                      rig.fabric->fresh_id(),
                                      {{"src", ck(4).str()}, {"dst", ck(6).str()}}));
    rig.rt.run_for(2_s);
    CHECK(rig.nodes[1]->last_route_ack.value("ok", false));
    CHECK(rig.nodes[4]->last_route_ack.value("ok", false));
}

TEST_CASE("SIM runs are bit-reproducible from (config, seed)") {
    auto run_once = [] {
        ScenarioOptions opt;
        opt.scenario = "BASELINE";
        opt.exchanges = 3;
        auto result = run_scenario(mini_config(), opt);
        std::string trace;
        for (const auto& l : result.trace->lines) trace += l.dump() + "\n";
        return std::make_pair(trace, result.metrics.dump());
    };
    auto [trace1, metrics1] = run_once();
    auto [trace2, metrics2] = run_once();
    CHECK(trace1 == trace2);
    CHECK(metrics1 == metrics2);

    ScenarioOptions opt;
    opt.scenario = "BASELINE";
    opt.exchanges = 3;
    opt.seed = 999;
    auto other = run_scenario(mini_config(), opt);
    std::string other_trace;
    for (const auto& l : other.trace->lines) other_trace += l.dump() + "\n";
    CHECK(other_trace != trace1);
}

TEST_CASE("duplicate injection delivers twice, normal sends exactly once") {
    std::shared_ptr<CollectingSink> sink = std::make_shared<CollectingSink>();
    TopologyConfig cfg = mini_config();
    World world(cfg, {}, sink.get());
    world.start();
    auto corr = world.fabric().fresh_id();
    auto msg = world.fabric().make(EntityId{EntityKind::Sae, "alice"},
                                   EntityId{EntityKind::Ukms, "node-1"}, MsgKind::KeyRequest, corr,
                                   {{"op", "status"}, {"credential", "cred-alice"},
                                    {"slave_sae", "bob"}});
    world.fabric().send(msg);
    world.runtime().run_for(100_ms);
    auto count = [&] {
        int n = 0;
        for (const auto& l : sink->lines)
            if (l.value("type", "") == "msg" && l.value("kind", "") == "KEY_REQUEST" &&
                l.value("correlation", "") == corr.str())
                ++n;
        return n;
    };
    CHECK(count() == 1);
    world.fabric().inject_duplicate(msg);
    world.runtime().run_for(100_ms);
    CHECK(count() == 2);
}

TEST_CASE("link-down alarms flow to the controller and gate routing") {
    TopologyConfig cfg = mini_config();
    std::shared_ptr<CollectingSink> sink = std::make_shared<CollectingSink>();
    World world(cfg, {}, sink.get());
    world.start();
    world.prefill_pools();
    ExchangeDriver driver(world, "alice", "bob");
    driver.run(1);
    REQUIRE(driver.records().at(0).delivered());

    world.set_link_state("2-3", false);
    world.runtime().run_for(100_ms);
    driver.run(1);
    CHECK(driver.records().at(1).outcome == "FAILED(NO_PATH)");

    world.set_link_state("2-3", true);
    world.runtime().run_for(100_ms);
    driver.run(1);
    CHECK(driver.records().at(2).delivered());
}
