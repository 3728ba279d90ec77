// Builds a complete network from a TopologyConfig on the deterministic SIM
// backend: components, channels and policy, QKD link simulators with key
// delivery into the right pools, timers for ticks/heartbeats, pre-fill and
// fault injection.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qkdn/aaa.hpp"
#include "qkdn/akms.hpp"
#include "qkdn/ckms.hpp"
#include "qkdn/controller.hpp"
#include "qkdn/fabric.hpp"
#include "qkdn/qkd_link.hpp"
#include "qkdn/sae_client.hpp"
#include "qkdn/topology.hpp"
#include "qkdn/ukms.hpp"

namespace qkdn {

struct WorldOptions {
    bool aaa_permissive{false};
    std::string cipher_override;  // "", "OTP" or "AES256GCM": forces every leg
    bool heartbeats{true};
};

struct LinkAggregates {
    std::uint64_t telemetry_samples{0};
    double skr_sum{0}, skr_sq{0};
    double qber_sum{0}, qber_sq{0};
    std::uint64_t emitted_bits{0};
    std::uint64_t dropped_a{0}, dropped_b{0};
};

class World {
public:
    World(TopologyConfig cfg, WorldOptions opt, TraceSink* trace)
        : cfg_(std::move(cfg)), opt_(std::move(opt)), trace_(trace) {
        cfg_.validate();
        if (!opt_.cipher_override.empty()) {
            cfg_.defaults.cipher_ukms_akms = opt_.cipher_override;
            cfg_.defaults.cipher_carrier = opt_.cipher_override;
            cfg_.defaults.cipher_akms_akms = opt_.cipher_override;
        }
        build();
    }

    SimRuntime& runtime() { return rt_; }
    SimFabric& fabric() { return *fabric_; }
    const TopologyConfig& config() const { return cfg_; }

    Ukms& ukms(const std::string& node) { return *ukms_.at(node); }
    Akms& akms(const std::string& node) { return *akms_.at(node); }
    Ckms& ckms(const std::string& node) { return *ckms_.at(node); }
    Controller& controller() { return *controller_; }
    Aaa& aaa() { return *aaa_; }
    Manager& manager() { return *manager_; }
    SaeClient& sae(const std::string& name) { return *saes_.at(name); }
    QkdLinkSim& link(const std::string& link_id) { return *links_.at(link_id); }
    const std::map<std::string, LinkAggregates>& link_aggregates() const { return aggregates_; }

    // Starts periodic machinery (link ticks, status pushes, heartbeats).
    void start() {
        for (auto& [_, c] : components_) c->on_start();
        // Initial state of administratively-down links reaches the controller
        // the same way later transitions do.
        for (const auto& l : cfg_.links) {
            if (l.initially_up) continue;
            EntityId source{EntityKind::QkdModule, l.a + "/" + l.id};
            fabric_->send(fabric_->make(source, manager_->id(), MsgKind::Alarm, fabric_->fresh_id(),
                                        {{"severity", "WARN"},
                                         {"kind", "LINK_DOWN"},
                                         {"link_id", l.id},
                                         {"state", "DOWN"},
                                         {"source", source.str()},
                                         {"detail", "link " + l.id + " starts disabled"}}));
        }
        schedule_tick();
        if (opt_.heartbeats) schedule_heartbeats();
    }

    // Fills every QKD-link pool lane to capacity ("fully populated key
    // storages"). Bootstrap material is seeded at build time regardless.
    void prefill_pools() {
        for (auto& [link_id, link] : links_) {
            auto ends = link_stores(link_id);
            if (!ends) continue;
            std::uint64_t per_lane = std::min<std::uint64_t>(ends->a_store->capacity_bits(),
                                                             ends->b_store->capacity_bits());
            auto blocks = link->prefill(2 * per_lane, rt_.now());
            deliver_blocks(link_id, *ends, blocks);
        }
    }

    // Link fault injection; emits the fault-management alarm on transitions.
    void set_link_state(const std::string& link_id, bool up) {
        auto& link = *links_.at(link_id);
        if (!link.set_state(up)) return;
        const auto& lc = *cfg_.link(link_id);
        EntityId source{EntityKind::QkdModule, lc.a + "/" + link_id};
        fabric_->send(fabric_->make(source, manager_->id(), MsgKind::Alarm, fabric_->fresh_id(),
                                    {{"severity", up ? "WARN" : "CRITICAL"},
                                     {"kind", "LINK_DOWN"},
                                     {"link_id", link_id},
                                     {"state", up ? "UP" : "DOWN"},
                                     {"source", source.str()},
                                     {"detail", std::string("link ") + link_id +
                                                    (up ? " enabled" : " disabled")}}));
    }

    // Raw send as some component (policy-audit fault injection).
    Verdict inject_send(const EntityId& from, const EntityId& to, MsgKind kind, json payload) {
        return fabric_->send(fabric_->make(from, to, kind, fabric_->fresh_id(), std::move(payload)));
    }

    void emit_final_snapshots() {
        for (auto& [_, u] : ukms_) u->store().emit_final_snapshot(rt_.now());
        for (auto& [_, a] : akms_) a->store().emit_final_snapshot(rt_.now());
        for (auto& [_, c] : ckms_) c->store().emit_final_snapshot(rt_.now());
    }

    std::uint64_t total_drops() const {
        std::uint64_t n = 0;
        for (const auto& [_, agg] : aggregates_) n += agg.dropped_a + agg.dropped_b;
        return n;
    }

private:
    struct LinkEnds {
        KeyStore* a_store;
        EntityId a_peer;
        KeyStore* b_store;
        EntityId b_peer;
    };

    static CipherMode mode_from(const std::string& s) { return cipher_mode_from(s); }

    void build() {
        PolicyGate gate;
        const Defaults& d = cfg_.defaults;
        SimTime lat = static_cast<SimTime>(d.latency_ms * 1000);
        SimTime colo_lat = static_cast<SimTime>(d.colocated_latency_ms * 1000);

        std::string dc;
        std::vector<std::string> access_nodes;
        for (const auto& n : cfg_.nodes) {
            if (n.type == NodeType::Datacenter) dc = n.id;
            if (n.type == NodeType::Access) access_nodes.push_back(n.id);
        }
        EntityId controller_id{EntityKind::Controller, dc};
        EntityId manager_id{EntityKind::Manager, dc};
        EntityId aaa_id{EntityKind::Aaa, dc};

        auto add_channel = [&gate](std::string id, EntityId a, EntityId b,
                                   std::set<AssetClass> classes, ChannelSecurity sec, bool colo,
                                   SimTime latency) {
            gate.register_channel(
                {std::move(id), std::move(a), std::move(b), std::move(classes), sec, colo, latency});
        };

        std::vector<EntityId> devices;  // manager registry + heartbeat sources

        // Channels around each node's components.
        for (const auto& n : cfg_.nodes) {
            if (n.type == NodeType::User) {
                EntityId u{EntityKind::Ukms, n.id};
                devices.push_back(u);
                auto access = cfg_.access_of(n.id);
                EntityId a{EntityKind::Akms, *access};
                add_channel("ukms-akms:" + n.id, u, a,
                            {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt,
                             AssetClass::UserProfile},
                            {true, true, true}, false, lat);
            } else if (n.type == NodeType::Access) {
                EntityId a{EntityKind::Akms, n.id};
                EntityId c{EntityKind::Ckms, n.id};
                devices.push_back(a);
                devices.push_back(c);
                add_channel("intra:" + n.id, a, c,
                            {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                            {false, true, true}, true, colo_lat);
                add_channel("akms-aaa:" + n.id, a, aaa_id,
                            {AssetClass::UserProfile, AssetClass::ControlMgmt}, {true, true, true},
                            false, lat);
            } else if (n.type == NodeType::Carrier) {
                devices.push_back(EntityId{EntityKind::Ckms, n.id});
            }
        }
        for (std::size_t i = 0; i < access_nodes.size(); ++i)
            for (std::size_t j = i + 1; j < access_nodes.size(); ++j)
                add_channel("akms-akms:" + access_nodes[i] + ":" + access_nodes[j],
                            {EntityKind::Akms, access_nodes[i]}, {EntityKind::Akms, access_nodes[j]},
                            {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                            {true, true, true}, false, lat);
        for (const auto* l : cfg_.carrier_links())
            add_channel("carrier:" + l->id, {EntityKind::Ckms, l->a}, {EntityKind::Ckms, l->b},
                        {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                        {true, true, true}, false, lat);
        for (const auto& n : cfg_.nodes) {
            if (!n.has_component("ckms")) continue;
            add_channel("ctl:" + n.id, {EntityKind::Ckms, n.id}, controller_id,
                        {AssetClass::ControlMgmt}, {false, true, true}, false, lat);
        }
        for (const auto& s : cfg_.saes) {
            EntityId sae{EntityKind::Sae, s.id};
            add_channel("sae:" + s.id, sae, {EntityKind::Ukms, s.node},
                        {AssetClass::KeyData, AssetClass::MetaData, AssetClass::ControlMgmt},
                        {true, true, true}, false, lat);
        }
        // QKD modules report to the manager.
        for (const auto& l : cfg_.links) {
            devices.push_back(EntityId{EntityKind::QkdModule, l.a + "/" + l.id});
            devices.push_back(EntityId{EntityKind::QkdModule, l.b + "/" + l.id});
        }
        devices.push_back(controller_id);
        devices.push_back(aaa_id);
        for (const auto& dev : devices)
            add_channel("mgmt:" + dev.str(), dev, manager_id, {AssetClass::ControlMgmt},
                        {false, true, true}, false, lat);
        add_channel("mgmt:controller", manager_id, controller_id, {AssetClass::ControlMgmt},
                    {false, true, true}, false, lat);

        fabric_ = std::make_unique<SimFabric>(rt_, std::move(gate), cfg_.seed, trace_);

        // Components.
        controller_ = std::make_unique<Controller>(
            controller_id, ControllerConfig{manager_id, WeightParams{}, d.status_interval_s,
                                            d.install_timeout_s, 5.0});
        manager_ = std::make_unique<Manager>(manager_id, controller_id, d.heartbeat_interval_s,
                                             trace_);
        aaa_ = std::make_unique<Aaa>(aaa_id, opt_.aaa_permissive, trace_);

        for (const auto& n : cfg_.nodes) {
            if (n.type == NodeType::User) {
                UkmsConfig uc;
                uc.akms = EntityId{EntityKind::Akms, *cfg_.access_of(n.id)};
                uc.manager = manager_id;
                uc.akms_leg_mode = mode_from(d.cipher_ukms_akms);
                uc.gcm_rekey_wraps = d.gcm_rekey_wraps;
                uc.max_buffer_per_pair = d.max_buffer_per_pair;
                uc.pool_capacity_bits = d.pool_capacity_bits;
                uc.low_watermark_bits = d.low_watermark_bits;
                ukms_[n.id] = std::make_unique<Ukms>(EntityId{EntityKind::Ukms, n.id}, uc, trace_);
            } else if (n.type == NodeType::Access) {
                AkmsConfig ac;
                ac.aaa = aaa_id;
                ac.manager = manager_id;
                ac.local_ckms = EntityId{EntityKind::Ckms, n.id};
                ac.ukms_leg_mode = mode_from(d.cipher_ukms_akms);
                ac.akms_channel_mode = mode_from(d.cipher_akms_akms);
                ac.gcm_rekey_wraps = d.gcm_rekey_wraps;
                ac.pool_capacity_bits = d.pool_capacity_bits;
                ac.low_watermark_bits = d.low_watermark_bits;
                ac.aaa_timeout_s = d.aaa_timeout_s;
                ac.peer_timeout_s = d.peer_timeout_s;
                ac.retry_max = d.retry_max;
                ac.retry_base_s = d.retry_base_s;
                std::uint64_t rng_seed = cfg_.seed ^ std::hash<std::string>{}("akms:" + n.id);
                akms_[n.id] = std::make_unique<Akms>(EntityId{EntityKind::Akms, n.id}, ac, rng_seed,
                                                     trace_);
            }
            if (n.has_component("ckms")) {
                CkmsConfig cc;
                cc.controller = controller_id;
                cc.manager = manager_id;
                if (n.type == NodeType::Access) cc.local_akms = EntityId{EntityKind::Akms, n.id};
                cc.carrier_mode = mode_from(d.cipher_carrier);
                cc.gcm_rekey_wraps = d.gcm_rekey_wraps;
                cc.pool_capacity_bits = d.pool_capacity_bits;
                cc.low_watermark_bits = d.low_watermark_bits;
                cc.max_hops = d.max_hops;
                cc.key_wait_timeout_s = d.key_wait_timeout_s;
                cc.status_interval_s = d.status_interval_s;
                ckms_[n.id] = std::make_unique<Ckms>(EntityId{EntityKind::Ckms, n.id}, cc, trace_);
            }
        }

        // Wiring: AKMS legs and peers, CKMS adjacency, controller graph.
        for (const auto& n : cfg_.nodes) {
            if (n.type != NodeType::User) continue;
            akms_.at(*cfg_.access_of(n.id))->add_ukms_leg(EntityId{EntityKind::Ukms, n.id});
        }
        for (std::size_t i = 0; i < access_nodes.size(); ++i) {
            for (std::size_t j = 0; j < access_nodes.size(); ++j) {
                if (i == j) continue;
                akms_.at(access_nodes[i])
                    ->add_remote_akms(EntityId{EntityKind::Akms, access_nodes[j]});
            }
        }
        std::vector<Controller::CarrierLink> carrier;
        for (const auto* l : cfg_.carrier_links()) {
            EntityId ca{EntityKind::Ckms, l->a};
            EntityId cb{EntityKind::Ckms, l->b};
            ckms_.at(l->a)->add_adjacent(cb, l->id);
            ckms_.at(l->b)->add_adjacent(ca, l->id);
            carrier.push_back({l->id, ca, cb});
        }
        std::vector<EntityId> ckms_ids;
        for (const auto& [node, _] : ckms_) ckms_ids.push_back(EntityId{EntityKind::Ckms, node});
        controller_->register_carrier(ckms_ids, carrier);

        // AAA data.
        for (const auto& p : cfg_.profiles) {
            UserProfile profile;
            profile.account_id = p.account_id;
            for (auto [x, y] : p.allowed_sae_pairs) {
                auto k = std::minmax(x, y);
                profile.allowed_sae_pairs.insert({k.first, k.second});
            }
            profile.max_keys_per_day = p.max_keys_per_day;
            profile.max_key_bits = p.max_key_bits;
            profile.payment_valid = p.payment_valid;
            aaa_->add_profile(std::move(profile));
        }
        for (const auto& s : cfg_.saes) {
            auto access = cfg_.access_of(s.node);
            aaa_->add_translation(s.id, TranslationEntry{EntityId{EntityKind::Ukms, s.node},
                                                         EntityId{EntityKind::Akms, *access}});
            ukms_.at(s.node)->register_sae(s.id, s.account, s.credential);
            saes_[s.id] = std::make_unique<SaeClient>(EntityId{EntityKind::Sae, s.id},
                                                      EntityId{EntityKind::Ukms, s.node},
                                                      s.credential);
        }
        for (const auto& dev : devices) manager_->register_device(dev);

        // Registration with the fabric.
        auto reg = [this](Component* c) {
            fabric_->register_component(c);
            components_[c->id().str()] = c;
        };
        reg(controller_.get());
        reg(manager_.get());
        reg(aaa_.get());
        for (auto& [_, u] : ukms_) reg(u.get());
        for (auto& [_, a] : akms_) reg(a.get());
        for (auto& [_, c] : ckms_) reg(c.get());
        for (auto& [_, s] : saes_) reg(s.get());

        // Policy denials surface as manager alarms.
        fabric_->set_deny_observer([this](const ProtocolMessage& m, const Verdict& v) {
            manager_->record(m.from.str(), "WARN", "POLICY_DENY",
                             std::string(to_string(m.kind)) + " to " + m.to.str() + ": " + v.detail);
        });

        // QKD link simulators.
        for (const auto& l : cfg_.links) {
            QkdLinkConfig qc;
            qc.link_id = l.id;
            qc.end_a = EntityId{EntityKind::QkdModule, l.a + "/" + l.id};
            qc.end_b = EntityId{EntityKind::QkdModule, l.b + "/" + l.id};
            qc.skr_bps = l.skr_kbps * 1000.0;
            qc.skr_jitter_rel = l.skr_kbps > 0 ? l.skr_std_kbps / l.skr_kbps : 0.0;
            qc.qber_pct = l.qber_pct;
            qc.qber_jitter_pp = l.qber_std_pp;
            qc.initially_up = l.initially_up;
            qc.assumed = l.assumed;
            links_[l.id] = std::make_unique<QkdLinkSim>(qc, cfg_.seed);
            aggregates_[l.id] = {};
        }

        seed_akms_bootstrap(cfg_.defaults.akms_bootstrap_bits);
    }

    // Pre-shared AKMS<->AKMS channel material: the provisioning-phase
    // smartcard stand-in, present before any QKD key arrives.
    void seed_akms_bootstrap(std::uint64_t bits_per_lane) {
        std::vector<std::string> access;
        for (const auto& n : cfg_.nodes)
            if (n.type == NodeType::Access) access.push_back(n.id);
        for (std::size_t i = 0; i < access.size(); ++i) {
            for (std::size_t j = i + 1; j < access.size(); ++j) {
                EntityId a{EntityKind::Akms, access[i]};
                EntityId b{EntityKind::Akms, access[j]};
                HybridRng stream(cfg_.seed ^ 0xb005ull ^
                                 (std::hash<std::string>{}(a.str() + b.str()) | 1));
                for (std::uint64_t filled = 0; filled + 16384 <= bits_per_lane; filled += 16384) {
                    for (const char* lane : {"fwd", "rev"}) {
                        Bytes material = stream.generate(128 + 16384);
                        KeyBlock block = new_key_block(
                            Bytes(material.begin() + 16, material.end()), KeyOrigin::local_rng(),
                            KeyRole::Kma, Uuid::from_bytes(material.data()), rt_.now());
                        akms_.at(access[i])->store().refill(b, block, lane);
                        akms_.at(access[j])->store().refill(a, block, lane);
                    }
                }
            }
        }
    }

    // Which stores (and peer ids) a link's key material lands in.
    std::optional<LinkEnds> link_stores(const std::string& link_id) {
        const LinkCfg* l = cfg_.link(link_id);
        const NodeCfg* na = cfg_.node(l->a);
        const NodeCfg* nb = cfg_.node(l->b);
        auto store_of = [this](const NodeCfg& n) -> std::pair<KeyStore*, EntityId> {
            if (n.type == NodeType::User)
                return {&ukms_.at(n.id)->store(), EntityId{EntityKind::Ukms, n.id}};
            return {&ckms_.at(n.id)->store(), EntityId{EntityKind::Ckms, n.id}};
        };
        // User-access links feed the UKMS and AKMS stores; carrier links feed
        // the two CKMS stores.
        if (na->type == NodeType::User || nb->type == NodeType::User) {
            const NodeCfg& user = na->type == NodeType::User ? *na : *nb;
            const NodeCfg& acc = na->type == NodeType::User ? *nb : *na;
            return LinkEnds{&ukms_.at(user.id)->store(), EntityId{EntityKind::Akms, acc.id},
                            &akms_.at(acc.id)->store(), EntityId{EntityKind::Ukms, user.id}};
        }
        auto [sa, pa] = store_of(*na);
        auto [sb, pb] = store_of(*nb);
        return LinkEnds{sa, pb, sb, pa};
    }

    void deliver_blocks(const std::string& link_id, const LinkEnds& ends,
                        const std::vector<KeyBlock>& blocks) {
        auto& agg = aggregates_[link_id];
        auto& parity = lane_parity_[link_id];
        for (const auto& block : blocks) {
            const char* lane = (parity++ % 2 == 0) ? "fwd" : "rev";
            agg.emitted_bits += block.size_bits();
            if (!ends.a_store->refill(ends.a_peer, block, lane)) agg.dropped_a += 1;
            if (!ends.b_store->refill(ends.b_peer, block, lane)) agg.dropped_b += 1;
        }
    }

    void schedule_tick() {
        SimTime interval = static_cast<SimTime>(cfg_.defaults.tick_interval_s * 1e6);
        rt_.schedule(interval, [this, interval] {
            double dt = to_seconds(interval);
            for (auto& [link_id, link] : links_) {
                auto out = link->tick(dt, rt_.now());
                auto& agg = aggregates_[link_id];
                agg.telemetry_samples += 1;
                agg.skr_sum += out.telemetry.skr_bps;
                agg.skr_sq += out.telemetry.skr_bps * out.telemetry.skr_bps;
                agg.qber_sum += out.telemetry.qber_pct;
                agg.qber_sq += out.telemetry.qber_pct * out.telemetry.qber_pct;
                if (trace_)
                    trace_->emit({{"type", "telemetry"},
                                  {"t", rt_.now()},
                                  {"link_id", link_id},
                                  {"skr_bps", out.telemetry.skr_bps},
                                  {"qber_pct", out.telemetry.qber_pct},
                                  {"state", out.telemetry.up ? "UP" : "DOWN"}});
                if (!out.blocks.empty()) {
                    auto ends = link_stores(link_id);
                    if (ends) deliver_blocks(link_id, *ends, out.blocks);
                }
            }
            schedule_tick();
        });
    }

    void schedule_heartbeats() {
        SimTime interval = static_cast<SimTime>(cfg_.defaults.heartbeat_interval_s * 1e6);
        rt_.schedule(interval, [this, interval] {
            for (const auto& [_, c] : components_) {
                if (c == manager_.get() || dynamic_cast<SaeClient*>(c)) continue;
                fabric_->send(fabric_->make(c->id(), manager_->id(), MsgKind::StatusUpdate,
                                            fabric_->fresh_id(), {{"heartbeat", true}}));
            }
            schedule_heartbeats();
        });
    }

    TopologyConfig cfg_;
    WorldOptions opt_;
    TraceSink* trace_;
    SimRuntime rt_;
    std::unique_ptr<SimFabric> fabric_;
    std::unique_ptr<Controller> controller_;
    std::unique_ptr<Manager> manager_;
    std::unique_ptr<Aaa> aaa_;
    std::map<std::string, std::unique_ptr<Ukms>> ukms_;
    std::map<std::string, std::unique_ptr<Akms>> akms_;
    std::map<std::string, std::unique_ptr<Ckms>> ckms_;
    std::map<std::string, std::unique_ptr<SaeClient>> saes_;
    std::map<std::string, std::unique_ptr<QkdLinkSim>> links_;
    std::map<std::string, LinkAggregates> aggregates_;
    std::map<std::string, std::uint64_t> lane_parity_;
    std::map<std::string, Component*> components_;
};

}  // namespace qkdn
