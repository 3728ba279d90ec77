// Carrier-node KMS: a KMA key exchange platform relaying QBN keys hop by hop
// along controller-installed routes, re-encrypting per link. Reports pool
// state to the controller and triggers reactive route computation.
#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "qkdn/crypto.hpp"
#include "qkdn/fabric.hpp"
#include "qkdn/key_store.hpp"

namespace qkdn {

struct CkmsConfig {
    EntityId controller;
    EntityId manager;
    std::optional<EntityId> local_akms;  // present on access nodes
    CipherMode carrier_mode{CipherMode::Otp};
    std::uint64_t gcm_rekey_wraps{1u << 20};
    std::uint64_t pool_capacity_bits{8'000'000};
    std::uint64_t low_watermark_bits{4096};
    std::uint32_t max_hops{32};
    double key_wait_timeout_s{10.0};
    double stall_retry_s{0.5};
    double status_interval_s{30.0};
};

class Ckms : public Component {
public:
    Ckms(EntityId id, CkmsConfig cfg, TraceSink* trace)
        : Component(id), cfg_(std::move(cfg)), store_(id, cfg_.pool_capacity_bits,
                                                      cfg_.low_watermark_bits, trace) {}

    KeyStore& store() { return store_; }

    void add_adjacent(const EntityId& peer, const std::string& link_id) {
        adjacent_links_[peer] = link_id;
        out_.emplace(peer, SecureLink(cfg_.carrier_mode,
                                      std::make_unique<PoolKmaSource>(store_, peer,
                                                                      lane_for(id(), peer)),
                                      cfg_.gcm_rekey_wraps));
        in_.emplace(peer, SecureLink(cfg_.carrier_mode,
                                     std::make_unique<PoolKmaSource>(store_, peer,
                                                                     lane_for(peer, id())),
                                     cfg_.gcm_rekey_wraps));
    }

    void on_start() override {
        push_status();
        schedule_status();
    }

    void handle(const ProtocolMessage& msg) override {
        switch (msg.kind) {
            case MsgKind::QbnRelay: on_relay(msg); break;
            case MsgKind::RouteUpdate: on_route_update(msg); break;
            case MsgKind::RouteAck: on_route_ack(msg); break;
            case MsgKind::ErrorMsg: on_error(msg); break;
            default: break;
        }
    }

    std::uint64_t routing_version() const { return table_version_; }

    std::optional<EntityId> next_hop(const EntityId& destination) const {
        auto it = table_.find(destination.str());
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

private:
    struct PendingFrame {
        Uuid correlation;
        Uuid key_id;
        Bytes plain;
        std::uint32_t hop_count{0};
        EntityId upstream;
        SimTime queued_at{0};
        EntityId destination;
    };

    void alarm(const std::string& kind, const std::string& severity, const std::string& detail,
               Uuid correlation = {}) {
        fabric().send(fabric().make(id(), cfg_.manager, MsgKind::Alarm, correlation,
                                    {{"severity", severity},
                                     {"kind", kind},
                                     {"source", id().str()},
                                     {"detail", detail}}));
    }

    void on_relay(const ProtocolMessage& msg) {
        PendingFrame f;
        f.correlation = msg.correlation_id;
        f.key_id = Uuid::parse(msg.payload.at("key_id").get<std::string>());
        f.destination = EntityId::parse(msg.payload.at("destination").get<std::string>());
        f.upstream = msg.from;
        f.queued_at = fabric().now();
        f.hop_count = msg.payload.value("hop_count", 0u);

        bool intra = cfg_.local_akms && msg.from == *cfg_.local_akms;
        if (intra) {
            // Entry leg from the co-located AKMS: plaintext QBN.
            f.plain = from_hex(msg.payload.at(kFrameField).get<std::string>());
        } else {
            auto in_link = in_.find(msg.from);
            if (in_link == in_.end()) {
                alarm("AUTH_FAIL", "WARN", "relay frame from non-adjacent " + msg.from.str(),
                      msg.correlation_id);
                return;
            }
            try {
                WrappedKey w =
                    WrappedKey::decode(from_hex(msg.payload.at(kFrameField).get<std::string>()));
                f.plain = in_link->second.unwrap(
                    w, ConsumeContext{fabric().now(), msg.correlation_id, "relay_hop", "unwrap"});
            } catch (const Error& e) {
                alarm("AUTH_FAIL", "CRITICAL", e.what(), msg.correlation_id);
                return;  // drop: authentication failures do not propagate frames
            }
            f.hop_count += 1;
            if (f.hop_count > cfg_.max_hops) {
                alarm("KEY_STARVATION", "WARN", "hop limit exceeded (HOP_LIMIT)", msg.correlation_id);
                nack(f, to_string(Errc::HOP_LIMIT));
                return;
            }
        }
        upstream_of_[f.correlation.str()] = msg.from;

        if (f.destination == id()) {
            deliver_local(f);
            return;
        }
        route_or_queue(std::move(f));
    }

    void deliver_local(const PendingFrame& f) {
        if (!cfg_.local_akms) {
            alarm("AUTH_FAIL", "WARN", "QBN destination is a pure carrier node", f.correlation);
            nack(f, to_string(Errc::NO_ROUTE));
            return;
        }
        fabric().send(fabric().make(id(), *cfg_.local_akms, MsgKind::QbnRelay, f.correlation,
                                    {{"destination", f.destination.str()},
                                     {"key_id", f.key_id.str()},
                                     {kFrameField, to_hex(f.plain)},
                                     {"hop_count", f.hop_count}}));
    }

    void route_or_queue(PendingFrame f) {
        auto next = next_hop(f.destination);
        if (!next) {
            request_route(f.destination);
            waiting_route_[f.destination.str()].push_back(std::move(f));
            return;
        }
        forward(std::move(f), *next);
    }

    void request_route(const EntityId& destination) {
        if (route_outstanding_.count(destination.str())) return;
        route_outstanding_.insert(destination.str());
        fabric().send(fabric().make(id(), cfg_.controller, MsgKind::RouteRequest, fabric().fresh_id(),
                                    {{"src", id().str()}, {"dst", destination.str()}}));
    }

    void forward(PendingFrame f, const EntityId& next) {
        auto out_link = out_.find(next);
        if (out_link == out_.end()) {
            alarm("AUTH_FAIL", "WARN", "route points at non-adjacent " + next.str(), f.correlation);
            nack(f, to_string(Errc::NO_ROUTE));
            return;
        }
        std::uint64_t need = f.plain.size() * 8 + kOtpMacKeyBits;  // upper bound for both modes
        if (out_link->second.source().available_bits() < need) {
            stall(std::move(f), next);
            return;
        }
        try {
            WrappedKey w = out_link->second.wrap(
                f.plain, ConsumeContext{fabric().now(), f.correlation, "relay_hop", "wrap"});
            fabric().send(fabric().make(id(), next, MsgKind::QbnRelay, f.correlation,
                                        {{"destination", f.destination.str()},
                                         {"key_id", f.key_id.str()},
                                         {kFrameField, to_hex(w.encode())},
                                         {"hop_count", f.hop_count}}));
        } catch (const Error& e) {
            if (e.code() == Errc::INSUFFICIENT_KEY) {
                stall(std::move(f), next);
            } else {
                alarm("AUTH_FAIL", "CRITICAL", e.what(), f.correlation);
                nack(f, to_string(Errc::INTERNAL));
            }
        }
    }

    // SKR-limited links make transient starvation normal: hold the frame for
    // pool refill before giving up.
    void stall(PendingFrame f, const EntityId& next) {
        SimTime deadline = f.queued_at + static_cast<SimTime>(cfg_.key_wait_timeout_s * 1e6);
        if (fabric().now() >= deadline) {
            alarm("KEY_STARVATION", "WARN",
                  "pool toward " + next.str() + " empty past key_wait_timeout", f.correlation);
            nack(f, to_string(Errc::KEY_STARVATION));
            return;
        }
        fabric().schedule(static_cast<SimTime>(cfg_.stall_retry_s * 1e6),
                          [this, f = std::move(f), next]() mutable { forward(std::move(f), next); });
    }

    void nack(const PendingFrame& f, const std::string& reason) {
        auto up = upstream_of_.find(f.correlation.str());
        EntityId target = up == upstream_of_.end() ? f.upstream : up->second;
        fabric().send(fabric().make(id(), target, MsgKind::ErrorMsg, f.correlation,
                                    {{"reason", reason}}));
        upstream_of_.erase(f.correlation.str());
    }

    // Relay failures travel hop-by-hop back toward the responder AKMS.
    void on_error(const ProtocolMessage& msg) {
        auto up = upstream_of_.find(msg.correlation_id.str());
        if (up == upstream_of_.end()) return;
        fabric().send(fabric().make(id(), up->second, MsgKind::ErrorMsg, msg.correlation_id,
                                    msg.payload));
        upstream_of_.erase(up);
    }

    void on_route_update(const ProtocolMessage& msg) {
        if (msg.from != cfg_.controller) return;
        EntityId destination = EntityId::parse(msg.payload.at("destination").get<std::string>());
        const json& next = msg.payload.at("next_hop");
        if (next.is_null()) {
            table_.erase(destination.str());
            table_version_ += 1;
            fabric().send(fabric().make(id(), cfg_.controller, MsgKind::RouteAck,
                                        msg.correlation_id,
                                        {{"ok", true},
                                         {"destination", destination.str()},
                                         {"version", table_version_}}));
            return;
        }
        EntityId next_id = EntityId::parse(next.get<std::string>());
        bool self_marker = next_id == id() && destination == id();
        if (!self_marker && !adjacent_links_.count(next_id)) {
            fabric().send(fabric().make(id(), cfg_.controller, MsgKind::RouteAck,
                                        msg.correlation_id,
                                        {{"ok", false},
                                         {"destination", destination.str()},
                                         {"detail", "next hop not adjacent"}}));
            return;
        }
        table_[destination.str()] = next_id;
        table_version_ += 1;
        fabric().send(fabric().make(id(), cfg_.controller, MsgKind::RouteAck, msg.correlation_id,
                                    {{"ok", true},
                                     {"destination", destination.str()},
                                     {"version", table_version_}}));
    }

    // Path generation acknowledgement from the controller: release frames
    // held for that destination.
    void on_route_ack(const ProtocolMessage& msg) {
        if (msg.from != cfg_.controller) return;
        std::string dst = msg.payload.value("dst", "");
        route_outstanding_.erase(dst);
        auto it = waiting_route_.find(dst);
        if (it == waiting_route_.end()) return;
        std::deque<PendingFrame> frames = std::move(it->second);
        waiting_route_.erase(it);
        bool ok = msg.payload.value("ok", false);
        for (auto& f : frames) {
            if (!ok) {
                nack(f, to_string(Errc::NO_PATH));
            } else {
                route_or_queue(std::move(f));
            }
        }
    }

    void schedule_status() {
        fabric().schedule(static_cast<SimTime>(cfg_.status_interval_s * 1e6), [this] {
            push_status();
            schedule_status();
        });
    }

    void push_status() {
        json pools = json::array();
        for (const auto& [peer, link_id] : adjacent_links_) {
            auto c = store_.counters(peer);
            double rate = estimate_rate(peer, c.refilled_bits);
            pools.push_back({{"peer", peer.str()},
                             {"link_id", link_id},
                             {"available_bits", c.unconsumed_bits},
                             {"rate_bps", rate}});
        }
        fabric().send(fabric().make(id(), cfg_.controller, MsgKind::StatusUpdate, fabric().fresh_id(),
                                    {{"pools", pools},
                                     {"interval_s", cfg_.status_interval_s}}));
    }

    // EWMA of the refill rate observed between status pushes.
    double estimate_rate(const EntityId& peer, std::uint64_t refilled_now) {
        auto& prev = rate_state_[peer];
        double rate = 0.0;
        if (prev.seen) {
            double delta = static_cast<double>(refilled_now - prev.refilled_bits);
            rate = delta / cfg_.status_interval_s;
        }
        constexpr double half_life_intervals = 5.0;
        double alpha = 1.0 - std::pow(0.5, 1.0 / half_life_intervals);
        prev.ewma = prev.seen ? (1.0 - alpha) * prev.ewma + alpha * rate : rate;
        prev.refilled_bits = refilled_now;
        prev.seen = true;
        return prev.ewma;
    }

    CkmsConfig cfg_;
    KeyStore store_;
    std::map<EntityId, std::string> adjacent_links_;
    std::map<EntityId, SecureLink> out_;
    std::map<EntityId, SecureLink> in_;
    std::map<std::string, EntityId> table_;
    std::uint64_t table_version_{0};
    std::map<std::string, std::deque<PendingFrame>> waiting_route_;
    std::set<std::string> route_outstanding_;
    std::map<std::string, EntityId> upstream_of_;
    struct RateState {
        bool seen{false};
        std::uint64_t refilled_bits{0};
        double ewma{0.0};
    };
    std::map<EntityId, RateState> rate_state_;
};

}  // namespace qkdn
