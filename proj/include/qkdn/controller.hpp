// Centralized QKDN controller: ingests link-state telemetry from CKMS
// devices, derives link weights, computes weight-optimal relay paths and
// installs routing tables node by node.
#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>

#include "qkdn/fabric.hpp"
#include "qkdn/routing.hpp"

namespace qkdn {

struct WeightParams {
    double w_fixed{1.0};
    double alpha{1e5};  // bits
    double beta{1e4};   // bps
    double eps{1.0};
};

struct ControllerConfig {
    EntityId manager;
    WeightParams weights;
    double status_interval_s{30.0};
    double install_timeout_s{1.0};
    double ewma_halflife_intervals{5.0};
};

struct PathComputation {
    EntityId src;
    EntityId dst;
    std::vector<EntityId> path;
    double total_weight{0.0};
    SimTime computed_at{0};
};

class Controller : public Component {
public:
    struct CarrierLink {
        std::string link_id;
        EntityId a;
        EntityId b;
    };

    Controller(EntityId id, ControllerConfig cfg) : Component(std::move(id)), cfg_(std::move(cfg)) {}

    void register_carrier(const std::vector<EntityId>& ckms_ids,
                          const std::vector<CarrierLink>& links) {
        for (const auto& c : ckms_ids) registered_.insert(c);
        for (const auto& l : links) links_[l.link_id] = LinkEntry{l, {}, false};
    }

    void handle(const ProtocolMessage& msg) override {
        switch (msg.kind) {
            case MsgKind::StatusUpdate: ingest_status(msg); break;
            case MsgKind::RouteRequest: on_route_request(msg); break;
            case MsgKind::RouteAck: on_node_ack(msg); break;
            case MsgKind::Alarm: on_alarm(msg); break;
            default: break;
        }
    }

    // Link weight under current state: fixed cost plus scarcity terms for
    // available key bits and refill rate.
    double weight_of(const std::string& link_id) const {
        auto it = links_.find(link_id);
        if (it == links_.end()) return -1.0;
        auto eff = effective(it->second);
        if (!eff) return -1.0;
        const auto& [avail, rate] = *eff;
        return cfg_.weights.w_fixed + cfg_.weights.alpha / std::max(avail, 1.0) +
               cfg_.weights.beta / std::max(rate, cfg_.weights.eps);
    }

    std::optional<PathComputation> compute_path(const EntityId& src, const EntityId& dst) {
        std::vector<WeightedEdge> edges;
        for (const auto& [lid, entry] : links_) {
            double w = weight_of(lid);
            if (w > 0.0) edges.push_back({entry.link.a, entry.link.b, w, lid});
        }
        auto r = min_weight_simple_path(edges, src, dst);
        if (!r) return std::nullopt;
        PathComputation pc{src, dst, r->path, r->total_weight, fabric().now()};
        recent_paths_.push_back(pc);
        if (recent_paths_.size() > 32) recent_paths_.pop_front();
        return pc;
    }

    json snapshot() const {
        json links = json::array();
        for (const auto& [lid, entry] : links_) {
            auto eff = effective(entry);
            links.push_back({{"link_id", lid},
                             {"a", entry.link.a.str()},
                             {"b", entry.link.b.str()},
                             {"admin_down", entry.admin_down},
                             {"available_bits", eff ? (*eff).first : 0.0},
                             {"rate_bps", eff ? (*eff).second : 0.0},
                             {"weight", weight_of(lid)},
                             {"usable", eff.has_value()}});
        }
        json paths = json::array();
        for (const auto& p : recent_paths_) {
            json nodes = json::array();
            for (const auto& n : p.path) nodes.push_back(n.str());
            paths.push_back({{"src", p.src.str()},
                             {"dst", p.dst.str()},
                             {"path", nodes},
                             {"total_weight", p.total_weight},
                             {"computed_at", p.computed_at}});
        }
        return {{"links", links}, {"paths", paths}};
    }

    std::uint64_t dropped_updates() const { return dropped_updates_; }

private:
    struct Report {
        double avail_ewma{0.0};
        double rate_ewma{0.0};
        SimTime last_update{-1};
        bool seeded{false};
    };

    struct LinkEntry {
        CarrierLink link;
        std::map<EntityId, Report> reports;
        bool admin_down{false};
    };

    struct InstallSession {
        Uuid correlation;
        EntityId initiator;
        EntityId src;
        EntityId dst;
        std::vector<EntityId> path;
        std::size_t next_index{0};
        std::uint64_t epoch{0};  // guards timeout callbacks
        std::vector<std::pair<EntityId, json>> undo;  // rollback entries, in install order
    };

    void ingest_status(const ProtocolMessage& msg) {
        if (!registered_.count(msg.from)) {
            ++dropped_updates_;
            fabric().send(fabric().make(id(), cfg_.manager, MsgKind::Alarm, msg.correlation_id,
                                        {{"severity", "WARN"},
                                         {"kind", "UNKNOWN_SENDER"},
                                         {"source", msg.from.str()},
                                         {"detail", "status update from unregistered device"}}));
            return;
        }
        if (!msg.payload.contains("pools")) return;  // heartbeat-only update
        double a = ewma_alpha();
        for (const auto& pool : msg.payload.at("pools")) {
            auto lid = pool.at("link_id").get<std::string>();
            auto it = links_.find(lid);
            if (it == links_.end()) continue;
            Report& r = it->second.reports[msg.from];
            double avail = pool.at("available_bits").get<double>();
            double rate = pool.at("rate_bps").get<double>();
            if (r.seeded) {
                r.avail_ewma = (1 - a) * r.avail_ewma + a * avail;
                r.rate_ewma = (1 - a) * r.rate_ewma + a * rate;
            } else {
                r.avail_ewma = avail;
                r.rate_ewma = rate;
                r.seeded = true;
            }
            r.last_update = fabric().now();
        }
    }

    void on_alarm(const ProtocolMessage& msg) {
        if (msg.payload.value("kind", "") != "LINK_DOWN") return;
        auto lid = msg.payload.value("link_id", "");
        auto it = links_.find(lid);
        if (it == links_.end()) return;
        bool down = msg.payload.value("state", "DOWN") == "DOWN";
        it->second.admin_down = down;
        if (down) withdraw_routes_over(it->second.link);
    }

    // Fault management: drop every installed entry whose hop crosses the
    // failed link, so the next relay frame triggers a fresh route request.
    void withdraw_routes_over(const CarrierLink& link) {
        std::vector<std::pair<EntityId, EntityId>> doomed;
        for (const auto& [key, entry] : installed_) {
            if (entry.is_null()) continue;
            const auto& [node, dst] = key;
            EntityId next = EntityId::parse(entry.at("next_hop").get<std::string>());
            bool over = (node == link.a && next == link.b) || (node == link.b && next == link.a);
            if (over) doomed.push_back(key);
        }
        for (const auto& key : doomed) {
            installed_.erase(key);
            fabric().send(fabric().make(id(), key.first, MsgKind::RouteUpdate, fabric().fresh_id(),
                                        {{"destination", key.second.str()}, {"next_hop", nullptr}}));
        }
    }

    void on_route_request(const ProtocolMessage& msg) {
        EntityId src = EntityId::parse(msg.payload.at("src").get<std::string>());
        EntityId dst = EntityId::parse(msg.payload.at("dst").get<std::string>());
        auto pc = compute_path(src, dst);
        if (!pc) {
            fabric().send(fabric().make(id(), msg.from, MsgKind::RouteAck, msg.correlation_id,
                                        {{"ok", false},
                                         {"reason", to_string(Errc::NO_PATH)},
                                         {"src", src.str()},
                                         {"dst", dst.str()}}));
            return;
        }
        InstallSession s;
        s.correlation = msg.correlation_id;
        s.initiator = msg.from;
        s.src = src;
        s.dst = dst;
        s.path = pc->path;
        pending_installs_.push_back(std::move(s));
        try_start_installs();
    }

    // Installs for node-disjoint paths may interleave; overlapping ones queue.
    void try_start_installs() {
        for (auto it = pending_installs_.begin(); it != pending_installs_.end();) {
            bool overlaps = false;
            for (const auto& [corr, active] : active_installs_) {
                for (const auto& n : it->path) {
                    for (const auto& m : active.path)
                        if (n == m) { overlaps = true; break; }
                    if (overlaps) break;
                }
                if (overlaps) break;
            }
            if (overlaps) {
                ++it;
            } else {
                Uuid corr = it->correlation;
                active_installs_[corr] = std::move(*it);
                it = pending_installs_.erase(it);
                install_next(corr);
            }
        }
    }

    void install_next(Uuid corr) {
        auto it = active_installs_.find(corr);
        if (it == active_installs_.end()) return;
        InstallSession& s = it->second;
        if (s.next_index >= s.path.size()) {
            finish_install(corr, true, {});
            return;
        }
        const EntityId& node = s.path[s.next_index];
        // Destination's own entry points at itself; others at their successor.
        const EntityId& next_hop =
            (s.next_index + 1 < s.path.size()) ? s.path[s.next_index + 1] : s.dst;
        json prev = installed_.count({node, s.dst}) ? installed_[{node, s.dst}] : json(nullptr);
        s.undo.push_back({node, prev});
        json entry = {{"destination", s.dst.str()}, {"next_hop", next_hop.str()}};
        installed_[{node, s.dst}] = entry;
        fabric().send(fabric().make(id(), node, MsgKind::RouteUpdate, corr, entry));
        std::uint64_t epoch = ++s.epoch;
        fabric().schedule(static_cast<SimTime>(cfg_.install_timeout_s * 1e6), [this, corr, epoch] {
            auto it2 = active_installs_.find(corr);
            if (it2 == active_installs_.end() || it2->second.epoch != epoch) return;
            rollback(it2->second);
            finish_install(corr, false, "INSTALL_TIMEOUT");
        });
    }

    void on_node_ack(const ProtocolMessage& msg) {
        auto it = active_installs_.find(msg.correlation_id);
        if (it == active_installs_.end()) return;
        InstallSession& s = it->second;
        if (s.next_index >= s.path.size() || msg.from != s.path[s.next_index]) return;
        if (!msg.payload.value("ok", false)) {
            rollback(s);
            finish_install(msg.correlation_id, false, "NODE_REJECTED");
            return;
        }
        s.epoch += 1;  // cancel the outstanding timeout
        s.next_index += 1;
        install_next(msg.correlation_id);
    }

    void rollback(InstallSession& s) {
        // Restore previous entries in reverse install order; best effort.
        for (auto rit = s.undo.rbegin(); rit != s.undo.rend(); ++rit) {
            const auto& [node, prev] = *rit;
            json entry = prev.is_null()
                             ? json{{"destination", s.dst.str()}, {"next_hop", nullptr}}
                             : prev;
            installed_[{node, s.dst}] = prev;
            fabric().send(fabric().make(id(), node, MsgKind::RouteUpdate, s.correlation, entry));
        }
    }

    void finish_install(Uuid corr, bool ok, const std::string& reason) {
        auto it = active_installs_.find(corr);
        if (it == active_installs_.end()) return;
        InstallSession s = std::move(it->second);
        active_installs_.erase(it);
        json reply;
        if (ok) {
            json nodes = json::array();
            for (const auto& n : s.path) nodes.push_back(n.str());
            reply = {{"ok", true}, {"src", s.src.str()}, {"dst", s.dst.str()}, {"path", nodes}};
        } else {
            reply = {{"ok", false},
                     {"reason", to_string(Errc::NO_PATH)},
                     {"detail", reason},
                     {"src", s.src.str()},
                     {"dst", s.dst.str()}};
        }
        fabric().send(fabric().make(id(), s.initiator, MsgKind::RouteAck, corr, reply));
        try_start_installs();
    }

    std::optional<std::pair<double, double>> effective(const LinkEntry& entry) const {
        if (entry.admin_down) return std::nullopt;
        SimTime cutoff = fabric().now() - static_cast<SimTime>(3 * cfg_.status_interval_s * 1e6);
        double avail = -1, rate = -1;
        for (const auto& [_, r] : entry.reports) {
            if (!r.seeded || r.last_update < cutoff) continue;
            avail = avail < 0 ? r.avail_ewma : std::min(avail, r.avail_ewma);
            rate = rate < 0 ? r.rate_ewma : std::min(rate, r.rate_ewma);
        }
        if (avail < 0) return std::nullopt;  // stale or never reported: treated DOWN
        return std::make_pair(avail, rate);
    }

    double ewma_alpha() const { return 1.0 - std::pow(0.5, 1.0 / cfg_.ewma_halflife_intervals); }

    ControllerConfig cfg_;
    std::set<EntityId> registered_;
    std::map<std::string, LinkEntry> links_;
    std::deque<PathComputation> recent_paths_;
    std::map<std::pair<EntityId, EntityId>, json> installed_;
    std::vector<InstallSession> pending_installs_;
    std::map<Uuid, InstallSession> active_installs_;
    std::uint64_t dropped_updates_{0};
};

}  // namespace qkdn
