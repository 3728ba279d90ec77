// Topology configuration: node/link/SAE/profile declarations, validation
// with path-level diagnostics, and the 16-node reference network.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdn/crypto.hpp"
#include "qkdn/error.hpp"
#include "qkdn/time.hpp"

namespace qkdn {

enum class NodeType { User, Access, Carrier, Datacenter };

inline const char* to_string(NodeType t) {
    switch (t) {
        case NodeType::User: return "USER";
        case NodeType::Access: return "ACCESS";
        case NodeType::Carrier: return "CARRIER";
        case NodeType::Datacenter: return "DATACENTER";
    }
    return "?";
}

inline NodeType node_type_from(const std::string& s) {
    if (s == "USER") return NodeType::User;
    if (s == "ACCESS") return NodeType::Access;
    if (s == "CARRIER") return NodeType::Carrier;
    if (s == "DATACENTER") return NodeType::Datacenter;
    throw Error(Errc::CONFIG_INVALID, "unknown node type " + s);
}

struct NodeCfg {
    std::string id;
    NodeType type{NodeType::Carrier};
    std::vector<std::string> components;

    bool has_component(const std::string& c) const {
        for (const auto& x : components)
            if (x == c) return true;
        return false;
    }
};

struct LinkCfg {
    std::string id;
    std::string a;
    std::string b;
    double skr_kbps{2.1};
    double skr_std_kbps{0.25};
    double qber_pct{2.05};
    double qber_std_pp{0.5};
    bool initially_up{true};
    bool assumed{false};
};

struct SaeCfg {
    std::string id;
    std::string node;
    std::string account;
    std::string credential;
};

struct ProfileCfg {
    std::string account_id;
    std::vector<std::pair<std::string, std::string>> allowed_sae_pairs;
    std::uint64_t max_keys_per_day{1000};
    std::uint64_t max_key_bits{4096};
    bool payment_valid{true};
};

struct Defaults {
    std::uint64_t key_size_bits{256};
    double status_interval_s{30.0};
    double heartbeat_interval_s{30.0};
    double tick_interval_s{30.0};
    double latency_ms{5.0};
    double colocated_latency_ms{1.0};
    std::uint64_t pool_capacity_bits{8'000'000};
    std::uint64_t low_watermark_bits{4096};
    std::string cipher_ukms_akms{"AES256GCM"};
    std::string cipher_carrier{"OTP"};
    std::string cipher_akms_akms{"OTP"};
    std::uint32_t max_hops{32};
    double key_wait_timeout_s{10.0};
    std::uint64_t gcm_rekey_wraps{1u << 20};
    std::uint64_t akms_bootstrap_bits{8'000'000};
    double aaa_timeout_s{1.0};
    double peer_timeout_s{1.0};
    int retry_max{3};
    double retry_base_s{0.2};
    double install_timeout_s{1.0};
    std::uint64_t max_buffer_per_pair{16};
};

struct TopologyConfig {
    std::string name;
    std::uint64_t seed{1};
    Defaults defaults;
    std::vector<NodeCfg> nodes;
    std::vector<LinkCfg> links;
    std::vector<SaeCfg> saes;
    std::vector<ProfileCfg> profiles;

    const NodeCfg* node(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    const LinkCfg* link(const std::string& id) const {
        for (const auto& l : links)
            if (l.id == id) return &l;
        return nullptr;
    }

    const SaeCfg* sae(const std::string& id) const {
        for (const auto& s : saes)
            if (s.id == id) return &s;
        return nullptr;
    }

    // The access node a user node hangs off (its single QKD link peer).
    std::optional<std::string> access_of(const std::string& user_node) const {
        for (const auto& l : links) {
            if (l.a == user_node) return l.b;
            if (l.b == user_node) return l.a;
        }
        return std::nullopt;
    }

    // Links whose both endpoints host a CKMS (the carrier mesh).
    std::vector<const LinkCfg*> carrier_links() const {
        std::vector<const LinkCfg*> out;
        for (const auto& l : links) {
            const NodeCfg* na = node(l.a);
            const NodeCfg* nb = node(l.b);
            if (na && nb && na->has_component("ckms") && nb->has_component("ckms"))
                out.push_back(&l);
        }
        return out;
    }

    json to_json() const;
    static TopologyConfig from_json(const json& j);
    // Throws CONFIG_INVALID listing every problem found.
    void validate() const;
};

inline json TopologyConfig::to_json() const {
    json jnodes = json::array();
    for (const auto& n : nodes)
        jnodes.push_back({{"id", n.id}, {"type", to_string(n.type)}, {"components", n.components}});
    json jlinks = json::array();
    for (const auto& l : links)
        jlinks.push_back({{"id", l.id},
                          {"a", l.a},
                          {"b", l.b},
                          {"skr_kbps", l.skr_kbps},
                          {"skr_std_kbps", l.skr_std_kbps},
                          {"qber_pct", l.qber_pct},
                          {"qber_std_pp", l.qber_std_pp},
                          {"initial_state", l.initially_up ? "UP" : "DOWN"},
                          {"assumed", l.assumed}});
    json jsaes = json::array();
    for (const auto& s : saes)
        jsaes.push_back({{"id", s.id}, {"node", s.node}, {"account", s.account},
                         {"credential", s.credential}});
    json jprofiles = json::array();
    for (const auto& p : profiles) {
        json pairs = json::array();
        for (const auto& [x, y] : p.allowed_sae_pairs) pairs.push_back({x, y});
        jprofiles.push_back({{"account_id", p.account_id},
                             {"allowed_sae_pairs", pairs},
                             {"max_keys_per_day", p.max_keys_per_day},
                             {"max_key_bits", p.max_key_bits},
                             {"payment_valid", p.payment_valid}});
    }
    const Defaults& d = defaults;
    json jd = {{"key_size_bits", d.key_size_bits},
               {"status_interval_s", d.status_interval_s},
               {"heartbeat_interval_s", d.heartbeat_interval_s},
               {"tick_interval_s", d.tick_interval_s},
               {"latency_ms", d.latency_ms},
               {"colocated_latency_ms", d.colocated_latency_ms},
               {"pool_capacity_bits", d.pool_capacity_bits},
               {"low_watermark_bits", d.low_watermark_bits},
               {"cipher_ukms_akms", d.cipher_ukms_akms},
               {"cipher_carrier", d.cipher_carrier},
               {"cipher_akms_akms", d.cipher_akms_akms},
               {"max_hops", d.max_hops},
               {"key_wait_timeout_s", d.key_wait_timeout_s},
               {"gcm_rekey_wraps", d.gcm_rekey_wraps},
               {"akms_bootstrap_bits", d.akms_bootstrap_bits},
               {"aaa_timeout_s", d.aaa_timeout_s},
               {"peer_timeout_s", d.peer_timeout_s},
               {"retry_max", d.retry_max},
               {"retry_base_s", d.retry_base_s},
               {"install_timeout_s", d.install_timeout_s},
               {"max_buffer_per_pair", d.max_buffer_per_pair}};
    return {{"name", name}, {"seed", seed},     {"defaults", jd}, {"nodes", jnodes},
            {"links", jlinks}, {"saes", jsaes}, {"profiles", jprofiles}};
}

inline TopologyConfig TopologyConfig::from_json(const json& j) {
    TopologyConfig cfg;
    try {
        cfg.name = j.at("name").get<std::string>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("defaults")) {
            const json& d = j.at("defaults");
            Defaults& out = cfg.defaults;
            auto opt = [&d](const char* key, auto& field) {
                if (d.contains(key)) field = d.at(key).get<std::decay_t<decltype(field)>>();
            };
            opt("key_size_bits", out.key_size_bits);
            opt("status_interval_s", out.status_interval_s);
            opt("heartbeat_interval_s", out.heartbeat_interval_s);
            opt("tick_interval_s", out.tick_interval_s);
            opt("latency_ms", out.latency_ms);
            opt("colocated_latency_ms", out.colocated_latency_ms);
            opt("pool_capacity_bits", out.pool_capacity_bits);
            opt("low_watermark_bits", out.low_watermark_bits);
            opt("cipher_ukms_akms", out.cipher_ukms_akms);
            opt("cipher_carrier", out.cipher_carrier);
            opt("cipher_akms_akms", out.cipher_akms_akms);
            opt("max_hops", out.max_hops);
            opt("key_wait_timeout_s", out.key_wait_timeout_s);
            opt("gcm_rekey_wraps", out.gcm_rekey_wraps);
            opt("akms_bootstrap_bits", out.akms_bootstrap_bits);
            opt("aaa_timeout_s", out.aaa_timeout_s);
            opt("peer_timeout_s", out.peer_timeout_s);
            opt("retry_max", out.retry_max);
            opt("retry_base_s", out.retry_base_s);
            opt("install_timeout_s", out.install_timeout_s);
            opt("max_buffer_per_pair", out.max_buffer_per_pair);
        }
        for (const auto& n : j.at("nodes")) {
            NodeCfg node;
            node.id = n.at("id").get<std::string>();
            node.type = node_type_from(n.at("type").get<std::string>());
            node.components = n.at("components").get<std::vector<std::string>>();
            cfg.nodes.push_back(std::move(node));
        }
        for (const auto& l : j.at("links")) {
            LinkCfg link;
            link.id = l.at("id").get<std::string>();
            link.a = l.at("a").get<std::string>();
            link.b = l.at("b").get<std::string>();
            link.skr_kbps = l.at("skr_kbps").get<double>();
            link.skr_std_kbps = l.value("skr_std_kbps", 0.0);
            link.qber_pct = l.at("qber_pct").get<double>();
            link.qber_std_pp = l.value("qber_std_pp", 0.0);
            link.initially_up = l.value("initial_state", std::string("UP")) == "UP";
            link.assumed = l.value("assumed", false);
            cfg.links.push_back(std::move(link));
        }
        for (const auto& s : j.at("saes")) {
            cfg.saes.push_back(SaeCfg{s.at("id").get<std::string>(), s.at("node").get<std::string>(),
                                      s.at("account").get<std::string>(),
                                      s.at("credential").get<std::string>()});
        }
        for (const auto& p : j.at("profiles")) {
            ProfileCfg prof;
            prof.account_id = p.at("account_id").get<std::string>();
            for (const auto& pr : p.at("allowed_sae_pairs"))
                prof.allowed_sae_pairs.push_back({pr.at(0).get<std::string>(),
                                                  pr.at(1).get<std::string>()});
            prof.max_keys_per_day = p.at("max_keys_per_day").get<std::uint64_t>();
            prof.max_key_bits = p.value("max_key_bits", std::uint64_t{4096});
            prof.payment_valid = p.value("payment_valid", true);
            cfg.profiles.push_back(std::move(prof));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::CONFIG_INVALID, e.what());
    }
    return cfg;
}

inline void TopologyConfig::validate() const {
    std::vector<std::string> issues;
    auto complain = [&issues](const std::string& where, const std::string& what) {
        issues.push_back(where + ": " + what);
    };

    std::set<std::string> node_ids;
    int datacenters = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        std::string where = "nodes[" + std::to_string(i) + "] (" + n.id + ")";
        if (n.id.empty()) complain(where, "empty node id");
        if (!node_ids.insert(n.id).second) complain(where, "duplicate node id");
        switch (n.type) {
            case NodeType::User:
                if (!n.has_component("ukms")) complain(where, "USER node must host a ukms");
                break;
            case NodeType::Access:
                if (!n.has_component("akms") || !n.has_component("ckms"))
                    complain(where, "ACCESS node must host akms and ckms");
                break;
            case NodeType::Carrier:
                if (!n.has_component("ckms")) complain(where, "CARRIER node must host a ckms");
                break;
            case NodeType::Datacenter:
                ++datacenters;
                for (const char* c : {"controller", "manager", "aaa"})
                    if (!n.has_component(c))
                        complain(where, std::string("DATACENTER node must host ") + c);
                break;
        }
    }
    if (datacenters != 1) complain("nodes", "expected exactly one DATACENTER node");

    std::set<std::string> link_ids;
    std::map<std::string, std::vector<std::string>> adjacency;
    for (std::size_t i = 0; i < links.size(); ++i) {
        const auto& l = links[i];
        std::string where = "links[" + std::to_string(i) + "] (" + l.id + ")";
        if (!link_ids.insert(l.id).second) complain(where, "duplicate link id");
        if (l.a == l.b) complain(where, "self-loop");
        for (const std::string& end : {l.a, l.b})
            if (!node_ids.count(end)) complain(where, "unknown node " + end);
        if (l.skr_kbps < 0) complain(where, "negative skr");
        if (l.qber_pct < 0 || l.qber_pct > 50) complain(where, "qber outside [0,50]");
        adjacency[l.a].push_back(l.b);
        adjacency[l.b].push_back(l.a);
    }

    for (const auto& n : nodes) {
        if (n.type != NodeType::User) continue;
        int access_links = 0;
        for (const auto& peer : adjacency[n.id]) {
            const NodeCfg* p = node(peer);
            if (p && p->type == NodeType::Access) ++access_links;
            else complain("nodes (" + n.id + ")", "user node linked to non-access node " + peer);
        }
        if (access_links != 1)
            complain("nodes (" + n.id + ")", "user node needs exactly one link to an access node");
    }

    // Connectivity with all links UP, datacenter excluded (control plane is
    // logical, not a QKD link).
    std::set<std::string> quantum_nodes;
    for (const auto& n : nodes)
        if (n.type != NodeType::Datacenter) quantum_nodes.insert(n.id);
    if (!quantum_nodes.empty()) {
        std::set<std::string> seen;
        std::vector<std::string> frontier{*quantum_nodes.begin()};
        seen.insert(frontier[0]);
        while (!frontier.empty()) {
            std::string cur = frontier.back();
            frontier.pop_back();
            for (const auto& nxt : adjacency[cur])
                if (quantum_nodes.count(nxt) && seen.insert(nxt).second) frontier.push_back(nxt);
        }
        if (seen.size() != quantum_nodes.size())
            complain("links", "graph not connected with all links UP");
    }

    std::set<std::string> sae_ids;
    for (std::size_t i = 0; i < saes.size(); ++i) {
        const auto& s = saes[i];
        std::string where = "saes[" + std::to_string(i) + "] (" + s.id + ")";
        if (!sae_ids.insert(s.id).second) complain(where, "duplicate sae id");
        const NodeCfg* n = node(s.node);
        if (!n)
            complain(where, "unknown node " + s.node);
        else if (n->type != NodeType::User)
            complain(where, "sae must live on a USER node");
        if (s.credential.empty()) complain(where, "empty credential");
    }

    std::set<std::string> accounts;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& p = profiles[i];
        std::string where = "profiles[" + std::to_string(i) + "] (" + p.account_id + ")";
        if (!accounts.insert(p.account_id).second) complain(where, "duplicate account");
        for (const auto& [x, y] : p.allowed_sae_pairs) {
            if (!sae_ids.count(x)) complain(where, "pair references unknown sae " + x);
            if (!sae_ids.count(y)) complain(where, "pair references unknown sae " + y);
        }
    }

    if (defaults.key_size_bits % 8 != 0 || defaults.key_size_bits < 64 ||
        defaults.key_size_bits > 4096)
        complain("defaults.key_size_bits", "must be a multiple of 8 in [64, 4096]");

    if (!issues.empty()) {
        std::string all;
        for (const auto& s : issues) all += "\n  - " + s;
        throw Error(Errc::CONFIG_INVALID, all);
    }
}

// The in-field demonstrator shape: 15 nodes in a chain plus a virtual bypass
// node 16 bridging nodes 7 and 8, user nodes at both ends, access nodes one
// hop in, and a datacenter hosting controller/manager/AAA. Measured per-link
// values where available; the remaining links carry the median values and
// are flagged assumed.
inline TopologyConfig reference16_config() {
    TopologyConfig cfg;
    cfg.name = "reference-16";
    cfg.seed = 1;

    auto add_node = [&cfg](std::string id, NodeType type, std::vector<std::string> comps) {
        cfg.nodes.push_back(NodeCfg{std::move(id), type, std::move(comps)});
    };
    add_node("node-1", NodeType::User, {"ukms"});
    add_node("node-2", NodeType::Access, {"akms", "ckms"});
    for (int i = 3; i <= 13; ++i) add_node("node-" + std::to_string(i), NodeType::Carrier, {"ckms"});
    add_node("node-14", NodeType::Access, {"akms", "ckms"});
    add_node("node-15", NodeType::User, {"ukms"});
    add_node("node-16", NodeType::Carrier, {"ckms"});
    add_node("dc", NodeType::Datacenter, {"controller", "manager", "aaa"});

    constexpr double kMedianSkr = 2.1, kMedianSkrStd = 0.25;
    constexpr double kMedianQber = 2.05, kMedianQberStd = 0.5;
    auto add_link = [&cfg](std::string id, std::string a, std::string b, double skr, double skr_std,
                           double qber, double qber_std, bool assumed, bool up = true) {
        cfg.links.push_back(LinkCfg{std::move(id), std::move(a), std::move(b), skr, skr_std, qber,
                                    qber_std, up, assumed});
    };
    auto chain = [&](int a, int b) { return std::pair(("node-" + std::to_string(a)),
                                                      ("node-" + std::to_string(b))); };
    auto add_assumed = [&](int a, int b) {
        auto [na, nb] = chain(a, b);
        add_link(std::to_string(a) + "-" + std::to_string(b), na, nb, kMedianSkr, kMedianSkrStd,
                 kMedianQber, kMedianQberStd, true);
    };
    auto add_measured = [&](int a, int b, double skr, double skr_std, double qber,
                            double qber_std) {
        auto [na, nb] = chain(a, b);
        add_link(std::to_string(a) + "-" + std::to_string(b), na, nb, skr, skr_std, qber, qber_std,
                 false);
    };
    add_assumed(1, 2);
    add_assumed(2, 3);
    add_assumed(3, 4);
    add_measured(4, 5, 2.0, 0.1, 2.4, 0.5);
    add_assumed(5, 6);
    add_assumed(6, 7);
    add_measured(7, 8, 22.7, 3.7, 5.4, 0.3);
    add_measured(8, 9, 1.2, 0.1, 1.7, 0.5);
    add_measured(9, 10, 0.3, 0.1, 1.6, 0.5);
    add_measured(10, 11, 21.3, 1.9, 4.5, 0.3);
    add_measured(11, 12, 2.2, 0.1, 1.6, 0.5);
    add_measured(12, 13, 11.8, 2.6, 5.6, 0.4);
    add_measured(13, 14, 2.0, 0.4, 1.3, 0.6);
    add_assumed(14, 15);
    // Virtual bypass node: disabled until fault scenarios enable it.
    add_link("7-16", "node-7", "node-16", kMedianSkr, kMedianSkrStd, kMedianQber, kMedianQberStd,
             true, false);
    add_link("16-8", "node-16", "node-8", kMedianSkr, kMedianSkrStd, kMedianQber, kMedianQberStd,
             true, false);

    cfg.saes = {
        {"sae-a", "node-1", "acct-1", "cred-a"},  {"sae-b", "node-15", "acct-1", "cred-b"},
        {"sae-c", "node-1", "acct-2", "cred-c"},  {"sae-d", "node-15", "acct-2", "cred-d"},
        {"sae-e", "node-1", "acct-3", "cred-e"},  {"sae-f", "node-15", "acct-3", "cred-f"},
        {"sae-x", "node-1", "acct-ghost", "cred-x"},
    };
    cfg.profiles = {
        {"acct-1", {{"sae-a", "sae-b"}}, 1000, 4096, true},
        {"acct-2", {{"sae-c", "sae-d"}}, 1000, 4096, true},
        {"acct-3", {{"sae-e", "sae-f"}}, 3, 4096, true},
    };
    return cfg;
}

}  // namespace qkdn
