// Trace audits: the policy/flow/one-time-use properties are checked against
// the event log a run leaves behind, not against in-process state.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qkdn/message.hpp"
#include "qkdn/topology.hpp"

namespace qkdn {

struct AuditReport {
    std::string name;
    bool pass{false};
    std::uint64_t violations{0};
    std::uint64_t checked{0};
    std::string detail;
};

struct AuditOptions {
    // Identifiers a user-node-bound message must never contain.
    std::set<std::string> carrier_identifiers;
    // Correlations that completed with DELIVERED outcome (for per-exchange
    // budget accounting); empty set disables the budget audit.
    std::set<std::string> delivered_correlations;
    // Expected wrap-side KMA bits per delivered exchange; 0 disables.
    std::uint64_t expected_wrap_bits_per_exchange{0};
};

inline AuditOptions audit_options_for(const TopologyConfig& cfg) {
    AuditOptions opt;
    for (const auto& n : cfg.nodes) {
        if (n.has_component("ckms")) opt.carrier_identifiers.insert("ckms:" + n.id);
        if (n.type == NodeType::Carrier) opt.carrier_identifiers.insert(n.id);
        if (n.type == NodeType::Datacenter)
            opt.carrier_identifiers.insert("controller:" + n.id);
    }
    for (const auto* l : cfg.carrier_links()) {
        opt.carrier_identifiers.insert(l->id);
        opt.carrier_identifiers.insert("qkd:" + l->a + "/" + l->id);
        opt.carrier_identifiers.insert("qkd:" + l->b + "/" + l->id);
    }
    return opt;
}

inline std::vector<json> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::CONFIG_INVALID, "cannot open " + path);
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lines.push_back(json::parse(line));
    }
    return lines;
}

namespace audits {

// No (root block, offset) range consumed twice per store, and at most one
// wrap-side plus one unwrap-side consumption of the same logical material
// across the mirrored pools.
inline AuditReport one_time_use(const std::vector<json>& lines) {
    AuditReport rep{"one_time_use"};
    std::map<std::string, std::vector<std::pair<std::uint64_t, std::uint64_t>>> per_store;
    std::map<std::string, int> logical;  // (root|offset|bits|direction) -> count
    for (const auto& l : lines) {
        if (l.value("type", "") != "consume") continue;
        auto owner = l.value("owner", "");
        auto direction = l.value("direction", "");
        for (const auto& seg : l.at("segments")) {
            auto root = seg.at("root").get<std::string>();
            std::uint64_t off = seg.at("offset").get<std::uint64_t>();
            std::uint64_t bits = seg.at("bits").get<std::uint64_t>();
            per_store[owner + "|" + root].push_back({off, off + bits});
            logical[root + "|" + std::to_string(off) + "|" + std::to_string(bits) + "|" +
                    direction] += 1;
            ++rep.checked;
        }
    }
    for (auto& [key, spans] : per_store) {
        std::sort(spans.begin(), spans.end());
        for (std::size_t i = 1; i < spans.size(); ++i)
            if (spans[i].first < spans[i - 1].second) ++rep.violations;
    }
    for (const auto& [key, count] : logical)
        if (count > 1) ++rep.violations;
    rep.pass = rep.violations == 0;
    return rep;
}

// refilled - consumed - dropped == unconsumed for every pool snapshot.
inline AuditReport conservation(const std::vector<json>& lines) {
    AuditReport rep{"conservation"};
    for (const auto& l : lines) {
        if (l.value("type", "") != "pool_final") continue;
        ++rep.checked;
        std::uint64_t refilled = l.at("refilled_bits").get<std::uint64_t>();
        std::uint64_t consumed = l.at("consumed_bits").get<std::uint64_t>();
        std::uint64_t dropped = l.at("dropped_bits").get<std::uint64_t>();
        std::uint64_t unconsumed = l.at("unconsumed_bits").get<std::uint64_t>();
        if (refilled - consumed - dropped != unconsumed) ++rep.violations;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

// KSA key bits (hex and base64 forms) appear only in AKMS/UKMS/SAE records,
// never in anything a CKMS or the controller sends or receives.
inline AuditReport ksa_containment(const std::vector<json>& lines) {
    AuditReport rep{"ksa_containment"};
    std::vector<std::pair<std::string, std::string>> secrets;  // (hex, b64)
    for (const auto& l : lines)
        if (l.value("type", "") == "ksa_gen")
            secrets.push_back({l.value("bits_hex", ""), l.value("bits_b64", "")});
    for (const auto& l : lines) {
        if (l.value("type", "") != "msg") continue;
        auto fk = l.value("from_kind", "");
        auto tk = l.value("to_kind", "");
        bool carrier = fk == "ckms" || tk == "ckms" || fk == "controller" || tk == "controller";
        if (!carrier) continue;
        ++rep.checked;
        std::string body = l.at("payload").dump();
        for (const auto& [hex, b64] : secrets) {
            if (!hex.empty() && body.find(hex) != std::string::npos) ++rep.violations;
            if (!b64.empty() && body.find(b64) != std::string::npos) ++rep.violations;
        }
    }
    if (secrets.empty()) {
        rep.pass = false;
        rep.detail = "no ksa_gen records in trace";
        return rep;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

namespace detail {
inline void collect_strings(const json& j, std::vector<std::string>& out) {
    if (j.is_string()) {
        out.push_back(j.get<std::string>());
    } else if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) collect_strings(it.value(), out);
    } else if (j.is_array()) {
        for (const auto& v : j) collect_strings(v, out);
    }
}
}  // namespace detail

// Messages delivered to user-node components carry no carrier identifiers.
inline AuditReport topology_hiding(const std::vector<json>& lines, const AuditOptions& opt) {
    AuditReport rep{"topology_hiding"};
    for (const auto& l : lines) {
        if (l.value("type", "") != "msg") continue;
        auto tk = l.value("to_kind", "");
        if (tk != "ukms" && tk != "sae") continue;
        ++rep.checked;
        std::vector<std::string> strings;
        detail::collect_strings(l.at("payload"), strings);
        strings.push_back(l.value("from", ""));
        for (const auto& s : strings)
            if (opt.carrier_identifiers.count(s)) ++rep.violations;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

// No KEY_DATA ever flows from a UKMS toward an AKMS.
inline AuditReport flow_direction(const std::vector<json>& lines) {
    AuditReport rep{"flow_direction"};
    for (const auto& l : lines) {
        if (l.value("type", "") != "msg") continue;
        if (l.value("from_kind", "") != "ukms") continue;
        ++rep.checked;
        if (l.value("to_kind", "") == "akms" && l.value("asset_class", "") == "KEY_DATA")
            ++rep.violations;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

// Nothing from an AKMS is ever delivered to the controller; attempts show up
// as denials only.
inline AuditReport akms_controller_separation(const std::vector<json>& lines) {
    AuditReport rep{"akms_controller_separation"};
    std::uint64_t denies = 0;
    for (const auto& l : lines) {
        auto type = l.value("type", "");
        bool pair = l.value("from_kind", "") == "akms" && l.value("to_kind", "") == "controller";
        if (!pair) continue;
        if (type == "msg") ++rep.violations;
        if (type == "deny") {
            ++denies;
            ++rep.checked;
        }
    }
    rep.detail = std::to_string(denies) + " attempts denied";
    rep.pass = rep.violations == 0;
    return rep;
}

// Every delivered exchange consumed exactly the expected wrap-side KMA bits.
inline AuditReport otp_budget(const std::vector<json>& lines, const AuditOptions& opt) {
    AuditReport rep{"otp_budget"};
    if (opt.expected_wrap_bits_per_exchange == 0 || opt.delivered_correlations.empty()) {
        rep.pass = true;
        rep.detail = "disabled";
        return rep;
    }
    std::map<std::string, std::uint64_t> per_corr;
    for (const auto& l : lines) {
        if (l.value("type", "") != "consume") continue;
        if (l.value("direction", "") != "wrap") continue;
        auto purpose = l.value("purpose", "");
        if (purpose != "relay_hop" && purpose != "akms_ksa" && purpose != "ukms_leg" &&
            purpose != "gcm_rekey")
            continue;
        per_corr[l.value("correlation", "")] += l.at("total_bits").get<std::uint64_t>();
    }
    std::uint64_t audited_total = 0;
    for (const auto& corr : opt.delivered_correlations) {
        ++rep.checked;
        auto it = per_corr.find(corr);
        std::uint64_t got = it == per_corr.end() ? 0 : it->second;
        audited_total += got;
        if (got != opt.expected_wrap_bits_per_exchange) ++rep.violations;
    }
    rep.detail = "audited total " + std::to_string(audited_total) + " bits, expected " +
                 std::to_string(opt.expected_wrap_bits_per_exchange *
                                opt.delivered_correlations.size());
    rep.pass = rep.violations == 0 &&
               audited_total ==
                   opt.expected_wrap_bits_per_exchange * opt.delivered_correlations.size();
    return rep;
}

// Every delivered message carries a resolved classification.
inline AuditReport policy_coverage(const std::vector<json>& lines) {
    AuditReport rep{"policy_coverage"};
    static const std::set<std::string> classes = {"KEY_DATA", "META_DATA", "CONTROL_MGMT",
                                                  "USER_PROFILE"};
    for (const auto& l : lines) {
        if (l.value("type", "") != "msg") continue;
        ++rep.checked;
        if (!classes.count(l.value("asset_class", ""))) ++rep.violations;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

}  // namespace audits

inline std::vector<AuditReport> run_audits(const std::vector<json>& lines,
                                           const AuditOptions& opt) {
    return {
        audits::one_time_use(lines),
        audits::conservation(lines),
        audits::ksa_containment(lines),
        audits::topology_hiding(lines, opt),
        audits::flow_direction(lines),
        audits::akms_controller_separation(lines),
        audits::otp_budget(lines, opt),
        audits::policy_coverage(lines),
    };
}

}  // namespace qkdn
