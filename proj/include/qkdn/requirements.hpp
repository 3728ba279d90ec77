// Requirements traceability: every carrier-grade requirement id resolves to
// concrete test evidence or a documented exclusion. The acceptance suite
// fails on any unmapped id.
#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdn/error.hpp"

namespace qkdn {

struct RequirementEntry {
    std::string id;
    std::string name;
    bool tested{false};  // false: documented exclusion
    std::vector<std::string> evidence;
    std::string note;
};

inline const std::vector<RequirementEntry>& requirements_matrix() {
    static const std::vector<RequirementEntry> matrix = {
        {"F_KDE", "Key Delivery for Encryption", true,
         {"acceptance:end_to_end_agreement", "test_protocol:baseline exchange delivers identical keys"},
         "symmetric keys delivered to both SAEs"},
        {"F_EEN", "Efficient Encryption", true,
         {"test_crypto:GCM session consumes 256 bits once per epoch",
          "acceptance:throughput_budget"},
         "GCM amortizes KMA cost; 180 Gbit/s budget reproduced"},
        {"A_NWN", "Nation-wide QKDN", true,
         {"acceptance:end_to_end_agreement", "test_protocol:OTP end-to-end budget"},
         "non-adjacent users served over a 12-hop trusted-node chain"},
        {"A_CSR", "Compliant to Standards & Recommendations", true,
         {"test_policy:classification is total", "test_crypto:wire frame layout"},
         "layered decomposition with pinned interfaces per layer"},
        {"C_INT", "Integration", false,
         {},
         "in-field integration into provider infrastructure is out of desk scope; the socket "
         "backend and 014-shaped API evidence the integration surfaces"},
        {"C_RBA", "Role-based Access", true,
         {"test_protocol:dec_keys honors ownership", "test_policy:user profile data is confined"},
         "operator/user separation enforced at credential and policy level"},
        {"C_CCM", "Centralized Controlling & Management", true,
         {"test_routing:oracle equivalence", "acceptance:fault_reroute"},
         "central controller computes and installs relay paths"},
        {"C_FCA", "FCAPS", true,
         {"test_aaa:*", "acceptance:aaa_strictness"},
         "AAA validation, accounting, alarms and heartbeat monitoring"},
        {"C_MME", "Modular Market Equipment", true,
         {"test_crypto:wire frame layout", "test_http_api:*"},
         "pinned wire formats allow multi-vendor interoperability"},
        {"S_UIN", "User Independent Network Security", true,
         {"acceptance:topology_hiding_flow", "trace_check:flow_direction"},
         "no user-originated key material enters the network"},
        {"S_TRK", "True Random Key", true,
         {"test_rng:statistical battery", "test_rng:seeded determinism"},
         "hybrid generator with statistical battery"},
        {"S_NOP", "Node Protection", false,
         {},
         "physical protection of trusted nodes is a hardware/operations property; the "
         "trusted-node assumption is documented, not simulated"},
        {"S_CRY", "State-of-the-Art Cryptography", true,
         {"test_crypto:roundtrip identity", "test_crypto:tampering"},
         "OTP and AES-256-GCM behind one interface; per-channel mode selection"},
        {"S_COK", "Confidentiality of the Key", true,
         {"acceptance:ksa_containment", "test_protocol:dec_keys honors ownership"},
         "KSA bits confined to AKMS/UKMS/SAE; fetch restricted to the bound SAE"},
        {"S_MUA", "Mutual Authentication", true,
         {"test_crypto:tampering", "test_http_api:authentication"},
         "authenticated frames and credentialed API access on every key-forwarding channel"},
    };
    return matrix;
}

// Resolves all ids; throws UNMAPPED_REQUIREMENT when an id lacks both
// evidence and an exclusion note.
inline nlohmann::json requirements_trace() {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : requirements_matrix()) {
        if (r.tested && r.evidence.empty())
            throw Error(Errc::UNMAPPED_REQUIREMENT, r.id + " has no evidence");
        if (!r.tested && r.note.empty())
            throw Error(Errc::UNMAPPED_REQUIREMENT, r.id + " excluded without a note");
        out.push_back({{"id", r.id},
                       {"name", r.name},
                       {"status", r.tested ? "TESTED" : "EXCLUDED"},
                       {"evidence", r.evidence},
                       {"note", r.note}});
    }
    static const std::set<std::string> expected = {
        "F_KDE", "F_EEN", "A_NWN", "A_CSR", "C_INT", "C_RBA", "C_CCM", "C_FCA",
        "C_MME", "S_UIN", "S_TRK", "S_NOP", "S_CRY", "S_COK", "S_MUA"};
    std::set<std::string> seen;
    for (const auto& r : requirements_matrix()) seen.insert(r.id);
    for (const auto& id : expected)
        if (!seen.count(id)) throw Error(Errc::UNMAPPED_REQUIREMENT, id);
    return out;
}

}  // namespace qkdn
