// Shared fixtures: a small 5-node topology (user, access, carrier, access,
// user, plus the datacenter) exercising the full protocol with a 2-hop
// carrier chain.
#pragma once

#include "qkdn/topology.hpp"

namespace qkdn_test {

inline qkdn::TopologyConfig mini_config() {
    using namespace qkdn;
    TopologyConfig cfg;
    cfg.name = "mini-5";
    cfg.seed = 11;
    cfg.defaults.pool_capacity_bits = 1 << 20;
    cfg.defaults.akms_bootstrap_bits = 1 << 19;
    cfg.nodes = {
        {"node-1", NodeType::User, {"ukms"}},
        {"node-2", NodeType::Access, {"akms", "ckms"}},
        {"node-3", NodeType::Carrier, {"ckms"}},
        {"node-4", NodeType::Access, {"akms", "ckms"}},
        {"node-5", NodeType::User, {"ukms"}},
        {"dc", NodeType::Datacenter, {"controller", "manager", "aaa"}},
    };
    cfg.links = {
        {"1-2", "node-1", "node-2", 2.0, 0.1, 2.0, 0.4, true, false},
        {"2-3", "node-2", "node-3", 2.0, 0.1, 2.0, 0.4, true, false},
        {"3-4", "node-3", "node-4", 2.0, 0.1, 2.0, 0.4, true, false},
        {"4-5", "node-4", "node-5", 2.0, 0.1, 2.0, 0.4, true, false},
    };
    cfg.saes = {
        {"alice", "node-1", "acct-a", "cred-alice"},
        {"bob", "node-5", "acct-a", "cred-bob"},
        {"quinn", "node-1", "acct-q", "cred-quinn"},
        {"quill", "node-5", "acct-q", "cred-quill"},
        {"pat", "node-1", "acct-p", "cred-pat"},
        {"pam", "node-5", "acct-p", "cred-pam"},
        {"gus", "node-1", "acct-ghost", "cred-gus"},
    };
    cfg.profiles = {
        {"acct-a", {{"alice", "bob"}}, 1000, 4096, true},
        {"acct-q", {{"quinn", "quill"}}, 2, 4096, true},
        {"acct-p", {{"pat", "pam"}}, 1000, 4096, false},
    };
    return cfg;
}

}  // namespace qkdn_test
