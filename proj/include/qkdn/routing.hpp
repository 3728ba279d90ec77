// Minimum-weight simple path with a deterministic tie-break: among
// equal-weight paths the lexicographically smallest node-id sequence wins.
// Weight sums are accumulated left-to-right from the source.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qkdn/ids.hpp"

namespace qkdn {

struct WeightedEdge {
    EntityId a;
    EntityId b;
    double weight{1.0};
    std::string link_id;
};

struct PathResult {
    std::vector<EntityId> path;
    double total_weight{0.0};
};

namespace detail {

inline bool path_less(const std::vector<EntityId>& x, const std::vector<EntityId>& y) {
    return std::lexicographical_compare(
        x.begin(), x.end(), y.begin(), y.end(),
        [](const EntityId& p, const EntityId& q) { return p.str() < q.str(); });
}

}  // namespace detail

// Dijkstra over positive weights carrying (distance, full path) so the
// tie-break is exact. Node counts here are small; clarity over asymptotics.
inline std::optional<PathResult> min_weight_simple_path(const std::vector<WeightedEdge>& edges,
                                                        const EntityId& src, const EntityId& dst) {
    std::map<EntityId, std::vector<std::pair<EntityId, double>>> adj;
    for (const auto& e : edges) {
        if (e.weight <= 0.0) continue;
        adj[e.a].push_back({e.b, e.weight});
        adj[e.b].push_back({e.a, e.weight});
    }
    if (src == dst) return PathResult{{src}, 0.0};
    if (!adj.count(src) || !adj.count(dst)) return std::nullopt;

    struct Best {
        double dist;
        std::vector<EntityId> path;
        bool done{false};
    };
    std::map<EntityId, Best> best;
    best[src] = Best{0.0, {src}, false};

    while (true) {
        // Pick the unfinished node with the smallest (dist, path).
        const EntityId* cur = nullptr;
        for (auto& [node, b] : best) {
            if (b.done) continue;
            if (!cur) {
                cur = &node;
                continue;
            }
            Best& c = best[*cur];
            if (b.dist < c.dist || (b.dist == c.dist && detail::path_less(b.path, c.path)))
                cur = &node;
        }
        if (!cur) break;
        Best& cb = best[*cur];
        cb.done = true;
        if (*cur == dst) break;
        for (const auto& [next, w] : adj[*cur]) {
            double cand = cb.dist + w;
            std::vector<EntityId> cand_path = cb.path;
            cand_path.push_back(next);
            auto it = best.find(next);
            if (it == best.end()) {
                best[next] = Best{cand, std::move(cand_path), false};
            } else if (!it->second.done &&
                       (cand < it->second.dist ||
                        (cand == it->second.dist && detail::path_less(cand_path, it->second.path)))) {
                it->second.dist = cand;
                it->second.path = std::move(cand_path);
            }
        }
    }

    auto it = best.find(dst);
    if (it == best.end() || !it->second.done) return std::nullopt;
    return PathResult{it->second.path, it->second.dist};
}

}  // namespace qkdn
