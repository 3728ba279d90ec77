// KeyStore: per-peer FIFO pools of unconsumed KeyBlocks with capacity,
// strictly-once consumption and offset-level audit events.
//
// Pools are mirrored at both ends of a QKD link (same blocks, same ids).
// Each (peer, lane) sub-pool is consumed in one wrap direction only, so the
// two mirrors stay aligned even under bidirectional traffic. Callers that
// never mix directions can ignore lanes (default lane "").
#pragma once

#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "qkdn/error.hpp"
#include "qkdn/ids.hpp"
#include "qkdn/key_block.hpp"
#include "qkdn/sink.hpp"

namespace qkdn {

// Lane name for key flow from -> to; identical at both mirrors.
inline std::string lane_for(const EntityId& from, const EntityId& to) {
    return from.str() < to.str() ? "fwd" : "rev";
}

struct PoolCounters {
    std::uint64_t refilled_bits{0};  // offered, including dropped
    std::uint64_t consumed_bits{0};
    std::uint64_t dropped_bits{0};
    std::uint64_t drop_count{0};
    std::uint64_t unconsumed_bits{0};
};

// Who/why of a consumption, for the trace audits.
struct ConsumeContext {
    SimTime time{0};
    Uuid correlation;
    std::string purpose;            // relay_hop | akms_ksa | ukms_leg | gcm_rekey | ...
    std::string direction{"wrap"};  // wrap | unwrap
};

class KeyStore {
public:
    KeyStore(EntityId owner, std::uint64_t capacity_bits, std::uint64_t low_watermark_bits,
             TraceSink* trace = nullptr)
        : owner_(std::move(owner)),
          capacity_bits_(capacity_bits),
          low_watermark_bits_(low_watermark_bits),
          trace_(trace) {}

    const EntityId& owner() const { return owner_; }
    std::uint64_t capacity_bits() const { return capacity_bits_; }

    // Drop-newest on overflow; never blocks the producer.
    bool refill(const EntityId& peer, KeyBlock block, const std::string& lane = {}) {
        std::lock_guard lk(mu_);
        if (block.consumed) throw Error(Errc::INTERNAL, "refill of consumed block");
        auto& pool = pools_[{peer, lane}];
        pool.counters.refilled_bits += block.size_bits();
        if (pool.counters.unconsumed_bits + block.size_bits() > capacity_bits_) {
            pool.counters.dropped_bits += block.size_bits();
            pool.counters.drop_count += 1;
            check_conservation(pool);
            return false;
        }
        pool.counters.unconsumed_bits += block.size_bits();
        pool.blocks.push_back(std::move(block));
        check_conservation(pool);
        return true;
    }

    // Exactly n_bits in FIFO order, splitting the tail block when needed.
    // The consumed piece keeps the block's key_id; the remainder gets a
    // derived id (root id + split ordinal).
    std::vector<KeyBlock> consume(const EntityId& peer, std::uint64_t n_bits,
                                  const ConsumeContext& ctx = {}, const std::string& lane = {}) {
        if (n_bits == 0 || n_bits % 8 != 0)
            throw Error(Errc::INTERNAL, "consume wants a positive multiple of 8 bits");
        std::lock_guard lk(mu_);
        auto it = pools_.find({peer, lane});
        if (it == pools_.end() || it->second.counters.unconsumed_bits < n_bits)
            throw Error(Errc::INSUFFICIENT_KEY,
                        owner_.str() + " pool for " + peer.str() + "/" + lane + " has " +
                            std::to_string(it == pools_.end() ? 0 : it->second.counters.unconsumed_bits) +
                            " bits, need " + std::to_string(n_bits));
        auto& pool = it->second;
        std::vector<KeyBlock> out;
        std::uint64_t remaining = n_bits;
        while (remaining > 0) {
            KeyBlock& front = pool.blocks.front();
            if (front.size_bits() <= remaining) {
                remaining -= front.size_bits();
                front.consumed = true;
                out.push_back(std::move(front));
                pool.blocks.pop_front();
            } else {
                // Split: front holds more than what is left to take.
                std::uint64_t take_bits = remaining;
                std::size_t take_bytes = take_bits / 8;
                KeyBlock piece = front;
                piece.bits.assign(front.bits.begin(), front.bits.begin() + take_bytes);
                piece.consumed = true;
                KeyBlock& rest = front;
                rest.bits.erase(rest.bits.begin(), rest.bits.begin() + take_bytes);
                rest.split_ordinal += 1;
                rest.key_id = Uuid::derive(rest.root_id, rest.split_ordinal);
                rest.root_offset_bits += take_bits;
                out.push_back(std::move(piece));
                remaining = 0;
            }
        }
        pool.counters.consumed_bits += n_bits;
        pool.counters.unconsumed_bits -= n_bits;
        check_conservation(pool);
        if (trace_) {
            json segs = json::array();
            for (const auto& b : out)
                segs.push_back({{"root", b.root_id.str()},
                                {"offset", b.root_offset_bits},
                                {"bits", b.size_bits()}});
            trace_->emit({{"type", "consume"},
                          {"t", ctx.time},
                          {"owner", owner_.str()},
                          {"peer", peer.str()},
                          {"lane", lane},
                          {"correlation", ctx.correlation.str()},
                          {"purpose", ctx.purpose},
                          {"direction", ctx.direction},
                          {"total_bits", n_bits},
                          {"segments", segs}});
        }
        return out;
    }

    std::uint64_t available_bits(const EntityId& peer, const std::string& lane) const {
        std::lock_guard lk(mu_);
        auto it = pools_.find({peer, lane});
        return it == pools_.end() ? 0 : it->second.counters.unconsumed_bits;
    }

    // All lanes toward this peer.
    std::uint64_t available_bits(const EntityId& peer) const {
        std::lock_guard lk(mu_);
        std::uint64_t total = 0;
        for (const auto& [key, pool] : pools_)
            if (key.first == peer) total += pool.counters.unconsumed_bits;
        return total;
    }

    bool below_watermark(const EntityId& peer) const {
        return available_bits(peer) < low_watermark_bits_;
    }

    PoolCounters counters(const EntityId& peer) const {
        std::lock_guard lk(mu_);
        PoolCounters sum;
        for (const auto& [key, pool] : pools_) {
            if (key.first != peer) continue;
            sum.refilled_bits += pool.counters.refilled_bits;
            sum.consumed_bits += pool.counters.consumed_bits;
            sum.dropped_bits += pool.counters.dropped_bits;
            sum.drop_count += pool.counters.drop_count;
            sum.unconsumed_bits += pool.counters.unconsumed_bits;
        }
        return sum;
    }

    std::vector<EntityId> peers() const {
        std::lock_guard lk(mu_);
        std::vector<EntityId> out;
        for (const auto& [key, _] : pools_)
            if (out.empty() || out.back() != key.first) out.push_back(key.first);
        return out;
    }

    std::uint64_t total_drop_count() const {
        std::lock_guard lk(mu_);
        std::uint64_t n = 0;
        for (const auto& [_, pool] : pools_) n += pool.counters.drop_count;
        return n;
    }

    void emit_final_snapshot(SimTime t) const {
        if (!trace_) return;
        std::lock_guard lk(mu_);
        for (const auto& [key, pool] : pools_) {
            trace_->emit({{"type", "pool_final"},
                          {"t", t},
                          {"owner", owner_.str()},
                          {"peer", key.first.str()},
                          {"lane", key.second},
                          {"refilled_bits", pool.counters.refilled_bits},
                          {"consumed_bits", pool.counters.consumed_bits},
                          {"dropped_bits", pool.counters.dropped_bits},
                          {"drop_count", pool.counters.drop_count},
                          {"unconsumed_bits", pool.counters.unconsumed_bits}});
        }
    }

private:
    struct Pool {
        std::deque<KeyBlock> blocks;
        PoolCounters counters;
    };

    void check_conservation(const Pool& pool) const {
        const auto& c = pool.counters;
        if (c.refilled_bits - c.consumed_bits - c.dropped_bits != c.unconsumed_bits)
            throw Error(Errc::INTERNAL, "pool conservation violated in " + owner_.str());
    }

    EntityId owner_;
    std::uint64_t capacity_bits_;
    std::uint64_t low_watermark_bits_;
    TraceSink* trace_;
    mutable std::mutex mu_;
    std::map<std::pair<EntityId, std::string>, Pool> pools_;
};

}  // namespace qkdn
