// Simulated QKD module pair: both endpoints of a link produce bit-identical
// key blocks in identical order at the configured secret-key rate, plus
// jittered SKR/QBER telemetry. QBER is telemetry only; it never corrupts
// key material (post-error-correction abstraction).
#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "qkdn/ids.hpp"
#include "qkdn/key_block.hpp"
#include "qkdn/rng.hpp"
#include "qkdn/time.hpp"

namespace qkdn {

constexpr std::uint64_t kLinkBlockBits = 256;

struct QkdLinkConfig {
    std::string link_id;
    EntityId end_a;  // QKD module identities
    EntityId end_b;
    double skr_bps{1000.0};
    double skr_jitter_rel{0.0};  // relative std-dev of SKR samples
    double qber_pct{1.0};
    double qber_jitter_pp{0.0};  // absolute std-dev in percentage points
    bool initially_up{true};
    bool assumed{false};  // values assumed, not measured
};

struct LinkTelemetry {
    double skr_bps{0.0};
    double qber_pct{0.0};
    bool up{false};
};

class QkdLinkSim {
public:
    QkdLinkSim(QkdLinkConfig cfg, std::uint64_t master_seed)
        : cfg_(std::move(cfg)),
          up_(cfg_.initially_up),
          material_(derive_seed(master_seed, cfg_.link_id, 0x6b)),
          telemetry_rng_(derive_seed(master_seed, cfg_.link_id, 0x74)) {}

    const QkdLinkConfig& config() const { return cfg_; }
    bool up() const { return up_; }

    // Returns true when the state actually changed.
    bool set_state(bool up) {
        if (up_ == up) return false;
        up_ = up;
        return true;
    }

    struct TickOutput {
        std::vector<KeyBlock> blocks;  // identical copies land at both endpoints
        LinkTelemetry telemetry;
    };

    TickOutput tick(double dt_seconds, SimTime now) {
        TickOutput out;
        out.telemetry = sample_telemetry();
        if (!up_) return out;
        carry_bits_ += cfg_.skr_bps * dt_seconds;
        while (carry_bits_ >= static_cast<double>(kLinkBlockBits)) {
            out.blocks.push_back(emit_block(kLinkBlockBits, now));
            carry_bits_ -= static_cast<double>(kLinkBlockBits);
        }
        return out;
    }

    // Telemetry stream alone; independent of key-material emission.
    LinkTelemetry sample_telemetry() {
        LinkTelemetry t;
        t.up = up_;
        if (!up_) return t;
        std::normal_distribution<double> skr(cfg_.skr_bps, cfg_.skr_jitter_rel * cfg_.skr_bps);
        std::normal_distribution<double> qber(cfg_.qber_pct, cfg_.qber_jitter_pp);
        t.skr_bps = std::max(0.0, skr(telemetry_rng_));
        t.qber_pct = std::clamp(qber(telemetry_rng_), 0.0, 50.0);
        return t;
    }

    // Bulk emission for pre-populated key storages; same stream as tick().
    std::vector<KeyBlock> prefill(std::uint64_t n_bits, SimTime now,
                                  std::uint64_t block_bits = 16384) {
        std::vector<KeyBlock> out;
        std::uint64_t emitted = 0;
        while (emitted + block_bits <= n_bits) {
            out.push_back(emit_block(block_bits, now));
            emitted += block_bits;
        }
        std::uint64_t rest = (n_bits - emitted) / kLinkBlockBits * kLinkBlockBits;
        if (rest > 0) out.push_back(emit_block(rest, now));
        return out;
    }

private:
    static std::uint64_t derive_seed(std::uint64_t master, const std::string& id, std::uint8_t tag) {
        std::uint64_t h = master ^ (0x9e3779b97f4a7c15ull * (tag + 1));
        for (char c : id) h = (h ^ static_cast<std::uint8_t>(c)) * 1099511628211ull;
        return h;
    }

    KeyBlock emit_block(std::uint64_t bits, SimTime now) {
        Bytes material = material_.generate(128 + bits);
        Uuid id = Uuid::from_bytes(material.data());
        Bytes key_bits(material.begin() + 16, material.end());
        return new_key_block(std::move(key_bits), KeyOrigin::qkd_link(cfg_.link_id), KeyRole::Kma,
                             id, now);
    }

    QkdLinkConfig cfg_;
    bool up_;
    double carry_bits_{0.0};
    HybridRng material_;
    std::mt19937_64 telemetry_rng_;
};

}  // namespace qkdn
