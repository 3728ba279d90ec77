#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qkdn/qkd_link.hpp"

using namespace qkdn;

namespace {

QkdLinkConfig link_cfg(const std::string& id, double skr_bps, double qber = 2.0) {
    QkdLinkConfig cfg;
    cfg.link_id = id;
    cfg.end_a = {EntityKind::QkdModule, "node-4/" + id};
    cfg.end_b = {EntityKind::QkdModule, "node-5/" + id};
    cfg.skr_bps = skr_bps;
    cfg.qber_pct = qber;
    return cfg;
}

}  // namespace

TEST_CASE("2.0 kb/s for 30 s yields 234 blocks with a 96-bit carry") {
    QkdLinkSim link(link_cfg("4-5", 2000.0), 1);
    auto out = link.tick(30.0, 0);
    CHECK(out.blocks.size() == 234);  // 60000 / 256, remainder 96 carried
    std::uint64_t bits = 0;
    for (const auto& b : out.blocks) bits += b.size_bits();
    CHECK(bits == 59904);
    // Carry accumulates: the next 30 s window still has the 96 bits.
    auto out2 = link.tick(30.0, 30_s);
    CHECK(out2.blocks.size() == 234);
    auto out3 = link.tick(30.0, 60_s);
    CHECK(out3.blocks.size() == 235);  // 192+60000 = 60192 -> 235 blocks
}

TEST_CASE("a DOWN link emits nothing and resumes the same stream when UP") {
    QkdLinkSim link(link_cfg("7-8", 22700.0), 2);
    auto first = link.tick(1.0, 0);
    CHECK_FALSE(first.blocks.empty());

    CHECK(link.set_state(false));
    CHECK_FALSE(link.set_state(false));  // no change
    auto down = link.tick(100.0, 1_s);
    CHECK(down.blocks.empty());
    CHECK_FALSE(down.telemetry.up);

    CHECK(link.set_state(true));
    auto resumed = link.tick(1.0, 2_s);
    CHECK_FALSE(resumed.blocks.empty());

    // Same seed stream: a twin that never went down produces the identical
    // block sequence, ids included.
    QkdLinkSim twin(link_cfg("7-8", 22700.0), 2);
    auto t1 = twin.tick(1.0, 0);
    auto t2 = twin.tick(1.0, 2_s);
    REQUIRE(t1.blocks.size() == first.blocks.size());
    CHECK(t1.blocks[0].key_id == first.blocks[0].key_id);
    CHECK(t1.blocks[0].bits == first.blocks[0].bits);
    REQUIRE(t2.blocks.size() == resumed.blocks.size());
    CHECK(t2.blocks[0].key_id == resumed.blocks[0].key_id);
    CHECK(t2.blocks[0].bits == resumed.blocks[0].bits);
}

TEST_CASE("rate fidelity: emitted bits per second within 2% over 1000 ticks") {
    for (double skr : {300.0, 2000.0, 22700.0}) {
        QkdLinkSim link(link_cfg("x", skr), 3);
        std::uint64_t bits = 0;
        for (int i = 0; i < 1000; ++i) {
            auto out = link.tick(1.0, i * 1_s);
            for (const auto& b : out.blocks) bits += b.size_bits();
        }
        double rate = static_cast<double>(bits) / 1000.0;
        CHECK(std::abs(rate - skr) / skr < 0.02);
    }
}

TEST_CASE("block cadence at 0.3 kb/s is one block per ~0.85 s") {
    QkdLinkSim link(link_cfg("9-10", 300.0), 4);
    std::size_t blocks = 0;
    for (int i = 0; i < 1000; ++i) blocks += link.tick(1.0, i * 1_s).blocks.size();
    // 256 bits / 300 bps = 0.853 s per block.
    double seconds_per_block = 1000.0 / static_cast<double>(blocks);
    CHECK(seconds_per_block > 0.8);
    CHECK(seconds_per_block < 0.9);
}

TEST_CASE("telemetry converges to configured mean and std (link 7-8 values)") {
    QkdLinkConfig cfg = link_cfg("7-8", 22700.0, 5.4);
    cfg.skr_jitter_rel = 3.7 / 22.7;
    cfg.qber_jitter_pp = 0.3;
    QkdLinkSim link(cfg, 5);

    // One simulated week at 30 s sampling = 20160 samples.
    const int n = 20160;
    double skr_sum = 0, skr_sq = 0, qber_sum = 0, qber_sq = 0;
    for (int i = 0; i < n; ++i) {
        auto t = link.sample_telemetry();
        skr_sum += t.skr_bps;
        skr_sq += t.skr_bps * t.skr_bps;
        qber_sum += t.qber_pct;
        qber_sq += t.qber_pct * t.qber_pct;
    }
    double skr_mean = skr_sum / n;
    double skr_std = std::sqrt(skr_sq / n - skr_mean * skr_mean);
    double qber_mean = qber_sum / n;
    double qber_std = std::sqrt(qber_sq / n - qber_mean * qber_mean);

    CHECK(std::abs(skr_mean - 22700.0) / 22700.0 < 0.05);
    CHECK(std::abs(skr_std - 3700.0) / 3700.0 < 0.20);
    CHECK(std::abs(qber_mean - 5.4) / 5.4 < 0.05);
    CHECK(std::abs(qber_std - 0.3) / 0.3 < 0.20);
}

TEST_CASE("telemetry samples are clamped to physical ranges") {
    QkdLinkConfig cfg = link_cfg("x", 100.0, 1.0);
    cfg.skr_jitter_rel = 5.0;   // huge jitter forces negative draws
    cfg.qber_jitter_pp = 40.0;
    QkdLinkSim link(cfg, 6);
    for (int i = 0; i < 2000; ++i) {
        auto t = link.sample_telemetry();
        CHECK(t.skr_bps >= 0.0);
        CHECK(t.qber_pct >= 0.0);
        CHECK(t.qber_pct <= 50.0);
    }
}

TEST_CASE("prefill emits bulk blocks from the same deterministic stream") {
    QkdLinkSim link(link_cfg("1-2", 2100.0), 7);
    auto blocks = link.prefill(100000, 0);
    std::uint64_t bits = 0;
    for (const auto& b : blocks) {
        bits += b.size_bits();
        CHECK(b.origin.link_id == "1-2");
    }
    CHECK(bits <= 100000);
    CHECK(bits >= 100000 - 16384);
    CHECK(bits % 256 == 0);
}
