// Hybrid random generator: a physical-entropy stand-in feeding SHA-256
// post-processing. If the source fails, output continues from the
// post-processor alone and health degrades instead of the call failing.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "qkdn/bytes.hpp"
#include "qkdn/error.hpp"
#include "qkdn/hash.hpp"

namespace qkdn {

enum class RngHealth { Ok, Degraded };

struct RngReport {
    RngHealth health{RngHealth::Ok};
    std::uint64_t reseed_count{0};
    std::uint64_t bits_emitted{0};
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** — stand-in for the physical noise source in simulation mode.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    std::uint64_t next() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    void fill(std::uint8_t* out, std::size_t len) {
        std::size_t i = 0;
        while (i < len) {
            std::uint64_t v = next();
            for (int b = 0; b < 8 && i < len; ++b, ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * b));
        }
    }

private:
    std::uint64_t s_[4]{};
};

}  // namespace detail

class HybridRng {
public:
    using EntropyHook = std::function<bool(std::uint8_t*, std::size_t)>;

    explicit HybridRng(std::uint64_t seed) : physical_(seed) {
        Bytes init;
        init.reserve(24);
        const char* tag = "qkdn-drbg-v1";
        init.insert(init.end(), tag, tag + 12);
        put_be64(init, seed);
        state_ = sha256(init);
    }

    // Live-mode substitution point for an OS entropy device. The hook returns
    // false to signal source failure.
    void set_entropy_hook(EntropyHook hook) { hook_ = std::move(hook); }

    Bytes generate(std::size_t n_bits) {
        if (n_bits == 0 || n_bits % 8 != 0) throw Error(Errc::EMPTY_MATERIAL, "n_bits must be a positive multiple of 8");
        reseed_from_source();
        Bytes out(n_bits / 8);
        std::size_t off = 0;
        std::uint64_t block = 0;
        while (off < out.size()) {
            Bytes buf(state_.begin(), state_.end());
            put_be64(buf, block++);
            buf.push_back(0x01);
            auto d = sha256(buf);
            std::size_t take = std::min<std::size_t>(32, out.size() - off);
            std::copy(d.begin(), d.begin() + take, out.begin() + off);
            off += take;
        }
        advance_state();
        bits_emitted_ += n_bits;
        return out;
    }

    void fail_source() {
        source_failed_ = true;
        health_ = RngHealth::Degraded;
    }

    bool source_failed() const { return source_failed_; }

    RngReport health_report() const { return RngReport{health_, reseed_count_, bits_emitted_}; }

private:
    void reseed_from_source() {
        if (source_failed_) return;
        std::uint8_t fresh[32];
        bool ok = true;
        if (hook_)
            ok = hook_(fresh, sizeof fresh);
        else
            physical_.fill(fresh, sizeof fresh);
        if (!ok) {
            fail_source();
            return;
        }
        Bytes buf(state_.begin(), state_.end());
        buf.insert(buf.end(), fresh, fresh + sizeof fresh);
        put_be64(buf, reseed_count_);
        state_ = sha256(buf);
        ++reseed_count_;
    }

    void advance_state() {
        Bytes buf(state_.begin(), state_.end());
        buf.push_back(0x02);
        state_ = sha256(buf);
    }

    detail::Xoshiro256 physical_;
    EntropyHook hook_;
    Digest32 state_{};
    bool source_failed_{false};
    RngHealth health_{RngHealth::Ok};
    std::uint64_t reseed_count_{0};
    std::uint64_t bits_emitted_{0};
};

// Desk-scale statistical battery: monobit frequency and runs test.
// Return values are p-values; pass means p >= alpha.

inline double monobit_p_value(const Bytes& data) {
    long long s = 0;
    for (auto byte : data)
        for (int b = 0; b < 8; ++b) s += (byte >> b & 1) ? 1 : -1;
    double n = static_cast<double>(data.size()) * 8.0;
    return std::erfc(std::abs(static_cast<double>(s)) / std::sqrt(2.0 * n));
}

inline double runs_p_value(const Bytes& data) {
    std::size_t n = data.size() * 8;
    std::size_t ones = 0;
    for (auto byte : data)
        for (int b = 0; b < 8; ++b) ones += (byte >> b) & 1;
    double pi = static_cast<double>(ones) / static_cast<double>(n);
    if (std::abs(pi - 0.5) >= 2.0 / std::sqrt(static_cast<double>(n))) return 0.0;
    std::size_t runs = 1;
    int prev = data[0] & 1;
    for (std::size_t i = 1; i < n; ++i) {
        int bit = (data[i / 8] >> (i % 8)) & 1;
        if (bit != prev) ++runs;
        prev = bit;
    }
    double nn = static_cast<double>(n);
    double num = std::abs(static_cast<double>(runs) - 2.0 * nn * pi * (1.0 - pi));
    double den = 2.0 * std::sqrt(2.0 * nn) * pi * (1.0 - pi);
    return std::erfc(num / den);
}

}  // namespace qkdn
