// AAA device: authentication/authorization/accounting plus the SAE->UKMS->
// AKMS directory. The Manager carries the FCAPS subset: device registry,
// heartbeat freshness and the alarm log.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qkdn/fabric.hpp"

namespace qkdn {

struct UserProfile {
    std::string account_id;
    std::set<std::pair<std::string, std::string>> allowed_sae_pairs;  // normalized unordered
    std::uint64_t max_keys_per_day{1000};
    std::uint64_t max_key_bits{4096};
    bool payment_valid{true};
};

struct TranslationEntry {
    EntityId ukms;
    EntityId akms;
};

struct AccountingRecord {
    std::string account_id;
    Uuid correlation;
    std::uint64_t keys_delivered{0};
    std::uint64_t bits_delivered{0};
    SimTime timestamp{0};
    std::string outcome;  // DELIVERED | REJECTED(<reason>) | FAILED(<reason>)
};

class Aaa : public Component {
public:
    Aaa(EntityId id, bool permissive, TraceSink* trace)
        : Component(std::move(id)), permissive_(permissive), trace_(trace) {}

    void add_profile(UserProfile profile) { profiles_[profile.account_id] = std::move(profile); }

    void add_translation(const std::string& sae_name, TranslationEntry entry) {
        directory_[sae_name] = std::move(entry);
    }

    void handle(const ProtocolMessage& msg) override {
        if (msg.kind != MsgKind::Validate) return;
        auto phase = msg.payload.value("phase", "authorize");
        if (phase == "authorize")
            on_authorize(msg);
        else if (phase == "report")
            on_report(msg);
    }

    std::optional<TranslationEntry> resolve(const std::string& sae_name) const {
        auto it = directory_.find(sae_name);
        if (it == directory_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<AccountingRecord>& records() const { return records_; }

    json usage(const std::string& account) const {
        std::uint64_t keys = 0, bits = 0, rejected = 0, failed = 0;
        for (const auto& r : records_) {
            if (r.account_id != account) continue;
            if (r.outcome == "DELIVERED") {
                keys += r.keys_delivered;
                bits += r.bits_delivered;
            } else if (r.outcome.rfind("REJECTED", 0) == 0) {
                ++rejected;
            } else {
                ++failed;
            }
        }
        auto it = quota_.find({account, today()});
        return {{"account_id", account},
                {"keys_delivered", keys},
                {"bits_delivered", bits},
                {"rejected", rejected},
                {"failed", failed},
                {"authorized_today", it == quota_.end() ? 0 : it->second}};
    }

private:
    // Day boundary at simulated-clock midnight; the scenario clock starts at
    // zero, so day = floor(t / 86400 s).
    std::uint64_t today() const { return static_cast<std::uint64_t>(fabric().now() / 86400_s); }

    void on_authorize(const ProtocolMessage& msg) {
        const json& p = msg.payload;
        std::string account = p.value("account", "");
        std::string master = p.value("master_sae", "");
        std::string slave = p.value("slave_sae", "");
        std::uint64_t number = p.value("number", std::uint64_t{1});
        std::uint64_t size_bits = p.value("size_bits", std::uint64_t{256});

        auto reject = [&](Errc reason) {
            append_record(account, msg.correlation_id, 0, 0,
                          std::string("REJECTED(") + to_string(reason) + ")");
            fabric().send(fabric().make(id(), msg.from, MsgKind::ServiceProperties,
                                        msg.correlation_id,
                                        {{"ok", false}, {"reason", to_string(reason)}}));
        };

        // The directory must resolve the slave SAE even in permissive mode;
        // without it there is nowhere to route.
        auto slave_entry = resolve(slave);
        if (!slave_entry) {
            reject(Errc::PEER_NOT_ALLOWED);
            return;
        }

        const UserProfile* profile = nullptr;
        if (auto it = profiles_.find(account); it != profiles_.end()) profile = &it->second;

        if (!permissive_) {
            if (!profile) {
                reject(Errc::UNKNOWN_USER);
                return;
            }
            if (!profile->payment_valid) {
                reject(Errc::PAYMENT_INVALID);
                return;
            }
            auto key = std::minmax(master, slave);
            if (!profile->allowed_sae_pairs.count({key.first, key.second})) {
                reject(Errc::PEER_NOT_ALLOWED);
                return;
            }
            if (size_bits > profile->max_key_bits) {
                reject(Errc::PEER_NOT_ALLOWED);
                return;
            }
            std::uint64_t& used = quota_[{account, today()}];
            if (used + number > profile->max_keys_per_day) {
                reject(Errc::QUOTA_EXCEEDED);
                return;
            }
            used += number;
        } else {
            quota_[{account, today()}] += number;
        }

        json properties = {{"max_keys_per_day", profile ? profile->max_keys_per_day : 1000},
                           {"max_key_bits", profile ? profile->max_key_bits : 4096}};
        fabric().send(fabric().make(id(), msg.from, MsgKind::ServiceProperties, msg.correlation_id,
                                    {{"ok", true},
                                     {"properties", properties},
                                     {"translation",
                                      {{"slave_ukms", slave_entry->ukms.str()},
                                       {"slave_akms", slave_entry->akms.str()}}}}));
    }

    void on_report(const ProtocolMessage& msg) {
        if (reported_.count(msg.correlation_id)) {
            fabric().send(fabric().make(id(), msg.from, MsgKind::ErrorMsg, msg.correlation_id,
                                        {{"reason", to_string(Errc::DUPLICATE_RECORD)}}));
            return;
        }
        reported_.insert(msg.correlation_id);
        append_record(msg.payload.value("account", ""), msg.correlation_id,
                      msg.payload.value("keys_delivered", std::uint64_t{0}),
                      msg.payload.value("bits_delivered", std::uint64_t{0}),
                      msg.payload.value("outcome", "DELIVERED"));
    }

    void append_record(const std::string& account, Uuid correlation, std::uint64_t keys,
                       std::uint64_t bits, const std::string& outcome) {
        records_.push_back({account, correlation, keys, bits, fabric().now(), outcome});
        if (trace_)
            trace_->emit({{"type", "accounting"},
                          {"t", fabric().now()},
                          {"account", account},
                          {"correlation", correlation.str()},
                          {"keys_delivered", keys},
                          {"bits_delivered", bits},
                          {"outcome", outcome}});
    }

    bool permissive_;
    TraceSink* trace_;
    std::map<std::string, UserProfile> profiles_;
    std::map<std::string, TranslationEntry> directory_;
    std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> quota_;  // (account, day) -> keys
    std::vector<AccountingRecord> records_;
    std::set<Uuid> reported_;
};

struct Alarm {
    SimTime timestamp{0};
    std::string source;
    std::string severity;  // WARN | CRITICAL
    std::string kind;
    std::string detail;
};

class Manager : public Component {
public:
    Manager(EntityId id, EntityId controller, double heartbeat_interval_s, TraceSink* trace)
        : Component(std::move(id)),
          controller_(std::move(controller)),
          heartbeat_interval_s_(heartbeat_interval_s),
          trace_(trace) {}

    void register_device(const EntityId& device) { registry_[device] = -1; }

    void on_start() override { schedule_sweep(); }

    void handle(const ProtocolMessage& msg) override {
        if (msg.kind == MsgKind::StatusUpdate) {
            auto it = registry_.find(msg.from);
            if (it == registry_.end()) {
                record(msg.from.str(), "WARN", "UNKNOWN_SENDER", "heartbeat from unregistered device");
                return;
            }
            it->second = fabric().now();
            return;
        }
        if (msg.kind != MsgKind::Alarm) return;
        record(msg.payload.value("source", msg.from.str()), msg.payload.value("severity", "WARN"),
               msg.payload.value("kind", ""), msg.payload.value("detail", ""));
        // Device-failure interaction with the controller: link state changes
        // are forwarded so routing can react.
        if (msg.payload.value("kind", "") == "LINK_DOWN") {
            json fwd = msg.payload;
            fwd["source"] = msg.payload.value("source", msg.from.str());
            fabric().send(
                fabric().make(id(), controller_, MsgKind::Alarm, msg.correlation_id, fwd));
        }
    }

    // Direct entry point for faults observed outside the message fabric
    // (policy denials are reported by the fabric itself).
    void record(const std::string& source, const std::string& severity, const std::string& kind,
                const std::string& detail) {
        alarms_.push_back({fabric().now(), source, severity, kind, detail});
        if (trace_)
            trace_->emit({{"type", "alarm"},
                          {"t", fabric().now()},
                          {"source", source},
                          {"severity", severity},
                          {"kind", kind},
                          {"detail", detail}});
    }

    const std::vector<Alarm>& alarms() const { return alarms_; }

    std::vector<Alarm> alarms_since(SimTime t) const {
        std::vector<Alarm> out;
        for (const auto& a : alarms_)
            if (a.timestamp >= t) out.push_back(a);
        return out;
    }

private:
    void schedule_sweep() {
        fabric().schedule(static_cast<SimTime>(heartbeat_interval_s_ * 1e6), [this] {
            sweep();
            schedule_sweep();
        });
    }

    void sweep() {
        SimTime cutoff = fabric().now() - static_cast<SimTime>(3 * heartbeat_interval_s_ * 1e6);
        for (auto& [device, last_seen] : registry_) {
            if (last_seen < 0 || last_seen >= cutoff) continue;
            if (flagged_.insert(device).second)
                record(device.str(), "CRITICAL", "DEVICE_UNRESPONSIVE", "3 heartbeats missed");
        }
    }

    EntityId controller_;
    double heartbeat_interval_s_;
    TraceSink* trace_;
    std::map<EntityId, SimTime> registry_;
    std::set<EntityId> flagged_;
    std::vector<Alarm> alarms_;
};

}  // namespace qkdn
