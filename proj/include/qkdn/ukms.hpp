// User-node KMS: accepts SAE key requests, enriches and forwards them to its
// AKMS, receives pushed KSA keys and serves them to SAEs. The UKMS never
// emits key material toward the AKMS and never learns carrier topology.
#pragma once

#include <map>
#include <set>
#include <string>

#include "qkdn/crypto.hpp"
#include "qkdn/fabric.hpp"
#include "qkdn/key_store.hpp"

namespace qkdn {

struct UkmsConfig {
    EntityId akms;
    EntityId manager;
    CipherMode akms_leg_mode{CipherMode::Aes256Gcm};
    std::uint64_t gcm_rekey_wraps{1u << 20};
    std::uint64_t max_buffer_per_pair{16};
    std::uint64_t pool_capacity_bits{8'000'000};
    std::uint64_t low_watermark_bits{4096};
};

class Ukms : public Component {
public:
    enum class ExchangeState { Waiting, Ready, Delivered, Failed };

    Ukms(EntityId id, UkmsConfig cfg, TraceSink* trace)
        : Component(id),
          cfg_(std::move(cfg)),
          store_(id, cfg_.pool_capacity_bits, cfg_.low_watermark_bits, trace),
          inbound_(cfg_.akms_leg_mode,
                   std::make_unique<PoolKmaSource>(store_, cfg_.akms, lane_for(cfg_.akms, id)),
                   cfg_.gcm_rekey_wraps) {}

    void register_sae(const std::string& sae_name, const std::string& account,
                      const std::string& credential) {
        saes_[sae_name] = {account, credential};
    }

    KeyStore& store() { return store_; }

    ExchangeState exchange_state(const Uuid& correlation) const {
        auto it = exchanges_.find(correlation);
        return it == exchanges_.end() ? ExchangeState::Failed : it->second.state;
    }

    std::uint64_t ready_count(const std::string& master, const std::string& slave) const {
        auto it = ready_per_pair_.find(pair_key(master, slave));
        return it == ready_per_pair_.end() ? 0 : it->second;
    }

    void handle(const ProtocolMessage& msg) override {
        switch (msg.kind) {
            case MsgKind::KeyRequest: on_sae_request(msg); break;
            case MsgKind::KsaPush: on_ksa_push(msg); break;
            case MsgKind::ErrorMsg: on_error(msg); break;
            default: break;
        }
    }

private:
    struct SaeEntry {
        std::string account;
        std::string credential;
    };

    struct Exchange {
        std::string master;
        std::string slave;
        std::uint64_t number{1};
        std::uint64_t size_bits{256};
        ExchangeState state{ExchangeState::Waiting};
        std::vector<Uuid> key_ids;
    };

    struct BufferedKey {
        Uuid correlation;
        std::string master;
        std::string slave;
        Bytes bits;
        bool delivered{false};
    };

    static std::string pair_key(const std::string& a, const std::string& b) { return a + "|" + b; }

    void reply_error(const EntityId& to, Uuid correlation, Errc reason,
                     const std::string& detail = {}, json extra = json::object()) {
        extra["reason"] = to_string(reason);
        if (!detail.empty()) extra["detail"] = detail;
        fabric().send(fabric().make(id(), to, MsgKind::ErrorMsg, correlation, extra));
    }

    void on_sae_request(const ProtocolMessage& msg) {
        const json& p = msg.payload;
        std::string sae_name = msg.from.name;
        auto it = saes_.find(sae_name);
        if (it == saes_.end()) {
            reply_error(msg.from, msg.correlation_id, Errc::UNKNOWN_SAE);
            return;
        }
        if (p.value("credential", "") != it->second.credential) {
            reply_error(msg.from, msg.correlation_id, Errc::FORBIDDEN, "bad credential");
            return;
        }
        std::string op = p.value("op", "enc_keys");
        if (op == "enc_keys")
            on_enc_keys(msg, it->second);
        else if (op == "dec_keys")
            on_dec_keys(msg);
        else if (op == "status")
            on_status(msg);
        else
            reply_error(msg.from, msg.correlation_id, Errc::SCHEMA_VIOLATION, "unknown op " + op);
    }

    void on_enc_keys(const ProtocolMessage& msg, const SaeEntry& entry) {
        const json& p = msg.payload;
        std::uint64_t number = p.value("number", std::uint64_t{1});
        std::uint64_t size_bits = p.value("size_bits", std::uint64_t{256});
        std::string slave = p.value("slave_sae", "");
        if (number < 1 || number > cfg_.max_buffer_per_pair || size_bits < 64 ||
            size_bits > 4096 || size_bits % 8 != 0) {
            reply_error(msg.from, msg.correlation_id, Errc::OVERSIZE_REQUEST);
            return;
        }
        Exchange ex;
        ex.master = msg.from.name;
        ex.slave = slave;
        ex.number = number;
        ex.size_bits = size_bits;
        exchanges_[msg.correlation_id] = ex;
        fabric().send(fabric().make(id(), cfg_.akms, MsgKind::EnrichedRequest, msg.correlation_id,
                                    {{"master_sae", ex.master},
                                     {"slave_sae", slave},
                                     {"number", number},
                                     {"size_bits", size_bits},
                                     {"user_account", entry.account},
                                     {"ukms_id", id().str()}}));
    }

    void on_dec_keys(const ProtocolMessage& msg) {
        const json& p = msg.payload;
        json keys = json::array();
        for (const auto& kid_json : p.value("key_ids", json::array())) {
            Uuid kid = Uuid::parse(kid_json.get<std::string>());
            auto it = buffer_.find(kid);
            if (it == buffer_.end()) {
                reply_error(msg.from, msg.correlation_id, Errc::NOT_READY,
                            "key not yet delivered to this node", {{"retry_after_ms", 100}});
                return;
            }
            if (it->second.slave != msg.from.name) {
                reply_error(msg.from, msg.correlation_id, Errc::FORBIDDEN,
                            "key belongs to a different SAE");
                return;
            }
            keys.push_back({{"key_ID", kid.str()}, {"key", to_base64(it->second.bits)}});
        }
        // All requested ids present: mark them out and deliver.
        for (const auto& kid_json : p.value("key_ids", json::array())) {
            auto& entry = buffer_.at(Uuid::parse(kid_json.get<std::string>()));
            if (!entry.delivered) {
                entry.delivered = true;
                auto& n = ready_per_pair_[pair_key(entry.master, entry.slave)];
                if (n > 0) --n;
            }
        }
        fabric().send(fabric().make(id(), msg.from, MsgKind::KsaDeliver, msg.correlation_id,
                                    {{"keys", keys}}));
    }

    void on_status(const ProtocolMessage& msg) {
        std::string slave = msg.payload.value("slave_sae", "");
        fabric().send(fabric().make(id(), msg.from, MsgKind::StatusUpdate, msg.correlation_id,
                                    {{"stored_key_count", ready_count(msg.from.name, slave)},
                                     {"key_size", 256},
                                     {"max_key_count", cfg_.max_buffer_per_pair}}));
    }

    void on_ksa_push(const ProtocolMessage& msg) {
        if (msg.from != cfg_.akms) return;
        const json& p = msg.payload;
        Uuid key_id = Uuid::parse(p.at("key_id").get<std::string>());
        std::string master = p.value("master_sae", "");
        std::string slave = p.value("slave_sae", "");

        // Duplicate delivery is idempotent: acknowledge, do not re-buffer.
        if (buffer_.count(key_id)) {
            ack_push(msg, key_id);
            return;
        }

        auto ex_it = exchanges_.find(msg.correlation_id);
        bool master_side = ex_it != exchanges_.end();
        if (!master_side && !saes_.count(slave)) {
            reply_error(msg.from, msg.correlation_id, Errc::NO_SUCH_EXCHANGE,
                        "no exchange and no local SAE " + slave);
            fabric().send(fabric().make(id(), cfg_.manager, MsgKind::Alarm, msg.correlation_id,
                                        {{"severity", "WARN"},
                                         {"kind", "UNKNOWN_SENDER"},
                                         {"source", id().str()},
                                         {"detail", "KSA push without matching exchange"}}));
            return;
        }

        Bytes plain;
        try {
            WrappedKey w = WrappedKey::decode(from_hex(p.at(kFrameField).get<std::string>()));
            plain = inbound_.unwrap(w, ConsumeContext{fabric().now(), msg.correlation_id,
                                                      "ukms_leg", "unwrap"});
        } catch (const Error& e) {
            fabric().send(fabric().make(id(), cfg_.manager, MsgKind::Alarm, msg.correlation_id,
                                        {{"severity", "CRITICAL"},
                                         {"kind", "AUTH_FAIL"},
                                         {"source", id().str()},
                                         {"detail", e.what()}}));
            reply_error(msg.from, msg.correlation_id, Errc::AUTH_FAIL);
            if (master_side) fail_exchange(msg.correlation_id, Errc::AUTH_FAIL);
            return;
        }

        buffer_[key_id] = BufferedKey{msg.correlation_id, master, slave, plain, false};
        ready_per_pair_[pair_key(master, slave)] += 1;
        ack_push(msg, key_id);

        if (master_side) {
            Exchange& ex = ex_it->second;
            ex.key_ids.push_back(key_id);
            if (ex.key_ids.size() >= ex.number && ex.state == ExchangeState::Waiting) {
                ex.state = ExchangeState::Ready;
                deliver_ready(msg.correlation_id, ex);
            }
        }
    }

    // The pending enc_keys call completes: hand every key of the exchange to
    // the requesting SAE.
    void deliver_ready(Uuid correlation, Exchange& ex) {
        json keys = json::array();
        for (const auto& kid : ex.key_ids) {
            auto& entry = buffer_.at(kid);
            keys.push_back({{"key_ID", kid.str()}, {"key", to_base64(entry.bits)}});
            if (!entry.delivered) {
                entry.delivered = true;
                auto& n = ready_per_pair_[pair_key(entry.master, entry.slave)];
                if (n > 0) --n;
            }
        }
        ex.state = ExchangeState::Delivered;
        fabric().send(fabric().make(id(), EntityId{EntityKind::Sae, ex.master}, MsgKind::KsaDeliver,
                                    correlation, {{"keys", keys}}));
    }

    void ack_push(const ProtocolMessage& msg, Uuid key_id) {
        fabric().send(fabric().make(id(), msg.from, MsgKind::KsaDeliver, msg.correlation_id,
                                    {{"status", "buffered"}, {"key_id", key_id.str()}}));
    }

    void on_error(const ProtocolMessage& msg) {
        if (msg.from != cfg_.akms) return;
        fail_exchange(msg.correlation_id, Errc::INTERNAL, msg.payload.value("reason", "ERROR"));
    }

    void fail_exchange(Uuid correlation, Errc reason, std::string reason_text = {}) {
        auto it = exchanges_.find(correlation);
        if (it == exchanges_.end() || it->second.state == ExchangeState::Failed ||
            it->second.state == ExchangeState::Delivered)
            return;
        it->second.state = ExchangeState::Failed;
        fabric().send(fabric().make(id(), EntityId{EntityKind::Sae, it->second.master},
                                    MsgKind::ErrorMsg, correlation,
                                    {{"reason", reason_text.empty() ? to_string(reason)
                                                                    : reason_text}}));
    }

    UkmsConfig cfg_;
    KeyStore store_;
    SecureLink inbound_;
    std::map<std::string, SaeEntry> saes_;
    std::map<Uuid, Exchange> exchanges_;
    std::map<Uuid, BufferedKey> buffer_;
    std::map<std::string, std::uint64_t> ready_per_pair_;
};

}  // namespace qkdn
