// Access-node KMS: the gateway between access and carrier domains. It
// validates requests with the AAA, peers with the remote AKMS, generates the
// QBN and KSA keys (responder side), drives the carrier relay through the
// co-located CKMS and pushes KSA keys down to the UKMS legs.
#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>

#include "qkdn/crypto.hpp"
#include "qkdn/fabric.hpp"
#include "qkdn/key_store.hpp"
#include "qkdn/rng.hpp"

namespace qkdn {

enum class SessionState { Validating, Peered, QbnInFlight, Secured, KsaSent, Done, Failed };

inline const char* to_string(SessionState s) {
    switch (s) {
        case SessionState::Validating: return "VALIDATING";
        case SessionState::Peered: return "PEERED";
        case SessionState::QbnInFlight: return "QBN_IN_FLIGHT";
        case SessionState::Secured: return "SECURED";
        case SessionState::KsaSent: return "KSA_SENT";
        case SessionState::Done: return "DONE";
        case SessionState::Failed: return "FAILED";
    }
    return "?";
}

struct AkmsConfig {
    EntityId aaa;
    EntityId manager;
    EntityId local_ckms;
    CipherMode ukms_leg_mode{CipherMode::Aes256Gcm};
    CipherMode akms_channel_mode{CipherMode::Otp};
    std::uint64_t gcm_rekey_wraps{1u << 20};
    std::uint64_t pool_capacity_bits{8'000'000};
    std::uint64_t low_watermark_bits{4096};
    double aaa_timeout_s{1.0};
    double peer_timeout_s{1.0};
    int retry_max{3};
    double retry_base_s{0.2};
};

class Akms : public Component {
public:
    Akms(EntityId id, AkmsConfig cfg, std::uint64_t rng_seed, TraceSink* trace)
        : Component(id),
          cfg_(std::move(cfg)),
          store_(id, cfg_.pool_capacity_bits, cfg_.low_watermark_bits, trace),
          rng_(rng_seed),
          trace_(trace) {}

    KeyStore& store() { return store_; }
    HybridRng& rng() { return rng_; }

    void add_ukms_leg(const EntityId& ukms) {
        ukms_out_.emplace(ukms, SecureLink(cfg_.ukms_leg_mode,
                                           std::make_unique<PoolKmaSource>(
                                               store_, ukms, lane_for(id(), ukms)),
                                           cfg_.gcm_rekey_wraps));
    }

    void add_remote_akms(const EntityId& remote) {
        akms_out_.emplace(remote, SecureLink(cfg_.akms_channel_mode,
                                             std::make_unique<PoolKmaSource>(
                                                 store_, remote, lane_for(id(), remote)),
                                             cfg_.gcm_rekey_wraps));
        akms_in_.emplace(remote, SecureLink(cfg_.akms_channel_mode,
                                            std::make_unique<PoolKmaSource>(
                                                store_, remote, lane_for(remote, id())),
                                            cfg_.gcm_rekey_wraps));
    }

    void handle(const ProtocolMessage& msg) override {
        switch (msg.kind) {
            case MsgKind::EnrichedRequest: on_enriched_request(msg); break;
            case MsgKind::ServiceProperties: on_service_properties(msg); break;
            case MsgKind::PeerInit:
                if (msg.payload.value("phase", "init") == "ack")
                    on_peer_ack(msg);
                else
                    on_peer_init(msg);
                break;
            case MsgKind::QbnRelay: on_qbn_arrived(msg); break;
            case MsgKind::QbnAck: on_qbn_ack(msg); break;
            case MsgKind::KsaTransfer: on_ksa_transfer(msg); break;
            case MsgKind::KsaDeliver: on_ukms_ack(msg); break;
            case MsgKind::ErrorMsg: on_peer_error(msg); break;
            default: break;
        }
    }

    SessionState session_state(const Uuid& correlation) const {
        auto it = sessions_.find(correlation);
        return it == sessions_.end() ? SessionState::Failed : it->second.state;
    }

    std::string session_fail_reason(const Uuid& correlation) const {
        auto it = sessions_.find(correlation);
        return it == sessions_.end() ? "" : it->second.fail_reason;
    }

private:
    struct Session {
        bool initiator{false};
        SessionState state{SessionState::Validating};
        std::string fail_reason;
        EntityId remote_akms;
        EntityId local_ukms;
        std::string master_sae;
        std::string slave_sae;
        std::string account;  // initiator side only, never forwarded carrierward
        std::uint64_t number{1};
        std::uint64_t size_bits{256};
        EntityId remote_entry_ckms;  // responder: destination CKMS for the QBN relay
        KeyBlock qbn;                // responder holds a copy until the QBN is acknowledged
        bool qbn_generated{false};
        std::uint64_t ukms_acks{0};
        int attempts{0};
        std::uint64_t timer_epoch{0};
        bool aaa_recorded{false};  // AAA already holds the terminal record
        json cached_properties;
    };

    // Legal transitions move forward along the protocol order; FAILED is
    // terminal and reachable from anywhere except DONE.
    bool advance(Session& s, SessionState next, const Uuid& corr) {
        if (s.state == SessionState::Done || s.state == SessionState::Failed) return false;
        if (next != SessionState::Failed && static_cast<int>(next) <= static_cast<int>(s.state))
            return false;
        s.state = next;
        if (trace_)
            trace_->emit({{"type", "session"},
                          {"t", fabric().now()},
                          {"owner", id().str()},
                          {"correlation", corr.str()},
                          {"state", to_string(next)}});
        return true;
    }

    void alarm(const std::string& kind, const std::string& severity, const std::string& detail,
               Uuid correlation = {}) {
        fabric().send(fabric().make(id(), cfg_.manager, MsgKind::Alarm, correlation,
                                    {{"severity", severity},
                                     {"kind", kind},
                                     {"source", id().str()},
                                     {"detail", detail}}));
    }

    Bytes generate_key(std::uint64_t bits) {
        Bytes out = rng_.generate(bits);
        if (rng_.health_report().health == RngHealth::Degraded && !rng_alarmed_) {
            rng_alarmed_ = true;
            alarm("RNG_DEGRADED", "CRITICAL", "entropy source failed; computational path active");
        }
        return out;
    }

    // --- initiator side ---

    void on_enriched_request(const ProtocolMessage& msg) {
        const json& p = msg.payload;
        Session s;
        s.initiator = true;
        s.local_ukms = msg.from;
        s.master_sae = p.value("master_sae", "");
        s.slave_sae = p.value("slave_sae", "");
        s.account = p.value("user_account", "");
        s.number = p.value("number", std::uint64_t{1});
        s.size_bits = p.value("size_bits", std::uint64_t{256});
        bool valid = !s.account.empty();
        sessions_[msg.correlation_id] = std::move(s);
        if (!valid) {
            sessions_[msg.correlation_id].aaa_recorded = true;  // never reached the AAA
            fail_session_corr(msg.correlation_id, to_string(Errc::SCHEMA_VIOLATION));
            return;
        }
        send_validate(msg.correlation_id, 0);
    }

    void send_validate(Uuid corr, int attempt) {
        auto it = sessions_.find(corr);
        if (it == sessions_.end() || it->second.state != SessionState::Validating) return;
        Session& s = it->second;
        s.attempts = attempt;
        fabric().send(fabric().make(id(), cfg_.aaa, MsgKind::Validate, corr,
                                    {{"phase", "authorize"},
                                     {"account", s.account},
                                     {"master_sae", s.master_sae},
                                     {"slave_sae", s.slave_sae},
                                     {"number", s.number},
                                     {"size_bits", s.size_bits}}));
        std::uint64_t epoch = ++s.timer_epoch;
        SimTime wait = static_cast<SimTime>(cfg_.aaa_timeout_s * 1e6) +
                       static_cast<SimTime>(cfg_.retry_base_s * 1e6) * (1ll << attempt);
        fabric().schedule(wait, [this, corr, attempt, epoch] {
            auto it2 = sessions_.find(corr);
            if (it2 == sessions_.end() || it2->second.timer_epoch != epoch ||
                it2->second.state != SessionState::Validating)
                return;
            if (attempt + 1 >= cfg_.retry_max)
                fail_session_corr(corr, to_string(Errc::AAA_TIMEOUT));
            else
                send_validate(corr, attempt + 1);
        });
    }

    void on_service_properties(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end() || !it->second.initiator ||
            it->second.state != SessionState::Validating)
            return;
        Session& s = it->second;
        s.timer_epoch += 1;
        if (!msg.payload.value("ok", false)) {
            // The AAA wrote the terminal REJECTED record already.
            s.aaa_recorded = true;
            fail_session_corr(msg.correlation_id, msg.payload.value("reason", "AAA_REJECT"));
            return;
        }
        s.cached_properties = msg.payload.value("properties", json::object());
        const json& tr = msg.payload.at("translation");
        s.remote_akms = EntityId::parse(tr.at("slave_akms").get<std::string>());
        if (!akms_out_.count(s.remote_akms)) {
            fail_session_corr(msg.correlation_id, to_string(Errc::PEER_UNREACHABLE));
            return;
        }
        send_peer_init(msg.correlation_id, EntityId::parse(tr.at("slave_ukms").get<std::string>()),
                       0);
    }

    void send_peer_init(Uuid corr, EntityId slave_ukms, int attempt) {
        auto it = sessions_.find(corr);
        if (it == sessions_.end() || it->second.state != SessionState::Validating) return;
        Session& s = it->second;
        // The peer learns request shape, the SAE/UKMS endpoints and our entry
        // CKMS. Service parameters deliberately stay out of this schema.
        fabric().send(fabric().make(id(), s.remote_akms, MsgKind::PeerInit, corr,
                                    {{"phase", "init"},
                                     {"number", s.number},
                                     {"size_bits", s.size_bits},
                                     {"master_sae", s.master_sae},
                                     {"slave_sae", s.slave_sae},
                                     {"slave_ukms", slave_ukms.str()},
                                     {"entry_ckms", cfg_.local_ckms.str()}}));
        std::uint64_t epoch = ++s.timer_epoch;
        SimTime wait = static_cast<SimTime>(cfg_.peer_timeout_s * 1e6) +
                       static_cast<SimTime>(cfg_.retry_base_s * 1e6) * (1ll << attempt);
        fabric().schedule(wait, [this, corr, slave_ukms, attempt, epoch] {
            auto it2 = sessions_.find(corr);
            if (it2 == sessions_.end() || it2->second.timer_epoch != epoch ||
                it2->second.state != SessionState::Validating)
                return;
            if (attempt + 1 >= cfg_.retry_max)
                fail_session_corr(corr, to_string(Errc::PEER_UNREACHABLE));
            else
                send_peer_init(corr, slave_ukms, attempt + 1);
        });
    }

    void on_peer_ack(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end() || !it->second.initiator) return;
        Session& s = it->second;
        s.timer_epoch += 1;
        advance(s, SessionState::Peered, msg.correlation_id);
    }

    // QBN delivered by the co-located CKMS (plaintext over the intra-node
    // channel). Initiator side: secure the AKMS<->AKMS channel and ack.
    void on_qbn_arrived(const ProtocolMessage& msg) {
        if (msg.from != cfg_.local_ckms) return;
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end()) {
            alarm("AUTH_FAIL", "WARN", "QBN with unknown correlation (CORRELATION_MISMATCH)",
                  msg.correlation_id);
            return;
        }
        Session& s = it->second;
        if (s.state == SessionState::Done || s.state == SessionState::Failed) return;
        Uuid key_id = Uuid::parse(msg.payload.at("key_id").get<std::string>());
        Bytes bits = from_hex(msg.payload.at(kFrameField).get<std::string>());
        KeyBlock qbn = new_key_block(std::move(bits), KeyOrigin::local_rng(), KeyRole::Qbn, key_id,
                                     fabric().now());
        store_.refill(s.remote_akms, std::move(qbn), lane_for(s.remote_akms, id()));
        advance(s, SessionState::Secured, msg.correlation_id);
        fabric().send(fabric().make(id(), s.remote_akms, MsgKind::QbnAck, msg.correlation_id,
                                    {{"key_id", key_id.str()}}));
    }

    void on_ksa_transfer(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end() || !it->second.initiator) return;
        Session& s = it->second;
        if (s.state != SessionState::Secured && s.state != SessionState::KsaSent) return;
        Uuid key_id = Uuid::parse(msg.payload.at("key_id").get<std::string>());
        Bytes ksa;
        try {
            WrappedKey w = WrappedKey::decode(from_hex(msg.payload.at(kFrameField).get<std::string>()));
            ksa = akms_in_.at(s.remote_akms)
                      .unwrap(w, ConsumeContext{fabric().now(), msg.correlation_id, "akms_ksa",
                                                "unwrap"});
        } catch (const Error& e) {
            alarm("AUTH_FAIL", "CRITICAL", e.what(), msg.correlation_id);
            fail_session_corr(msg.correlation_id, to_string(Errc::AUTH_FAIL));
            return;
        }
        push_to_ukms(msg.correlation_id, s, key_id, ksa,
                     msg.payload.value("idx", std::uint64_t{0}),
                     msg.payload.value("count", std::uint64_t{1}));
        advance(s, SessionState::KsaSent, msg.correlation_id);
    }

    // --- responder side ---

    void on_peer_init(const ProtocolMessage& msg) {
        static const std::set<std::string> allowed = {
            "phase", "number", "size_bits", "master_sae", "slave_sae", "slave_ukms", "entry_ckms"};
        for (auto it = msg.payload.begin(); it != msg.payload.end(); ++it) {
            if (!allowed.count(it.key())) {
                fabric().send(fabric().make(id(), msg.from, MsgKind::ErrorMsg, msg.correlation_id,
                                            {{"reason", to_string(Errc::SCHEMA_VIOLATION)},
                                             {"detail", "unexpected field " + it.key()}}));
                return;
            }
        }
        if (sessions_.count(msg.correlation_id)) {
            // Duplicate init: idempotent ack.
            send_peer_ack(msg.from, msg.correlation_id);
            return;
        }
        Session s;
        s.initiator = false;
        s.state = SessionState::Peered;
        s.remote_akms = msg.from;
        s.master_sae = msg.payload.value("master_sae", "");
        s.slave_sae = msg.payload.value("slave_sae", "");
        s.number = msg.payload.value("number", std::uint64_t{1});
        s.size_bits = msg.payload.value("size_bits", std::uint64_t{256});
        s.local_ukms = EntityId::parse(msg.payload.at("slave_ukms").get<std::string>());
        s.remote_entry_ckms = EntityId::parse(msg.payload.at("entry_ckms").get<std::string>());
        if (!ukms_out_.count(s.local_ukms) || !akms_out_.count(s.remote_akms)) {
            fabric().send(fabric().make(id(), msg.from, MsgKind::ErrorMsg, msg.correlation_id,
                                        {{"reason", to_string(Errc::PEER_BUSY)},
                                         {"detail", "unknown ukms or peer"}}));
            return;
        }
        sessions_[msg.correlation_id] = std::move(s);
        send_peer_ack(msg.from, msg.correlation_id);
        generate_and_send_qbn(msg.correlation_id);
    }

    void send_peer_ack(const EntityId& to, Uuid corr) {
        fabric().send(fabric().make(id(), to, MsgKind::PeerInit, corr,
                                    {{"phase", "ack"}, {"entry_ckms", cfg_.local_ckms.str()}}));
    }

    void generate_and_send_qbn(Uuid corr) {
        auto it = sessions_.find(corr);
        if (it == sessions_.end() || it->second.qbn_generated) return;
        Session& s = it->second;
        Bytes id_bits = generate_key(128);
        Bytes qbn_bits = generate_key(s.size_bits);
        s.qbn = new_key_block(qbn_bits, KeyOrigin::local_rng(), KeyRole::Qbn,
                              Uuid::from_bytes(id_bits.data()), fabric().now());
        s.qbn_generated = true;
        if (trace_)
            trace_->emit({{"type", "qbn_gen"},
                          {"t", fabric().now()},
                          {"owner", id().str()},
                          {"correlation", corr.str()},
                          {"key_id", s.qbn.key_id.str()}});
        advance(s, SessionState::QbnInFlight, corr);
        // Intra-node transfer: plaintext, integrity/authenticity only.
        fabric().send(fabric().make(id(), cfg_.local_ckms, MsgKind::QbnRelay, corr,
                                    {{"destination", s.remote_entry_ckms.str()},
                                     {"key_id", s.qbn.key_id.str()},
                                     {kFrameField, to_hex(s.qbn.bits)},
                                     {"hop_count", 0}}));
    }

    void on_qbn_ack(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end() || it->second.initiator) {
            alarm("AUTH_FAIL", "WARN", "stale QBN ack (CORRELATION_MISMATCH)", msg.correlation_id);
            return;
        }
        Session& s = it->second;
        if (s.state != SessionState::QbnInFlight) return;
        store_.refill(s.remote_akms, s.qbn, lane_for(id(), s.remote_akms));
        advance(s, SessionState::Secured, msg.correlation_id);
        generate_and_send_ksa(msg.correlation_id);
    }

    void generate_and_send_ksa(Uuid corr) {
        auto it = sessions_.find(corr);
        if (it == sessions_.end() || it->second.state != SessionState::Secured) return;
        Session& s = it->second;
        for (std::uint64_t i = 0; i < s.number; ++i) {
            Bytes id_bits = generate_key(128);
            Uuid key_id = Uuid::from_bytes(id_bits.data());
            Bytes ksa = generate_key(s.size_bits);
            if (trace_)
                trace_->emit({{"type", "ksa_gen"},
                              {"t", fabric().now()},
                              {"owner", id().str()},
                              {"correlation", corr.str()},
                              {"key_id", key_id.str()},
                              {"bits_hex", to_hex(ksa)},
                              {"bits_b64", to_base64(ksa)}});
            // Local leg first: a starved UKMS pool fails the exchange before
            // anything leaves this node.
            if (!push_to_ukms(corr, s, key_id, ksa, i, s.number)) return;
            try {
                WrappedKey w = akms_out_.at(s.remote_akms)
                                   .wrap(ksa, ConsumeContext{fabric().now(), corr, "akms_ksa",
                                                             "wrap"});
                fabric().send(fabric().make(id(), s.remote_akms, MsgKind::KsaTransfer, corr,
                                            {{"key_id", key_id.str()},
                                             {kFrameField, to_hex(w.encode())},
                                             {"idx", i},
                                             {"count", s.number}}));
            } catch (const Error& e) {
                fail_session_corr(corr, e.code() == Errc::INSUFFICIENT_KEY
                                            ? to_string(Errc::KEY_STARVATION)
                                            : e.what());
                return;
            }
        }
        advance(s, SessionState::KsaSent, corr);
    }

    // --- shared ---

    bool push_to_ukms(Uuid corr, Session& s, Uuid key_id, const Bytes& ksa, std::uint64_t idx,
                      std::uint64_t count) {
        try {
            WrappedKey w = ukms_out_.at(s.local_ukms)
                               .wrap(ksa, ConsumeContext{fabric().now(), corr, "ukms_leg", "wrap"});
            fabric().send(fabric().make(id(), s.local_ukms, MsgKind::KsaPush, corr,
                                        {{"master_sae", s.master_sae},
                                         {"slave_sae", s.slave_sae},
                                         {"key_id", key_id.str()},
                                         {kFrameField, to_hex(w.encode())},
                                         {"idx", idx},
                                         {"count", count}}));
            return true;
        } catch (const Error& e) {
            fail_session_corr(corr, e.code() == Errc::INSUFFICIENT_KEY
                                        ? to_string(Errc::KEY_STARVATION)
                                        : e.what());
            return false;
        }
    }

    void on_ukms_ack(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end()) return;
        Session& s = it->second;
        if (msg.from != s.local_ukms || s.state != SessionState::KsaSent) return;
        s.ukms_acks += 1;
        if (s.ukms_acks < s.number) return;
        advance(s, SessionState::Done, msg.correlation_id);
        if (s.initiator) report_outcome(msg.correlation_id, s, "DELIVERED");
    }

    void on_peer_error(const ProtocolMessage& msg) {
        auto it = sessions_.find(msg.correlation_id);
        if (it == sessions_.end()) return;
        std::string reason = msg.payload.value("reason", "ERROR");
        bool from_peer_or_carrier = msg.from == it->second.remote_akms ||
                                    msg.from == cfg_.local_ckms ||
                                    msg.from == it->second.local_ukms;
        if (!from_peer_or_carrier) return;
        // Forward failures that originated locally (carrier NACK, UKMS auth
        // failure) to the peer once, so both sides settle.
        if (msg.from != it->second.remote_akms && !it->second.remote_akms.name.empty())
            fabric().send(fabric().make(id(), it->second.remote_akms, MsgKind::ErrorMsg,
                                        msg.correlation_id, {{"reason", reason}}));
        fail_session_corr(msg.correlation_id, reason, /*notify_peer=*/false);
    }

    void fail_session_corr(Uuid corr, const std::string& reason, bool notify_peer = true) {
        auto it = sessions_.find(corr);
        if (it == sessions_.end()) return;
        Session& s = it->second;
        if (s.state == SessionState::Done || s.state == SessionState::Failed) return;
        s.fail_reason = reason;
        advance(s, SessionState::Failed, corr);
        if (notify_peer && !s.remote_akms.name.empty())
            fabric().send(fabric().make(id(), s.remote_akms, MsgKind::ErrorMsg, corr,
                                        {{"reason", reason}}));
        if (s.initiator) {
            fabric().send(
                fabric().make(id(), s.local_ukms, MsgKind::ErrorMsg, corr, {{"reason", reason}}));
            report_outcome(corr, s, "FAILED(" + reason + ")");
        }
    }

    // Delivery accounting toward the AAA; rejections are recorded by the AAA
    // itself at validation time.
    void report_outcome(Uuid corr, Session& s, const std::string& outcome) {
        if (s.aaa_recorded) return;
        fabric().send(fabric().make(id(), cfg_.aaa, MsgKind::Validate, corr,
                                    {{"phase", "report"},
                                     {"account", s.account},
                                     {"keys_delivered", outcome == "DELIVERED" ? s.number : 0},
                                     {"bits_delivered",
                                      outcome == "DELIVERED" ? s.number * s.size_bits : 0},
                                     {"outcome", outcome}}));
    }

    AkmsConfig cfg_;
    KeyStore store_;
    HybridRng rng_;
    TraceSink* trace_;
    bool rng_alarmed_{false};
    std::map<EntityId, SecureLink> ukms_out_;
    std::map<EntityId, SecureLink> akms_out_;
    std::map<EntityId, SecureLink> akms_in_;
    std::map<Uuid, Session> sessions_;
};

}  // namespace qkdn
