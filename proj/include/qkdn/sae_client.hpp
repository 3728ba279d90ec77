// SAE-side client used by the harness and the HTTP facade: issues key
// requests against its UKMS and surfaces delivered keys/errors via hooks.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qkdn/fabric.hpp"

namespace qkdn {

class SaeClient : public Component {
public:
    using Hook = std::function<void(const Uuid& correlation, const json& payload)>;

    SaeClient(EntityId id, EntityId ukms, std::string credential)
        : Component(std::move(id)), ukms_(std::move(ukms)), credential_(std::move(credential)) {}

    void on_keys(Hook h) { on_keys_ = std::move(h); }
    void on_error(Hook h) { on_error_ = std::move(h); }
    void on_status(Hook h) { on_status_ = std::move(h); }

    Uuid request_enc_keys(const std::string& slave_sae, std::uint64_t number,
                          std::uint64_t size_bits, Uuid correlation = {}) {
        if (correlation.is_nil()) correlation = fabric().fresh_id();
        fabric().send(fabric().make(id(), ukms_, MsgKind::KeyRequest, correlation,
                                    {{"op", "enc_keys"},
                                     {"credential", credential_},
                                     {"slave_sae", slave_sae},
                                     {"number", number},
                                     {"size_bits", size_bits}}));
        return correlation;
    }

    void request_dec_keys(const std::vector<std::string>& key_ids, Uuid correlation) {
        fabric().send(fabric().make(id(), ukms_, MsgKind::KeyRequest, correlation,
                                    {{"op", "dec_keys"},
                                     {"credential", credential_},
                                     {"key_ids", key_ids}}));
    }

    void request_status(const std::string& slave_sae, Uuid correlation) {
        fabric().send(fabric().make(id(), ukms_, MsgKind::KeyRequest, correlation,
                                    {{"op", "status"},
                                     {"credential", credential_},
                                     {"slave_sae", slave_sae}}));
    }

    void handle(const ProtocolMessage& msg) override {
        if (msg.from != ukms_) return;
        switch (msg.kind) {
            case MsgKind::KsaDeliver:
                if (on_keys_) on_keys_(msg.correlation_id, msg.payload);
                break;
            case MsgKind::ErrorMsg:
                if (on_error_) on_error_(msg.correlation_id, msg.payload);
                break;
            case MsgKind::StatusUpdate:
                if (on_status_) on_status_(msg.correlation_id, msg.payload);
                break;
            default: break;
        }
    }

private:
    EntityId ukms_;
    std::string credential_;
    Hook on_keys_;
    Hook on_error_;
    Hook on_status_;
};

}  // namespace qkdn
