// Message fabric: policy-checked, latency-modelled delivery between
// components. Protocol modules are backend-blind; this header carries the
// component contract and the deterministic in-process backend.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "qkdn/error.hpp"
#include "qkdn/hash.hpp"
#include "qkdn/message.hpp"
#include "qkdn/policy.hpp"
#include "qkdn/runtime.hpp"
#include "qkdn/sink.hpp"

namespace qkdn {

class Fabric;

class Component {
public:
    explicit Component(EntityId id) : id_(std::move(id)) {}
    virtual ~Component() = default;

    virtual void handle(const ProtocolMessage& msg) = 0;
    virtual void on_start() {}

    const EntityId& id() const { return id_; }
    void attach(Fabric* fabric) { fabric_ = fabric; }

protected:
    Fabric& fabric() const { return *fabric_; }

private:
    EntityId id_;
    Fabric* fabric_{nullptr};
};

class Fabric {
public:
    virtual ~Fabric() = default;

    virtual Verdict send(ProtocolMessage msg) = 0;
    virtual SimTime now() const = 0;
    virtual void schedule(SimTime delay, std::function<void()> fn) = 0;
    virtual Uuid fresh_id() = 0;
    virtual TraceSink* trace() = 0;

    ProtocolMessage make(const EntityId& from, const EntityId& to, MsgKind kind, Uuid correlation,
                         json payload) {
        return make_message(fresh_id(), from, to, kind, correlation, std::move(payload));
    }
};

// Deterministic single-threaded backend over SimRuntime.
class SimFabric : public Fabric {
public:
    SimFabric(SimRuntime& rt, PolicyGate gate, std::uint64_t seed, TraceSink* trace)
        : rt_(rt), gate_(std::move(gate)), trace_(trace) {
        id_state_ = sha256(Bytes{'i', 'd', 's',
                                 static_cast<std::uint8_t>(seed >> 56), static_cast<std::uint8_t>(seed >> 48),
                                 static_cast<std::uint8_t>(seed >> 40), static_cast<std::uint8_t>(seed >> 32),
                                 static_cast<std::uint8_t>(seed >> 24), static_cast<std::uint8_t>(seed >> 16),
                                 static_cast<std::uint8_t>(seed >> 8),  static_cast<std::uint8_t>(seed)});
    }

    void register_component(Component* c) {
        components_[c->id()] = c;
        c->attach(this);
    }

    Component* find_component(const EntityId& id) {
        auto it = components_.find(id);
        return it == components_.end() ? nullptr : it->second;
    }

    const PolicyGate& gate() const { return gate_; }

    void set_channel_state(const EntityId& a, const EntityId& b, bool up) {
        if (up)
            down_channels_.erase(pair_key(a, b));
        else
            down_channels_.insert(pair_key(a, b));
    }

    // Observer invoked on every policy denial (wired to the manager's alarm
    // log by the world builder).
    void set_deny_observer(std::function<void(const ProtocolMessage&, const Verdict&)> fn) {
        deny_observer_ = std::move(fn);
    }

    Verdict send(ProtocolMessage msg) override {
        if (msg.msg_id.is_nil()) msg.msg_id = fresh_id();
        Verdict v = gate_.enforce(msg);
        if (!v.allowed) {
            log_deny(msg, v);
            return v;
        }
        if (down_channels_.count(pair_key(msg.from, msg.to))) {
            Verdict d = Verdict::deny(Errc::CHANNEL_DOWN, "channel administratively down");
            log_deny(msg, d);
            return d;
        }
        const ChannelSpec* chan = gate_.find(msg.from, msg.to);
        SimTime t_send = rt_.now();
        SimTime due = t_send + chan->latency;
        // Per-channel-direction FIFO even under variable latency.
        auto& last = last_due_[msg.from.str() + ">" + msg.to.str()];
        if (due < last) due = last;
        last = due;
        rt_.schedule_at(due, [this, msg = std::move(msg), t_send] { deliver(msg, t_send); });
        return Verdict::allow();
    }

    // Fault injection: replays a delivered message once more.
    void inject_duplicate(const ProtocolMessage& msg) {
        rt_.schedule(0, [this, msg] { deliver(msg, rt_.now()); });
    }

    SimTime now() const override { return rt_.now(); }
    void schedule(SimTime delay, std::function<void()> fn) override {
        rt_.schedule(delay, std::move(fn));
    }

    Uuid fresh_id() override {
        Bytes buf(id_state_.begin(), id_state_.end());
        put_be64(buf, id_counter_++);
        id_state_ = sha256(buf);
        return Uuid::from_bytes(id_state_.data());
    }

    TraceSink* trace() override { return trace_; }

private:
    static std::string pair_key(const EntityId& a, const EntityId& b) {
        auto sa = a.str(), sb = b.str();
        return sa < sb ? sa + "|" + sb : sb + "|" + sa;
    }

    void deliver(const ProtocolMessage& msg, SimTime t_send) {
        if (trace_)
            trace_->emit({{"type", "msg"},
                          {"t_send", t_send},
                          {"t", rt_.now()},
                          {"from", msg.from.str()},
                          {"to", msg.to.str()},
                          {"from_kind", to_string(msg.from.kind)},
                          {"to_kind", to_string(msg.to.kind)},
                          {"kind", to_string(msg.kind)},
                          {"asset_class", to_string(msg.asset_class)},
                          {"correlation", msg.correlation_id.str()},
                          {"msg_id", msg.msg_id.str()},
                          {"payload", msg.payload}});
        auto it = components_.find(msg.to);
        if (it != components_.end()) it->second->handle(msg);
    }

    void log_deny(const ProtocolMessage& msg, const Verdict& v) {
        if (trace_)
            trace_->emit({{"type", "deny"},
                          {"t", rt_.now()},
                          {"from", msg.from.str()},
                          {"to", msg.to.str()},
                          {"from_kind", to_string(msg.from.kind)},
                          {"to_kind", to_string(msg.to.kind)},
                          {"kind", to_string(msg.kind)},
                          {"asset_class", to_string(msg.asset_class)},
                          {"correlation", msg.correlation_id.str()},
                          {"reason", to_string(v.reason)},
                          {"detail", v.detail}});
        if (deny_observer_) deny_observer_(msg, v);
    }

    SimRuntime& rt_;
    PolicyGate gate_;
    TraceSink* trace_;
    std::map<EntityId, Component*> components_;
    std::map<std::string, SimTime> last_due_;
    std::set<std::string> down_channels_;
    std::function<void(const ProtocolMessage&, const Verdict&)> deny_observer_;
    Digest32 id_state_{};
    std::uint64_t id_counter_{0};
};

}  // namespace qkdn
