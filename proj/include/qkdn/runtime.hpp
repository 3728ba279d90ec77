// Deterministic discrete-event scheduler driving the SIM backend. Events at
// equal times run in scheduling order (monotonic sequence tie-break), so a
// run is a pure function of (config, seed).
#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "qkdn/time.hpp"

namespace qkdn {

class SimRuntime {
public:
    SimTime now() const { return now_; }

    void schedule(SimTime delay, std::function<void()> fn) {
        schedule_at(now_ + (delay < 0 ? 0 : delay), std::move(fn));
    }

    void schedule_at(SimTime due, std::function<void()> fn) {
        queue_.push(Event{due < now_ ? now_ : due, seq_++, std::move(fn)});
    }

    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }

    // Runs one event; returns false when the queue is empty.
    bool step() {
        if (queue_.empty()) return false;
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.due;
        ev.fn();
        return true;
    }

    // Runs until the predicate holds (checked between events) or until the
    // queue empties or sim time passes the limit.
    template <typename Pred>
    bool run_until(Pred done, SimTime limit) {
        while (!done()) {
            if (queue_.empty() || queue_.top().due > limit) return false;
            step();
        }
        return true;
    }

    // Processes everything due within [now, now+dt], then advances the clock.
    void run_for(SimTime dt) {
        SimTime horizon = now_ + dt;
        while (!queue_.empty() && queue_.top().due <= horizon) step();
        now_ = horizon;
    }

private:
    struct Event {
        SimTime due;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const Event& o) const {
            return due != o.due ? due > o.due : seq > o.seq;
        }
    };

    SimTime now_{0};
    std::uint64_t seq_{0};
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
};

}  // namespace qkdn
