// Seeded discrete-event simulator: client fleet, attacker, proxy and
// webserver models over lossy/delayed links. One scenario runs on one
// thread; identical (config, seed) produces an identical event trace and
// byte-identical metric output.

#pragma once

#include <cstdint>
#include <functional>
#include <queue>

#include "synproxy/config.hpp"
#include "synproxy/engine.hpp"
#include "synproxy/metrics.hpp"

namespace synproxy {

class EventQueue {
  public:
    using Fn = std::function<void()>;

    void schedule(uint64_t at_us, Fn fn) {
        heap_.push(Ev{at_us < now_ ? now_ : at_us, next_seq_++, std::move(fn)});
    }

    bool empty() const { return heap_.empty(); }
    uint64_t now() const { return now_; }
    uint64_t next_at() const { return heap_.top().at; }

    void step() {
        Ev ev = heap_.top();
        heap_.pop();
        now_ = ev.at;
        ev.fn();
    }

  private:
    struct Ev {
        uint64_t at;
        uint64_t seq;  // insertion order breaks ties deterministically
        Fn fn;

        bool operator>(const Ev& o) const {
            return at != o.at ? at > o.at : seq > o.seq;
        }
    };

    std::priority_queue<Ev, std::vector<Ev>, std::greater<>> heap_;
    uint64_t now_ = 0;
    uint64_t next_seq_ = 0;
};

// Where a segment is observed by a hook.
enum class SimPoint {
    ClientLinkDelivery,  // arriving at the proxy's client side (or server, no-proxy)
    ServerLinkDelivery,  // arriving at the server behind the proxy
    ToClientDelivery,    // arriving back at the load generator side
    ToProxyFromServer,   // server-side traffic arriving at the proxy
};

struct SimHooks {
    // Called for every delivered segment, after the link, before the node.
    std::function<void(const Segment&, SimPoint, uint64_t now_us)> on_deliver;
};

MetricsReport run_scenario(const ScenarioConfig& cfg, uint64_t seed, uint64_t duration_us,
                           const SimHooks* hooks = nullptr);

inline MetricsReport run_scenario(const ScenarioConfig& cfg, uint64_t seed) {
    return run_scenario(cfg, seed, cfg.duration_us, nullptr);
}

}  // namespace synproxy
