// The mitigation state machine. One inbound segment plus a clock goes
// in; an ordered list of actions (segments to emit toward either side,
// or a drop with reason) comes out. All per-flow effects (whitelist,
// connection table) are applied before the list is returned.
//
// Strategies:
//   SynCookie  - stateless cookie SYN/ACK, then a spliced second
//                connection to the server with sequence translation.
//   AuthFull   - whitelist a source once it answers the decoy SYN/ACK
//                with any ACK; no cookie hash involved.
//   AuthCookie - like AuthFull but the ACK must carry a valid cookie.
//
// A shard owns its whitelist and connection table outright and must be
// driven from a single thread; parallelism comes from running several
// shards, with segments routed by shard_of().

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synproxy/conn_state.hpp"
#include "synproxy/cookie.hpp"
#include "synproxy/packet.hpp"
#include "synproxy/whitelist.hpp"

namespace synproxy {

enum class Strategy { SynCookie, AuthFull, AuthCookie };
enum class DataDelayMode { ZeroWindowResendSynAck, StoreFirstSegment };
enum class ShardKey { FourTuple, SourceIp };
enum class Iface : uint8_t { ClientSide, ServerSide };

const char* to_string(Strategy s);
std::optional<Strategy> strategy_from_string(const std::string& s);

enum class DropReason : uint8_t {
    StaleCookie,
    BadHash,
    NoMatchingSplice,
    CapacityExceeded,
    UnknownFlow,
    NotWhitelisted,
    AwaitingSplice,     // client segment while the server handshake is pending
    SecondEarlyData,    // StoreFirstSegment already holds one segment
    SpliceExpired,      // server never answered the spliced SYN
    kCount
};

const char* to_string(DropReason r);

struct Action {
    enum class Kind : uint8_t { Emit, Drop };

    Kind kind = Kind::Drop;
    Segment segment;      // Emit only
    Iface iface = Iface::ClientSide;
    DropReason reason = DropReason::UnknownFlow;

    static Action emit(Segment s, Iface out) {
        Action a;
        a.kind = Kind::Emit;
        a.segment = std::move(s);
        a.iface = out;
        return a;
    }
    static Action drop(DropReason r) {
        Action a;
        a.kind = Kind::Drop;
        a.reason = r;
        return a;
    }

    bool operator==(const Action&) const = default;
};

using ActionList = std::vector<Action>;

struct EngineConfig {
    Strategy strategy = Strategy::SynCookie;
    DataDelayMode data_delay_mode = DataDelayMode::ZeroWindowResendSynAck;
    uint32_t cookie_window = 1;  // previous ticks accepted, 0..3
    MssTable mss_table;
    SipKey key;
    uint64_t run_nonce = 0;  // AuthFull decoy sequence material

    uint32_t shard_count = 1;
    ShardKey shard_key = ShardKey::FourTuple;

    WhitelistGranularity whitelist_granularity = WhitelistGranularity::PerSourceIp;
    uint32_t whitelist_mask_bits = 20;
    uint64_t whitelist_sweep_period_us = 60 * 1000000ULL;

    uint64_t conn_swap_period_us = 60 * 1000000ULL;
    std::size_t conn_capacity = 1u << 20;

    std::size_t mtu = kDefaultMtu;
    uint16_t default_window = 65535;
    uint8_t ttl = 64;
    uint32_t batch_size = 64;  // segments per scheduling quantum; throughput only

    // Static L2 rewrite table, keyed by egress interface.
    MacAddr mac_self_client{{0x02, 0, 0, 0, 0, 0x10}};
    MacAddr mac_peer_client{{0x02, 0, 0, 0, 0, 0x01}};
    MacAddr mac_self_server{{0x02, 0, 0, 0, 0, 0x20}};
    MacAddr mac_peer_server{{0x02, 0, 0, 0, 0, 0x02}};

    // Applies the strategy/shard-key coupling: cookie splicing needs both
    // directions of a flow on one shard, per-IP whitelisting needs all
    // flows of a source together.
    void normalize();
};

struct Counters {
    uint64_t processed = 0;
    uint64_t emitted_client = 0;
    uint64_t emitted_server = 0;
    uint64_t dropped[static_cast<std::size_t>(DropReason::kCount)] = {};
    uint64_t hash_invocations = 0;
    uint64_t whitelist_lookups = 0;
    uint64_t whitelist_admits = 0;
    uint64_t conn_inserted = 0;
    uint64_t conn_removed = 0;
    uint64_t conn_high_water = 0;
    uint64_t splices_completed = 0;
    uint64_t splices_expired = 0;
    uint64_t whitelist_evicted = 0;
    uint64_t conn_gc_dropped = 0;

    uint64_t dropped_total() const {
        uint64_t t = 0;
        for (uint64_t d : dropped) t += d;
        return t;
    }
    uint64_t emitted_total() const { return emitted_client + emitted_server; }
};

// Sequence/ack rewrite for a spliced flow; everything above L2 except
// the translated field stays byte-identical (checksums are recomputed
// at serialization).
Segment translate_segment(const Segment& s, const ConnEntry& e, Direction dir);

uint32_t shard_of(const FlowKey& k, Iface arrived, const EngineConfig& cfg);

class EngineShard {
  public:
    explicit EngineShard(const EngineConfig& cfg);

    ActionList process(const Segment& s, Iface arrived, uint64_t now_us);

    // Runs due clock work: whitelist sweeps, map swaps and spliced-SYN
    // retransmissions. Call with non-decreasing timestamps; emitted
    // retransmissions come back in the list.
    ActionList advance_clock(uint64_t now_us);

    // Earliest pending deadline, if any (for event-driven hosts).
    std::optional<uint64_t> next_timer_deadline() const;

    const Counters& counters() const { return counters_; }
    const EngineConfig& config() const { return cfg_; }
    std::size_t conn_entries() const { return conns_.size(); }
    uint64_t whitelist_entries() const { return whitelist_.occupied(); }

  private:
    struct PendingSplice {
        uint32_t client_isn = 0;   // x
        uint32_t cookie = 0;       // y
        uint16_t mss = 0;          // decoded from the cookie
        uint64_t deadline_us = 0;
        uint32_t tries = 0;
    };

    ActionList process_syncookie(const Segment& s, Iface arrived, uint64_t now_us);
    ActionList process_auth(const Segment& s, Iface arrived, uint64_t now_us);

    ActionList syncookie_handle_syn(const Segment& s, uint64_t now_us);
    ActionList syncookie_handle_client_ack(const Segment& s, uint64_t now_us);
    ActionList syncookie_handle_server_synack(const Segment& s, uint64_t now_us);
    ActionList auth_handle_syn(const Segment& s, uint64_t now_us);
    ActionList auth_handle_ack(const Segment& s, uint64_t now_us);
    ActionList auth_passthrough(const Segment& s, Iface arrived);

    Segment forwarded(const Segment& s, Iface out) const;
    void set_macs(Segment& s, Iface out) const;
    uint32_t decoy_seq(const FlowKey& k) const;
    Action emit_and_count(Segment s, Iface out);
    void note_insert();

    EngineConfig cfg_;
    SwapMaps conns_;
    Whitelist whitelist_;
    // Splices awaiting the server's SYN/ACK; small, scanned for deadlines.
    std::unordered_map<FlowKey, PendingSplice, FlowKeyHash> pending_;
    Counters counters_;
    uint64_t next_sweep_us_;
    uint64_t next_swap_us_;
    uint64_t last_clock_us_ = 0;
};

}  // namespace synproxy
