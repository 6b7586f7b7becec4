// Per-flow state for the SYN-cookie proxy.
//
// Entries live in a pair of plain hash maps, `active` and `history`.
// Inserts go to `active` only; a lookup that misses `active` but hits
// `history` copies the entry up. swap() retires `history`, demotes
// `active` and starts a fresh one, so an entry idle for more than two
// swap periods disappears while anything looked up at least once per
// period lives on. No map is ever traversed.

#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>

#include "synproxy/packet.hpp"

namespace synproxy {

enum class SpliceState : uint8_t { AwaitingServerHandshake, Established };

// The durable payload packs into one 64-bit word (delta + splice +
// teardown bits); the fin sequence fields only matter between seeing a
// FIN and seeing the ACK that covers it.
struct ConnEntry {
    uint32_t delta = 0;  // server_isn - proxy_isn, mod 2^32
    SpliceState splice_state = SpliceState::AwaitingServerHandshake;
    bool fin_client_seen = false;
    bool fin_client_acked = false;
    bool fin_server_seen = false;
    bool fin_server_acked = false;
    bool rst_seen = false;
    uint32_t fin_client_seq = 0;  // valid while fin_client_seen && !fin_client_acked
    uint32_t fin_server_seq = 0;  // valid while fin_server_seen && !fin_server_acked
    std::optional<Segment> pending_data;

    // Bit-packed durable payload, as stored conceptually per flow.
    uint64_t packed_core() const;
};

enum class Direction : uint8_t { ClientToServer, ServerToClient };

struct TeardownResult {
    ConnEntry entry;
    bool terminate = false;
};

// Updates FIN/RST bookkeeping for one segment of an Established flow.
// `s` carries raw (untranslated) numbers as seen on its arrival side;
// the entry's delta bridges the two sequence spaces. terminate flips
// once a RST is seen or both FINs have been seen and acknowledged.
TeardownResult track_teardown(const ConnEntry& e, const Segment& s, Direction dir);

class SwapMaps {
  public:
    explicit SwapMaps(std::size_t capacity);

    // False when `active` is at capacity; the caller drops the connection.
    bool insert(const FlowKey& k, ConnEntry e);

    // Moves a history hit up to `active`. The returned pointer stays
    // valid until the next insert/swap/remove.
    ConnEntry* lookup(const FlowKey& k);

    // history := active, active := {}. Returns entries discarded.
    std::size_t swap();

    bool remove(const FlowKey& k);

    // May transiently count a history copy shadowed by a re-insert.
    std::size_t size() const { return active_.size() + history_.size(); }
    std::size_t active_size() const { return active_.size(); }
    std::size_t capacity() const { return capacity_; }

  private:
    std::unordered_map<FlowKey, ConnEntry, FlowKeyHash> active_;
    std::unordered_map<FlowKey, ConnEntry, FlowKeyHash> history_;
    std::size_t capacity_;
};

}  // namespace synproxy
