#include "synproxy/conn_state.hpp"

namespace synproxy {

namespace {

// TCP sequence-space comparison, mod 2^32.
inline bool seq_gt(uint32_t a, uint32_t b) { return static_cast<int32_t>(a - b) > 0; }

}  // namespace

uint64_t ConnEntry::packed_core() const {
    uint64_t w = delta;
    w |= uint64_t{splice_state == SpliceState::Established} << 32;
    w |= uint64_t{fin_client_seen} << 33;
    w |= uint64_t{fin_client_acked} << 34;
    w |= uint64_t{fin_server_seen} << 35;
    w |= uint64_t{fin_server_acked} << 36;
    w |= uint64_t{rst_seen} << 37;
    return w;
}

TeardownResult track_teardown(const ConnEntry& e0, const Segment& s, Direction dir) {
    TeardownResult r{e0, false};
    ConnEntry& e = r.entry;

    if (s.has(tcpflag::kRst)) {
        e.rst_seen = true;
        r.terminate = true;
        return r;
    }

    // Client sequence numbers pass through untranslated; the server side
    // runs delta higher. FIN seqs are recorded raw as seen, so acks from
    // the client are lifted into server space before comparing.
    uint32_t fin_at = s.seq + static_cast<uint32_t>(s.payload.size());
    if (dir == Direction::ClientToServer) {
        if (s.has(tcpflag::kAck) && e.fin_server_seen && !e.fin_server_acked &&
            seq_gt(s.ack + e.delta, e.fin_server_seq))
            e.fin_server_acked = true;
        if (s.has(tcpflag::kFin) && !e.fin_client_seen) {
            e.fin_client_seen = true;
            e.fin_client_seq = fin_at;
        }
    } else {
        if (s.has(tcpflag::kAck) && e.fin_client_seen && !e.fin_client_acked &&
            seq_gt(s.ack, e.fin_client_seq))
            e.fin_client_acked = true;
        if (s.has(tcpflag::kFin) && !e.fin_server_seen) {
            e.fin_server_seen = true;
            e.fin_server_seq = fin_at;
        }
    }

    r.terminate =
        e.fin_client_seen && e.fin_client_acked && e.fin_server_seen && e.fin_server_acked;
    return r;
}

SwapMaps::SwapMaps(std::size_t capacity) : capacity_(capacity) {}

bool SwapMaps::insert(const FlowKey& k, ConnEntry e) {
    auto it = active_.find(k);
    if (it != active_.end()) {
        it->second = std::move(e);
        return true;
    }
    if (active_.size() >= capacity_) return false;
    active_.emplace(k, std::move(e));
    return true;
}

ConnEntry* SwapMaps::lookup(const FlowKey& k) {
    auto it = active_.find(k);
    if (it != active_.end()) return &it->second;
    auto hit = history_.find(k);
    if (hit == history_.end()) return nullptr;
    auto [pos, inserted] = active_.emplace(k, std::move(hit->second));
    history_.erase(hit);
    return &pos->second;
}

std::size_t SwapMaps::swap() {
    std::size_t dropped = history_.size();
    history_ = std::move(active_);
    active_.clear();
    return dropped;
}

bool SwapMaps::remove(const FlowKey& k) {
    bool any = active_.erase(k) > 0;
    any = history_.erase(k) > 0 || any;
    return any;
}

}  // namespace synproxy
