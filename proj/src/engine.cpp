#include "synproxy/engine.hpp"

#include <algorithm>

#include "synproxy/util.hpp"

namespace synproxy {

namespace {

// Retransmission waits for the proxy's SYN toward the server. The entry
// is abandoned one doubled wait after the last attempt.
constexpr uint64_t kSpliceWaitsUs[] = {1000000, 2000000, 4000000};
constexpr uint32_t kSpliceMaxTries = 3;
constexpr uint64_t kSpliceFinalWaitUs = 8000000;

bool pure_ack(const Segment& s) {
    using namespace tcpflag;
    return s.has(kAck) && !(s.flags & (kSyn | kFin | kRst));
}

}  // namespace

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::SynCookie: return "syncookie";
        case Strategy::AuthFull: return "authfull";
        case Strategy::AuthCookie: return "authcookie";
    }
    return "?";
}

std::optional<Strategy> strategy_from_string(const std::string& s) {
    if (s == "syncookie") return Strategy::SynCookie;
    if (s == "authfull") return Strategy::AuthFull;
    if (s == "authcookie") return Strategy::AuthCookie;
    return std::nullopt;
}

const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::StaleCookie: return "stale-cookie";
        case DropReason::BadHash: return "bad-hash";
        case DropReason::NoMatchingSplice: return "no-matching-splice";
        case DropReason::CapacityExceeded: return "capacity-exceeded";
        case DropReason::UnknownFlow: return "unknown-flow";
        case DropReason::NotWhitelisted: return "not-whitelisted";
        case DropReason::AwaitingSplice: return "awaiting-splice";
        case DropReason::SecondEarlyData: return "second-early-data";
        case DropReason::SpliceExpired: return "splice-expired";
        case DropReason::kCount: break;
    }
    return "?";
}

void EngineConfig::normalize() {
    if (strategy == Strategy::SynCookie) {
        shard_key = ShardKey::FourTuple;
    } else if (whitelist_granularity == WhitelistGranularity::PerSourceIp) {
        shard_key = ShardKey::SourceIp;
    }
    cookie_window = std::min(cookie_window, 3u);
    if (shard_count == 0) shard_count = 1;
}

Segment translate_segment(const Segment& s, const ConnEntry& e, Direction dir) {
    Segment out = s;
    if (dir == Direction::ClientToServer) {
        out.ack = s.ack + e.delta;
    } else {
        out.seq = s.seq - e.delta;
    }
    return out;
}

uint32_t shard_of(const FlowKey& k, Iface arrived, const EngineConfig& cfg) {
    if (cfg.shard_count <= 1) return 0;
    uint64_t h;
    if (cfg.shard_key == ShardKey::SourceIp) {
        uint32_t client_ip = arrived == Iface::ClientSide ? k.src_ip : k.dst_ip;
        h = mix64(client_ip);
    } else {
        // Commutative endpoint mix so both directions land together.
        uint64_t a = mix64(static_cast<uint64_t>(k.src_ip) << 16 | k.src_port);
        uint64_t b = mix64(static_cast<uint64_t>(k.dst_ip) << 16 | k.dst_port);
        h = a ^ b;
    }
    return static_cast<uint32_t>(h % cfg.shard_count);
}

EngineShard::EngineShard(const EngineConfig& cfg)
    : cfg_(cfg),
      conns_(cfg.conn_capacity),
      whitelist_(cfg.whitelist_granularity, cfg.whitelist_mask_bits,
                 SipKey::from_seed(cfg.key.k0 ^ mix64(cfg.key.k1)), &counters_.hash_invocations),
      next_sweep_us_(cfg.whitelist_sweep_period_us),
      next_swap_us_(cfg.conn_swap_period_us) {}

void EngineShard::set_macs(Segment& s, Iface out) const {
    if (out == Iface::ClientSide) {
        s.eth_src = cfg_.mac_self_client;
        s.eth_dst = cfg_.mac_peer_client;
    } else {
        s.eth_src = cfg_.mac_self_server;
        s.eth_dst = cfg_.mac_peer_server;
    }
}

Segment EngineShard::forwarded(const Segment& s, Iface out) const {
    Segment copy = s;
    set_macs(copy, out);
    return copy;
}

Action EngineShard::emit_and_count(Segment s, Iface out) {
    if (out == Iface::ClientSide)
        ++counters_.emitted_client;
    else
        ++counters_.emitted_server;
    return Action::emit(std::move(s), out);
}

void EngineShard::note_insert() {
    ++counters_.conn_inserted;
    counters_.conn_high_water = std::max<uint64_t>(counters_.conn_high_water, conns_.size());
}

uint32_t EngineShard::decoy_seq(const FlowKey& k) const {
    // Cheap tuple mix, deliberately not SipHash: AuthFull exists to
    // isolate the cost of the cryptographic hash.
    uint64_t t = static_cast<uint64_t>(k.src_ip) << 32 | k.dst_ip;
    t ^= static_cast<uint64_t>(k.src_port) << 16 | k.dst_port;
    return static_cast<uint32_t>(mix64(cfg_.run_nonce ^ t));
}

ActionList EngineShard::process(const Segment& s, Iface arrived, uint64_t now_us) {
    ++counters_.processed;
    if (cfg_.strategy == Strategy::SynCookie) return process_syncookie(s, arrived, now_us);
    return process_auth(s, arrived, now_us);
}

// ---- SYN cookie strategy ----

ActionList EngineShard::process_syncookie(const Segment& s, Iface arrived, uint64_t now_us) {
    using namespace tcpflag;

    if (arrived == Iface::ClientSide && s.has(kSyn) && !s.has(kAck))
        return syncookie_handle_syn(s, now_us);
    if (arrived == Iface::ServerSide && s.has(kSyn) && s.has(kAck))
        return syncookie_handle_server_synack(s, now_us);

    Direction dir =
        arrived == Iface::ClientSide ? Direction::ClientToServer : Direction::ServerToClient;
    FlowKey entry_key = dir == Direction::ClientToServer ? s.key : s.key.reversed();
    ConnEntry* entry = conns_.lookup(entry_key);

    if (!entry) {
        if (dir == Direction::ClientToServer && pure_ack(s))
            return syncookie_handle_client_ack(s, now_us);
        ++counters_.dropped[static_cast<std::size_t>(DropReason::UnknownFlow)];
        return {Action::drop(DropReason::UnknownFlow)};
    }

    if (entry->splice_state == SpliceState::AwaitingServerHandshake) {
        if (dir == Direction::ClientToServer &&
            cfg_.data_delay_mode == DataDelayMode::StoreFirstSegment && pure_ack(s) &&
            !s.payload.empty()) {
            auto pend = pending_.find(entry_key);
            bool in_order = pend != pending_.end() && s.seq == pend->second.client_isn + 1;
            if (in_order && !entry->pending_data) {
                entry->pending_data = s;
                return {};  // stored, nothing emitted
            }
            ++counters_.dropped[static_cast<std::size_t>(DropReason::SecondEarlyData)];
            return {Action::drop(DropReason::SecondEarlyData)};
        }
        ++counters_.dropped[static_cast<std::size_t>(DropReason::AwaitingSplice)];
        return {Action::drop(DropReason::AwaitingSplice)};
    }

    // Established: track teardown, translate, forward.
    TeardownResult td = track_teardown(*entry, s, dir);
    *entry = td.entry;
    Segment out = translate_segment(s, *entry, dir);
    Iface egress = dir == Direction::ClientToServer ? Iface::ServerSide : Iface::ClientSide;
    set_macs(out, egress);
    if (td.terminate) {
        conns_.remove(entry_key);
        ++counters_.conn_removed;
    }
    return {emit_and_count(std::move(out), egress)};
}

ActionList EngineShard::syncookie_handle_syn(const Segment& s, uint64_t now_us) {
    // Stateless cookie reply; a retransmitted SYN in the same tick gets a
    // byte-identical answer.
    FlowKey reply_key = s.key.reversed();
    ++counters_.hash_invocations;
    uint32_t cookie = encode_cookie(cfg_.key, reply_key, now_us, s.options.mss, cfg_.mss_table);

    Segment synack;
    synack.key = reply_key;
    synack.seq = cookie;
    synack.ack = s.seq + 1;
    synack.flags = tcpflag::kSyn | tcpflag::kAck;
    synack.window =
        cfg_.data_delay_mode == DataDelayMode::ZeroWindowResendSynAck ? 0 : cfg_.default_window;
    synack.ttl = cfg_.ttl;
    synack.options.set_mss(
        cfg_.mss_table[cfg_.mss_table.quantize(s.options.mss.value_or(kDefaultMss))]);
    set_macs(synack, Iface::ClientSide);
    return {emit_and_count(std::move(synack), Iface::ClientSide)};
}

ActionList EngineShard::syncookie_handle_client_ack(const Segment& s, uint64_t now_us) {
    ++counters_.hash_invocations;
    VerifyResult v =
        verify_cookie(cfg_.key, s.key.reversed(), s.ack, now_us, cfg_.cookie_window, cfg_.mss_table);
    if (!v.ok()) {
        DropReason r = v.status == VerifyStatus::StaleCookie ? DropReason::StaleCookie
                                                             : DropReason::BadHash;
        ++counters_.dropped[static_cast<std::size_t>(r)];
        return {Action::drop(r)};
    }

    ConnEntry entry;
    entry.splice_state = SpliceState::AwaitingServerHandshake;
    uint32_t client_isn = s.seq - 1;
    if (cfg_.data_delay_mode == DataDelayMode::StoreFirstSegment && !s.payload.empty())
        entry.pending_data = s;  // data carried on the handshake ACK itself
    if (!conns_.insert(s.key, std::move(entry))) {
        ++counters_.dropped[static_cast<std::size_t>(DropReason::CapacityExceeded)];
        return {Action::drop(DropReason::CapacityExceeded)};
    }
    note_insert();

    PendingSplice pend;
    pend.client_isn = client_isn;
    pend.cookie = s.ack - 1;
    pend.mss = v.mss;
    pend.deadline_us = now_us + kSpliceWaitsUs[0];
    pending_[s.key] = pend;

    // Second handshake: reuse the client's ISN so no translation is
    // needed for client-sourced sequence numbers.
    Segment syn;
    syn.key = s.key;
    syn.seq = client_isn;
    syn.flags = tcpflag::kSyn;
    syn.window = cfg_.default_window;
    syn.ttl = cfg_.ttl;
    syn.options.set_mss(v.mss);
    set_macs(syn, Iface::ServerSide);
    return {emit_and_count(std::move(syn), Iface::ServerSide)};
}

ActionList EngineShard::syncookie_handle_server_synack(const Segment& s, uint64_t now_us) {
    (void)now_us;
    FlowKey entry_key = s.key.reversed();
    ConnEntry* entry = conns_.lookup(entry_key);
    auto pend_it = pending_.find(entry_key);
    bool awaiting = entry && entry->splice_state == SpliceState::AwaitingServerHandshake;
    if (!entry || (awaiting && pend_it == pending_.end())) {
        ++counters_.dropped[static_cast<std::size_t>(DropReason::NoMatchingSplice)];
        return {Action::drop(DropReason::NoMatchingSplice)};
    }

    ActionList actions;

    // Handshake-2 completion; everything needed is in the SYN/ACK itself,
    // so a retransmitted SYN/ACK (lost ACK) is re-answered idempotently.
    Segment hs_ack;
    hs_ack.key = entry_key;
    hs_ack.seq = s.ack;
    hs_ack.ack = s.seq + 1;
    hs_ack.flags = tcpflag::kAck;
    hs_ack.window = cfg_.default_window;
    hs_ack.ttl = cfg_.ttl;
    set_macs(hs_ack, Iface::ServerSide);
    actions.push_back(emit_and_count(std::move(hs_ack), Iface::ServerSide));

    if (!awaiting) return actions;

    const PendingSplice pend = pend_it->second;
    pending_.erase(pend_it);

    entry->delta = s.seq - pend.cookie;  // z - y, mod 2^32
    entry->splice_state = SpliceState::Established;
    ++counters_.splices_completed;

    if (cfg_.data_delay_mode == DataDelayMode::ZeroWindowResendSynAck) {
        // Lift the zero window: replay the cookie SYN/ACK with the
        // server's real window so the client releases its first data.
        Segment synack;
        synack.key = entry_key.reversed();
        synack.seq = pend.cookie;
        synack.ack = pend.client_isn + 1;
        synack.flags = tcpflag::kSyn | tcpflag::kAck;
        synack.window = s.window != 0 ? s.window : cfg_.default_window;
        synack.ttl = cfg_.ttl;
        synack.options.set_mss(pend.mss);
        set_macs(synack, Iface::ClientSide);
        actions.push_back(emit_and_count(std::move(synack), Iface::ClientSide));
    } else if (entry->pending_data) {
        Segment stored = translate_segment(*entry->pending_data, *entry,
                                           Direction::ClientToServer);
        entry->pending_data.reset();
        set_macs(stored, Iface::ServerSide);
        actions.push_back(emit_and_count(std::move(stored), Iface::ServerSide));
    }
    return actions;
}

// ---- SYN authentication strategies ----

ActionList EngineShard::process_auth(const Segment& s, Iface arrived, uint64_t now_us) {
    using namespace tcpflag;

    // The server side is behind the proxy; its traffic flows out
    // unchecked. The whitelist gates the client-facing interface only.
    if (arrived == Iface::ServerSide)
        return {emit_and_count(forwarded(s, Iface::ClientSide), Iface::ClientSide)};

    ++counters_.whitelist_lookups;
    if (whitelist_.check(s.key)) return auth_passthrough(s, arrived);

    if (s.has(kSyn) && !s.has(kAck)) return auth_handle_syn(s, now_us);
    if (s.has(kAck) && !s.has(kSyn) && !s.has(kRst)) return auth_handle_ack(s, now_us);

    ++counters_.dropped[static_cast<std::size_t>(DropReason::NotWhitelisted)];
    return {Action::drop(DropReason::NotWhitelisted)};
}

ActionList EngineShard::auth_handle_syn(const Segment& s, uint64_t now_us) {
    FlowKey reply_key = s.key.reversed();
    uint32_t seq;
    if (cfg_.strategy == Strategy::AuthCookie) {
        ++counters_.hash_invocations;
        seq = encode_cookie(cfg_.key, reply_key, now_us, s.options.mss, cfg_.mss_table);
    } else {
        seq = decoy_seq(reply_key);
    }

    Segment synack;
    synack.key = reply_key;
    synack.seq = seq;
    synack.ack = s.seq + 1;
    synack.flags = tcpflag::kSyn | tcpflag::kAck;
    synack.window = cfg_.default_window;
    synack.ttl = cfg_.ttl;
    set_macs(synack, Iface::ClientSide);
    return {emit_and_count(std::move(synack), Iface::ClientSide)};
}

ActionList EngineShard::auth_handle_ack(const Segment& s, uint64_t now_us) {
    if (cfg_.strategy == Strategy::AuthCookie) {
        ++counters_.hash_invocations;
        VerifyResult v = verify_cookie(cfg_.key, s.key.reversed(), s.ack, now_us,
                                       cfg_.cookie_window, cfg_.mss_table);
        if (!v.ok()) {
            DropReason r = v.status == VerifyStatus::StaleCookie ? DropReason::StaleCookie
                                                                 : DropReason::BadHash;
            ++counters_.dropped[static_cast<std::size_t>(r)];
            return {Action::drop(r)};
        }
    }
    // AuthFull admits on any completing ACK; that an ACK flood earns
    // whitelisting is the strategy's documented false-positive exposure.
    whitelist_.admit(s.key);
    ++counters_.whitelist_admits;

    // Reset the decoy connection; the client's retry passes the whitelist.
    Segment rst;
    rst.key = s.key.reversed();
    rst.seq = s.ack;
    rst.flags = tcpflag::kRst;
    rst.window = 0;
    rst.ttl = cfg_.ttl;
    set_macs(rst, Iface::ClientSide);
    return {emit_and_count(std::move(rst), Iface::ClientSide)};
}

ActionList EngineShard::auth_passthrough(const Segment& s, Iface arrived) {
    (void)arrived;
    return {emit_and_count(forwarded(s, Iface::ServerSide), Iface::ServerSide)};
}

// ---- clocked work ----

ActionList EngineShard::advance_clock(uint64_t now_us) {
    ActionList actions;
    last_clock_us_ = now_us;

    while (now_us >= next_sweep_us_) {
        counters_.whitelist_evicted += whitelist_.sweep();
        next_sweep_us_ += cfg_.whitelist_sweep_period_us;
    }
    while (now_us >= next_swap_us_) {
        counters_.conn_gc_dropped += conns_.swap();
        next_swap_us_ += cfg_.conn_swap_period_us;
    }

    for (auto it = pending_.begin(); it != pending_.end();) {
        PendingSplice& pend = it->second;
        if (pend.deadline_us > now_us) {
            ++it;
            continue;
        }
        if (pend.tries >= kSpliceMaxTries) {
            conns_.remove(it->first);
            ++counters_.conn_removed;
            ++counters_.splices_expired;
            ++counters_.dropped[static_cast<std::size_t>(DropReason::SpliceExpired)];
            it = pending_.erase(it);
            continue;
        }
        Segment syn;
        syn.key = it->first;
        syn.seq = pend.client_isn;
        syn.flags = tcpflag::kSyn;
        syn.window = cfg_.default_window;
        syn.ttl = cfg_.ttl;
        syn.options.set_mss(pend.mss);
        set_macs(syn, Iface::ServerSide);
        actions.push_back(emit_and_count(std::move(syn), Iface::ServerSide));
        pend.deadline_us = now_us + (pend.tries + 1 < kSpliceMaxTries
                                         ? kSpliceWaitsUs[pend.tries + 1]
                                         : kSpliceFinalWaitUs);
        ++pend.tries;
        ++it;
    }
    return actions;
}

std::optional<uint64_t> EngineShard::next_timer_deadline() const {
    std::optional<uint64_t> best;
    auto consider = [&](uint64_t t) {
        if (!best || t < *best) best = t;
    };
    consider(next_sweep_us_);
    consider(next_swap_us_);
    for (const auto& [key, pend] : pending_) consider(pend.deadline_us);
    return best;
}

}  // namespace synproxy
