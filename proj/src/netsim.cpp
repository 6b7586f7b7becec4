#include "synproxy/netsim.hpp"

#include <algorithm>
#include <deque>

#include "synproxy/util.hpp"

namespace synproxy {

namespace {

constexpr uint16_t kClientWindow = 64240;
constexpr uint16_t kServerWindow = 29200;
constexpr uint16_t kMssWire = 1460;
constexpr uint64_t kLastAckGraceUs = 5 * 1000000ULL;

// One direction of a cable: fixed delay, +/- jitter, independent loss.
class Link {
  public:
    void init(EventQueue* q, const LinkConfig& cfg, DetRng rng,
              std::function<void(const Segment&)> sink) {
        q_ = q;
        cfg_ = cfg;
        rng_ = rng;
        sink_ = std::move(sink);
    }

    void send(const Segment& s) {
        if (cfg_.loss > 0.0 && rng_.chance(cfg_.loss)) {
            ++dropped;
            return;
        }
        uint64_t at = q_->now() + cfg_.delay_us;
        if (cfg_.jitter_us)
            at += rng_.below(2 * cfg_.jitter_us + 1) - cfg_.jitter_us;
        ++delivered;
        q_->schedule(at, [this, s] { sink_(s); });
    }

    uint64_t delivered = 0;
    uint64_t dropped = 0;

  private:
    EventQueue* q_ = nullptr;
    LinkConfig cfg_;
    DetRng rng_{0};
    std::function<void(const Segment&)> sink_;
};

// Deterministic application payload patterns; stream equality compares
// the actual bytes end to end.
uint8_t request_byte(uint32_t req_index, uint32_t offset) {
    return static_cast<uint8_t>(req_index * 13 + offset * 7 + 1);
}
uint8_t response_byte(uint32_t rsp_index, uint32_t offset) {
    return static_cast<uint8_t>(rsp_index * 31 + offset * 3 + 2);
}

class Sim {
  public:
    Sim(const ScenarioConfig& cfg, uint64_t seed, uint64_t duration_us, const SimHooks* hooks)
        : cfg_(cfg),
          hooks_(hooks),
          duration_(duration_us),
          hard_end_(duration_us + cfg.drain_us),
          root_(mix64(seed ^ 0x5e55104e)) {
        engine_cfg_ = cfg_.engine;
        engine_cfg_.key = cfg_.explicit_key ? *cfg_.explicit_key
                                            : SipKey::from_seed(root_.fork(1).next());
        engine_cfg_.run_nonce = root_.fork(2).next();
        engine_cfg_.normalize();

        if (cfg_.topology.proxy) {
            for (uint32_t i = 0; i < engine_cfg_.shard_count; ++i) {
                shards_.emplace_back(engine_cfg_);
                shard_armed_.push_back(UINT64_MAX);
            }
        }
        bucket_rate_ = cfg_.capacity.ops_per_second;
        bucket_depth_ = std::max<double>(1.0, engine_cfg_.batch_size);
        bucket_tokens_ = bucket_depth_;

        wire_links();
        setup_clients();
        setup_attacker();
        q_.schedule(duration_, [this] { on_traffic_end(); });
    }

    MetricsReport run();

  private:
    // ---- wiring ----

    void wire_links() {
        bool proxy = cfg_.topology.proxy;
        l_up_.init(&q_, cfg_.topology.client_link, root_.fork(10), [this, proxy](const Segment& s) {
            deliver_hook(s, SimPoint::ClientLinkDelivery);
            if (proxy)
                proxy_on_frame(s, Iface::ClientSide);
            else
                server_on_frame(s);
        });
        l_down_.init(&q_, cfg_.topology.client_link, root_.fork(11), [this](const Segment& s) {
            deliver_hook(s, SimPoint::ToClientDelivery);
            client_route(s);
        });
        s_up_.init(&q_, cfg_.topology.server_link, root_.fork(12), [this](const Segment& s) {
            deliver_hook(s, SimPoint::ServerLinkDelivery);
            server_on_frame(s);
        });
        s_down_.init(&q_, cfg_.topology.server_link, root_.fork(13), [this](const Segment& s) {
            deliver_hook(s, SimPoint::ToProxyFromServer);
            proxy_on_frame(s, Iface::ServerSide);
        });
        server_rng_ = root_.fork(14);
        attacker_rng_ = root_.fork(15);
        client_rng_ = root_.fork(16);
    }

    void deliver_hook(const Segment& s, SimPoint where) {
        if (hooks_ && hooks_->on_deliver) hooks_->on_deliver(s, where, q_.now());
    }

    void server_send(const Segment& s) {
        if (cfg_.topology.proxy)
            s_down_.send(s);
        else
            l_down_.send(s);
    }

    // ---- proxy node ----

    bool bucket_admit() {
        if (bucket_rate_ <= 0.0) return true;
        uint64_t now = q_.now();
        bucket_tokens_ = std::min(
            bucket_depth_,
            bucket_tokens_ + static_cast<double>(now - bucket_last_) * 1e-6 * bucket_rate_);
        bucket_last_ = now;
        if (bucket_tokens_ < 1.0) return false;
        bucket_tokens_ -= 1.0;
        return true;
    }

    void proxy_on_frame(const Segment& s, Iface iface) {
        bool attack = iface == Iface::ClientSide && cfg_.attacker.owns_ip(s.key.src_ip);
        if (attack) ++attack_arrived_;
        if (!bucket_admit()) {
            ++overload_dropped_;
            if (!attack) ++overload_dropped_legit_;
            return;
        }
        if (attack) {
            ++attack_processed_;
            if (s.has(tcpflag::kSyn) && !s.has(tcpflag::kAck)) ++attack_syn_processed_;
        }
        uint32_t idx = shard_of(s.key, iface, engine_cfg_);
        EngineShard& shard = shards_[idx];
        route_actions(shard.advance_clock(q_.now()));
        route_actions(shard.process(s, iface, q_.now()));
        arm_shard_timer(idx);
    }

    void route_actions(const ActionList& actions) {
        for (const Action& a : actions) {
            if (a.kind != Action::Kind::Emit) continue;
            if (a.iface == Iface::ClientSide)
                l_down_.send(a.segment);
            else
                s_up_.send(a.segment);
        }
    }

    void arm_shard_timer(uint32_t idx) {
        auto nd = shards_[idx].next_timer_deadline();
        if (!nd || *nd > hard_end_ || *nd >= shard_armed_[idx]) return;
        shard_armed_[idx] = *nd;
        q_.schedule(*nd, [this, idx] {
            shard_armed_[idx] = UINT64_MAX;
            route_actions(shards_[idx].advance_clock(q_.now()));
            arm_shard_timer(idx);
        });
    }

    // ---- server node ----

    struct Tcb {
        uint32_t peer_isn = 0;
        uint32_t isn = 0;  // z
        uint64_t epoch = 0;
    };

    enum class CloseState { Open, LastAck };

    struct SrvConn {
        uint32_t next_rx = 0;   // next in-order byte expected from the peer
        uint32_t next_tx = 0;   // our next sequence number
        uint32_t acked_tx = 0;  // highest peer ack for our stream
        CloseState close = CloseState::Open;
        std::vector<uint8_t> rx_partial;
        std::deque<std::vector<uint8_t>> response_queue;
        bool response_outstanding = false;
        uint32_t response_seq = 0;
        std::vector<uint8_t> response_payload;
        uint64_t epoch = 0;
        uint32_t responses_sent = 0;
    };

    static bool seq_geq(uint32_t a, uint32_t b) { return static_cast<int32_t>(a - b) >= 0; }

    void server_on_frame(const Segment& s) {
        if (s.key.dst_ip != cfg_.server.ip || s.key.dst_port != cfg_.server.port) return;
        if (cfg_.attacker.owns_ip(s.key.src_ip)) ++srv_attacker_rx_;

        if (s.has(tcpflag::kRst)) {
            backlog_.erase(s.key);
            srv_conns_.erase(s.key);
            return;
        }
        if (s.has(tcpflag::kSyn) && !s.has(tcpflag::kAck)) {
            server_on_syn(s);
            return;
        }
        if (!s.has(tcpflag::kAck)) return;

        auto half = backlog_.find(s.key);
        if (half != backlog_.end()) {
            if (s.ack != half->second.isn + 1) {
                server_rst(s);
                return;
            }
            SrvConn conn;
            conn.next_rx = s.seq;
            conn.next_tx = half->second.isn + 1;
            conn.acked_tx = half->second.isn + 1;
            backlog_.erase(half);
            srv_conns_[s.key] = std::move(conn);
            ++srv_established_;
        }

        auto it = srv_conns_.find(s.key);
        if (it == srv_conns_.end()) {
            server_rst(s);
            return;
        }
        server_on_conn_segment(s, it->second);
    }

    void server_on_syn(const Segment& s) {
        if (srv_conns_.count(s.key)) return;  // stray SYN on a live connection
        auto existing = backlog_.find(s.key);
        if (existing != backlog_.end()) {
            server_send_synack(s.key, existing->second);
            return;
        }
        if (backlog_.size() >= cfg_.server.backlog_capacity) {
            if (cfg_.server.backlog_policy == BacklogPolicy::DropNew) {
                ++srv_syn_dropped_;
                return;
            }
            while (!backlog_fifo_.empty()) {  // evict-oldest; fifo may hold stale keys
                FlowKey victim = backlog_fifo_.front();
                backlog_fifo_.pop_front();
                if (backlog_.erase(victim)) {
                    ++srv_evicted_;
                    break;
                }
            }
        }
        Tcb tcb;
        tcb.peer_isn = s.seq;
        tcb.isn = static_cast<uint32_t>(server_rng_.next());
        tcb.epoch = ++server_epoch_;
        backlog_[s.key] = tcb;
        backlog_fifo_.push_back(s.key);
        ++srv_tcb_total_;
        srv_tcb_hwm_ = std::max<uint64_t>(srv_tcb_hwm_, backlog_.size());
        server_send_synack(s.key, tcb);
        schedule_synack_retrans(s.key, tcb.epoch, 1);
    }

    void server_send_synack(const FlowKey& client_flow, const Tcb& tcb) {
        Segment out;
        out.key = client_flow.reversed();
        out.seq = tcb.isn;
        out.ack = tcb.peer_isn + 1;
        out.flags = tcpflag::kSyn | tcpflag::kAck;
        out.window = kServerWindow;
        out.options.set_mss(kMssWire);
        server_send(out);
    }

    void schedule_synack_retrans(const FlowKey& key, uint64_t epoch, uint32_t attempt) {
        // attempt k fires timeout * 2^(k-1) after the previous send; after
        // the configured retries, one doubled wait and the TCB is dropped.
        uint64_t wait = cfg_.server.synack_timeout_us << (attempt - 1);
        uint64_t at = q_.now() + wait;
        if (at > hard_end_) return;
        q_.schedule(at, [this, key, epoch, attempt] {
            auto it = backlog_.find(key);
            if (it == backlog_.end() || it->second.epoch != epoch) return;
            if (attempt > cfg_.server.synack_retries) {
                backlog_.erase(it);
                return;
            }
            server_send_synack(key, it->second);
            schedule_synack_retrans(key, epoch, attempt + 1);
        });
    }

    void server_rst(const Segment& s) {
        Segment rst;
        rst.key = s.key.reversed();
        rst.seq = s.ack;
        rst.flags = tcpflag::kRst;
        server_send(rst);
        ++srv_rst_sent_;
    }

    void server_on_conn_segment(const Segment& s, SrvConn& conn) {
        if (conn.close == CloseState::LastAck) {
            if (s.has(tcpflag::kFin)) {
                server_send_finack(s.key, conn);  // our FIN/ACK got lost
            } else if (s.ack == conn.next_tx + 1) {
                srv_conns_.erase(s.key);
            }
            return;
        }

        if (seq_geq(s.ack, conn.acked_tx)) conn.acked_tx = s.ack;
        if (conn.response_outstanding &&
            seq_geq(conn.acked_tx,
                    conn.response_seq + static_cast<uint32_t>(conn.response_payload.size()))) {
            conn.response_outstanding = false;
            conn.response_payload.clear();
            server_pump_responses(s.key, conn);
        }

        if (!s.payload.empty()) {
            if (s.seq == conn.next_rx) {
                conn.rx_partial.insert(conn.rx_partial.end(), s.payload.begin(),
                                       s.payload.end());
                auto& ledger = ledgers_[s.key];
                ledger.c2s_rcvd.insert(ledger.c2s_rcvd.end(), s.payload.begin(),
                                       s.payload.end());
                conn.next_rx += static_cast<uint32_t>(s.payload.size());
                while (conn.rx_partial.size() >= cfg_.clients.request_size) {
                    conn.rx_partial.erase(conn.rx_partial.begin(),
                                          conn.rx_partial.begin() + cfg_.clients.request_size);
                    schedule_response(s.key, conn);
                }
            }
            // duplicates and gaps fall through to a plain re-ack
        }

        if (s.has(tcpflag::kFin)) {
            uint32_t fin_at = s.seq + static_cast<uint32_t>(s.payload.size());
            if (fin_at == conn.next_rx) {
                conn.next_rx += 1;
                conn.close = CloseState::LastAck;
                server_send_finack(s.key, conn);
                uint64_t epoch = conn.epoch = ++server_epoch_;
                FlowKey key = s.key;
                if (q_.now() + kLastAckGraceUs <= hard_end_)
                    q_.schedule(q_.now() + kLastAckGraceUs, [this, key, epoch] {
                        auto it = srv_conns_.find(key);
                        if (it != srv_conns_.end() && it->second.epoch == epoch)
                            srv_conns_.erase(it);
                    });
                return;
            }
        }

        // ack data receipt; for duplicates this is the dup-ack
        if (!s.payload.empty()) server_ack(s.key, conn);
    }

    void server_ack(const FlowKey& client_flow, const SrvConn& conn) {
        Segment out;
        out.key = client_flow.reversed();
        out.seq = conn.next_tx;
        out.ack = conn.next_rx;
        out.flags = tcpflag::kAck;
        out.window = kServerWindow;
        server_send(out);
    }

    void server_send_finack(const FlowKey& client_flow, const SrvConn& conn) {
        Segment out;
        out.key = client_flow.reversed();
        out.seq = conn.next_tx;
        out.ack = conn.next_rx;
        out.flags = tcpflag::kFin | tcpflag::kAck;
        out.window = kServerWindow;
        server_send(out);
    }

    void schedule_response(const FlowKey& client_flow, SrvConn& conn) {
        std::vector<uint8_t> payload(cfg_.clients.response_size);
        for (uint32_t j = 0; j < cfg_.clients.response_size; ++j)
            payload[j] = response_byte(conn.responses_sent, j);
        ++conn.responses_sent;
        conn.response_queue.push_back(std::move(payload));
        uint64_t at = q_.now() + cfg_.server.service_time_us;
        if (at > hard_end_) return;
        FlowKey key = client_flow;
        q_.schedule(at, [this, key] {
            auto it = srv_conns_.find(key);
            if (it != srv_conns_.end() && it->second.close == CloseState::Open)
                server_pump_responses(key, it->second);
        });
    }

    void server_pump_responses(const FlowKey& client_flow, SrvConn& conn) {
        if (conn.response_outstanding || conn.response_queue.empty()) return;
        conn.response_payload = std::move(conn.response_queue.front());
        conn.response_queue.pop_front();
        conn.response_seq = conn.next_tx;
        conn.response_outstanding = true;
        auto& ledger = ledgers_[client_flow];
        ledger.s2c_sent.insert(ledger.s2c_sent.end(), conn.response_payload.begin(),
                               conn.response_payload.end());
        conn.next_tx += static_cast<uint32_t>(conn.response_payload.size());
        server_transmit_response(client_flow, conn);
    }

    void server_transmit_response(const FlowKey& client_flow, SrvConn& conn) {
        Segment out;
        out.key = client_flow.reversed();
        out.seq = conn.response_seq;
        out.ack = conn.next_rx;
        out.flags = tcpflag::kAck | tcpflag::kPsh;
        out.window = kServerWindow;
        out.payload = conn.response_payload;
        server_send(out);

        uint64_t epoch = ++server_epoch_;
        conn.epoch = epoch;
        uint64_t at = q_.now() + cfg_.clients.data_retransmit_timeout_us;
        if (at > hard_end_) return;
        FlowKey key = client_flow;
        q_.schedule(at, [this, key, epoch] {
            auto it = srv_conns_.find(key);
            if (it == srv_conns_.end()) return;
            SrvConn& c = it->second;
            if (c.response_outstanding && c.epoch == epoch)
                server_transmit_response(key, c);
        });
    }

    // ---- client fleet ----

    enum class SlotState { Closed, SynSent, WaitWindow, Established, FinWait, Done };

    struct Slot {
        uint32_t ip = 0;
        uint16_t next_port = 0;
        SlotState st = SlotState::Closed;
        FlowKey flow;
        uint32_t isn = 0;
        uint32_t next_seq = 0;   // next byte we would send
        uint32_t peer_next = 0;  // next byte expected from the peer
        uint32_t syn_attempt = 0;
        uint64_t epoch = 0;  // bumps on every state change; guards timers

        uint64_t logical_start_us = 0;  // first SYN of the logical attempt
        bool setup_recorded = false;
        uint64_t tentative_setup_us = 0;
        bool tentative_valid = false;

        std::deque<std::size_t> queue;  // indices into requests_
        bool busy = false;
        std::size_t cur_req = 0;
        uint32_t req_counter = 0;
        std::vector<uint8_t> out_payload;
        uint32_t out_seq = 0;
        bool out_acked = true;
        std::vector<uint8_t> resp_buf;

        bool fin_sent = false;
        uint32_t fin_seq = 0;
    };

    void setup_clients() {
        slots_.resize(cfg_.clients.parallel_connections);
        for (uint32_t i = 0; i < cfg_.clients.parallel_connections; ++i) {
            Slot& slot = slots_[i];
            slot.ip = cfg_.clients.ip_base + i;
            slot.next_port = cfg_.clients.first_port;
            uint64_t at = cfg_.clients.start_delay_us + 997ULL * i;  // staggered start
            q_.schedule(at, [this, i] { client_connect(slots_[i], true); });
        }
        if (cfg_.clients.request_rate > 0 && !slots_.empty()) schedule_request(0);
    }

    void schedule_request(uint64_t index) {
        uint64_t at = cfg_.clients.start_delay_us +
                      static_cast<uint64_t>(static_cast<double>(index) * 1e6 /
                                            cfg_.clients.request_rate);
        if (at >= duration_) return;
        q_.schedule(at, [this, index] {
            requests_.push_back(Req{q_.now(), 0, false, false});
            Slot& slot = slots_[index % slots_.size()];
            slot.queue.push_back(requests_.size() - 1);
            client_try_issue(slot);
            schedule_request(index + 1);
        });
    }

    void client_connect(Slot& slot, bool fresh_logical) {
        if (slot.st == SlotState::Done) return;
        slot.flow = FlowKey{slot.ip, cfg_.server.ip, slot.next_port++, cfg_.server.port};
        if (slot.next_port == 0) slot.next_port = cfg_.clients.first_port;
        slot.isn = static_cast<uint32_t>(client_rng_.next());
        slot.next_seq = slot.isn + 1;
        slot.st = SlotState::SynSent;
        slot.syn_attempt = 0;
        slot.busy = false;
        slot.out_acked = true;
        slot.resp_buf.clear();
        slot.fin_sent = false;
        ++slot.epoch;
        if (fresh_logical) {
            slot.logical_start_us = q_.now();
            slot.tentative_valid = false;
        }
        ++conn_attempts_;
        client_send_syn(slot);
        arm_syn_retransmit(slot);
    }

    void client_send_syn(Slot& slot) {
        Segment syn;
        syn.key = slot.flow;
        syn.seq = slot.isn;
        syn.flags = tcpflag::kSyn;
        syn.window = kClientWindow;
        syn.options.set_mss(kMssWire);
        l_up_.send(syn);
    }

    void arm_syn_retransmit(Slot& slot) {
        uint64_t epoch = slot.epoch;
        uint32_t attempt = slot.syn_attempt;
        const auto& sched = cfg_.clients.syn_retransmit_schedule_us;
        if (attempt >= sched.size()) {
            // schedule exhausted: one final wait, then the attempt fails
            uint64_t at = q_.now() + sched.back();
            if (at > hard_end_) return;
            std::size_t idx = slot_index(slot);
            q_.schedule(at, [this, idx, epoch] {
                Slot& s = slots_[idx];
                if (s.epoch != epoch || s.st != SlotState::SynSent) return;
                ++conn_failures_;
                if (!stopping_) client_connect(s, false);
                else s.st = SlotState::Done;
            });
            return;
        }
        uint64_t at = q_.now() + sched[attempt];
        if (at > hard_end_) return;
        std::size_t idx = slot_index(slot);
        q_.schedule(at, [this, idx, epoch] {
            Slot& s = slots_[idx];
            if (s.epoch != epoch || s.st != SlotState::SynSent) return;
            ++s.syn_attempt;
            client_send_syn(s);
            arm_syn_retransmit(s);
        });
    }

    std::size_t slot_index(const Slot& slot) const { return &slot - slots_.data(); }

    void client_route(const Segment& s) {
        uint32_t lo = cfg_.clients.ip_base;
        uint32_t hi = cfg_.clients.ip_base + cfg_.clients.parallel_connections - 1;
        if (slots_.empty() || s.key.dst_ip < lo || s.key.dst_ip > hi) {
            ++to_void_;  // spoofed-address replies go nowhere
            return;
        }
        Slot& slot = slots_[s.key.dst_ip - lo];
        if (slot.st == SlotState::Closed || slot.st == SlotState::Done) return;
        if (s.key.dst_port != slot.flow.src_port || s.key.src_ip != slot.flow.dst_ip) return;
        client_on_segment(slot, s);
    }

    void client_on_segment(Slot& slot, const Segment& s) {
        if (s.has(tcpflag::kRst)) {
            client_on_rst(slot);
            return;
        }
        if (s.has(tcpflag::kSyn) && s.has(tcpflag::kAck)) {
            client_on_synack(slot, s);
            return;
        }
        if (slot.st != SlotState::Established && slot.st != SlotState::FinWait) return;

        if (s.has(tcpflag::kAck) && slot.busy && !slot.out_acked &&
            seq_geq(s.ack, slot.out_seq + static_cast<uint32_t>(slot.out_payload.size())))
            slot.out_acked = true;

        if (!s.payload.empty()) {
            if (s.seq == slot.peer_next) {
                slot.peer_next += static_cast<uint32_t>(s.payload.size());
                auto& ledger = ledgers_[slot.flow];
                ledger.s2c_rcvd.insert(ledger.s2c_rcvd.end(), s.payload.begin(),
                                       s.payload.end());
                if (slot.busy) {
                    slot.resp_buf.insert(slot.resp_buf.end(), s.payload.begin(),
                                         s.payload.end());
                    if (slot.resp_buf.size() >= cfg_.clients.response_size)
                        client_request_done(slot);
                }
            }
            client_send_ack(slot);
        }

        if (s.has(tcpflag::kFin) && slot.st == SlotState::FinWait) {
            uint32_t fin_at = s.seq + static_cast<uint32_t>(s.payload.size());
            if (fin_at == slot.peer_next) {
                slot.peer_next += 1;
                if (seq_geq(s.ack, slot.fin_seq + 1)) {
                    client_send_ack(slot);  // final ack of the server's FIN
                    slot.st = SlotState::Done;
                    ++slot.epoch;
                }
            }
        }
    }

    void client_on_synack(Slot& slot, const Segment& s) {
        if (slot.st == SlotState::SynSent) {
            if (s.ack != slot.isn + 1) return;
            slot.peer_next = s.seq + 1;
            ++slot.epoch;
            if (s.window == 0) {
                slot.st = SlotState::WaitWindow;
                client_send_ack(slot);
                arm_wait_window_probe(slot);
            } else {
                client_established(slot, true);
            }
            return;
        }
        // duplicate SYN/ACK: window lift in zero-window mode, or a
        // retransmission whose ack got lost. Always re-ack.
        if (s.seq + 1 != slot.peer_next) return;
        if (slot.st == SlotState::WaitWindow && s.window != 0) {
            ++slot.epoch;
            client_established(slot, false);
        } else {
            client_send_ack(slot);
        }
    }

    // piggyback=true allows the first request to ride on the handshake ACK
    void client_established(Slot& slot, bool piggyback) {
        slot.st = SlotState::Established;
        slot.tentative_setup_us = q_.now() - slot.logical_start_us;
        slot.tentative_valid = true;

        if (piggyback && !slot.queue.empty() && !slot.busy) {
            client_compose_request(slot);
            Segment ack = client_data_segment(slot);
            l_up_.send(ack);
            arm_data_retransmit(slot);
        } else {
            client_send_ack(slot);
            client_try_issue(slot);
        }
        if (stopping_) client_maybe_close(slot);
    }

    void client_send_ack(Slot& slot) {
        Segment ack;
        ack.key = slot.flow;
        ack.seq = slot.next_seq;
        ack.ack = slot.peer_next;
        ack.flags = tcpflag::kAck;
        ack.window = kClientWindow;
        l_up_.send(ack);
    }

    void arm_wait_window_probe(Slot& slot) {
        uint64_t epoch = slot.epoch;
        uint64_t at = q_.now() + cfg_.clients.data_retransmit_timeout_us;
        if (at > hard_end_) return;
        std::size_t idx = slot_index(slot);
        q_.schedule(at, [this, idx, epoch] {
            Slot& s = slots_[idx];
            if (s.epoch != epoch || s.st != SlotState::WaitWindow) return;
            client_send_ack(s);  // re-ack; also re-validates proxy state
            arm_wait_window_probe(s);
        });
    }

    void client_compose_request(Slot& slot) {
        slot.cur_req = slot.queue.front();
        slot.queue.pop_front();
        slot.busy = true;
        slot.out_payload.resize(cfg_.clients.request_size);
        for (uint32_t j = 0; j < cfg_.clients.request_size; ++j)
            slot.out_payload[j] = request_byte(slot.req_counter, j);
        ++slot.req_counter;
        slot.out_seq = slot.next_seq;
        slot.out_acked = false;
        slot.resp_buf.clear();
        slot.next_seq += static_cast<uint32_t>(slot.out_payload.size());
        auto& ledger = ledgers_[slot.flow];
        ledger.c2s_sent.insert(ledger.c2s_sent.end(), slot.out_payload.begin(),
                               slot.out_payload.end());
    }

    Segment client_data_segment(const Slot& slot) {
        Segment out;
        out.key = slot.flow;
        out.seq = slot.out_seq;
        out.ack = slot.peer_next;
        out.flags = tcpflag::kAck | tcpflag::kPsh;
        out.window = kClientWindow;
        out.payload = slot.out_payload;
        return out;
    }

    void client_try_issue(Slot& slot) {
        if (slot.st != SlotState::Established || slot.busy || slot.queue.empty()) return;
        client_compose_request(slot);
        l_up_.send(client_data_segment(slot));
        arm_data_retransmit(slot);
    }

    void arm_data_retransmit(Slot& slot) {
        uint64_t epoch = slot.epoch;
        uint32_t seq = slot.out_seq;
        uint64_t at = q_.now() + cfg_.clients.data_retransmit_timeout_us;
        if (at > hard_end_) return;
        std::size_t idx = slot_index(slot);
        q_.schedule(at, [this, idx, epoch, seq] {
            Slot& s = slots_[idx];
            if (s.epoch != epoch || !s.busy || s.out_acked || s.out_seq != seq) return;
            if (s.st != SlotState::Established) return;
            l_up_.send(client_data_segment(s));
            arm_data_retransmit(s);
        });
    }

    void client_request_done(Slot& slot) {
        Req& req = requests_[slot.cur_req];
        req.done = true;
        req.completed_at = q_.now();
        uint64_t latency = req.completed_at - req.scheduled_at;
        req.success = latency <= cfg_.clients.request_deadline_us;
        request_lat_.record(latency);
        slot.busy = false;
        slot.resp_buf.clear();

        if (slot.tentative_valid && !slot.setup_recorded) {
            setup_lat_.record(slot.tentative_setup_us);
            slot.setup_recorded = true;
            ++conn_established_;
        }
        client_try_issue(slot);
        if (stopping_) client_maybe_close(slot);
    }

    void client_on_rst(Slot& slot) {
        if (slot.st == SlotState::Done) return;
        slot.tentative_valid = false;  // this incarnation never became usable
        if (!cfg_.clients.app_retry_on_rst || stopping_) {
            slot.st = SlotState::Done;
            ++slot.epoch;
            return;
        }
        ++rst_retries_;
        // immediate application-level retry; queued requests carry over
        if (slot.busy) {
            slot.queue.push_front(slot.cur_req);  // re-issue on the new connection
            slot.busy = false;
        }
        // A reset decoy connection exchanged no application data; its
        // half-written ledger would otherwise read as a stream mismatch.
        auto led = ledgers_.find(slot.flow);
        if (led != ledgers_.end() && led->second.c2s_rcvd.empty() &&
            led->second.s2c_sent.empty())
            ledgers_.erase(led);
        client_connect(slot, false);
    }

    void client_maybe_close(Slot& slot) {
        if (slot.st != SlotState::Established || slot.busy || !slot.queue.empty()) return;
        slot.st = SlotState::FinWait;
        slot.fin_seq = slot.next_seq;
        slot.next_seq += 1;
        ++slot.epoch;
        client_send_fin(slot);
        arm_fin_retransmit(slot);
    }

    void client_send_fin(Slot& slot) {
        Segment fin;
        fin.key = slot.flow;
        fin.seq = slot.fin_seq;
        fin.ack = slot.peer_next;
        fin.flags = tcpflag::kFin | tcpflag::kAck;
        fin.window = kClientWindow;
        l_up_.send(fin);
    }

    void arm_fin_retransmit(Slot& slot) {
        uint64_t epoch = slot.epoch;
        uint64_t at = q_.now() + cfg_.clients.data_retransmit_timeout_us;
        if (at > hard_end_) return;
        std::size_t idx = slot_index(slot);
        q_.schedule(at, [this, idx, epoch] {
            Slot& s = slots_[idx];
            if (s.epoch != epoch || s.st != SlotState::FinWait) return;
            client_send_fin(s);
            arm_fin_retransmit(s);
        });
    }

    void on_traffic_end() {
        stopping_ = true;
        for (Slot& slot : slots_) {
            if (slot.st == SlotState::Established)
                client_maybe_close(slot);
            else if (slot.st == SlotState::SynSent || slot.st == SlotState::WaitWindow) {
                slot.st = SlotState::Done;
                ++slot.epoch;
            }
        }
    }

    // ---- attacker ----

    void setup_attacker() {
        schedule_flood(cfg_.attacker.syn_flood_rate, 0);
        schedule_flood(cfg_.attacker.ack_flood_rate, 1);
        schedule_flood(cfg_.attacker.rst_flood_rate, 2);
    }

    void schedule_flood(double rate, int kind) {
        if (rate <= 0) return;
        uint64_t period = std::max<uint64_t>(1, static_cast<uint64_t>(1e6 / rate));
        schedule_flood_step(period, kind, period / 3 + static_cast<uint64_t>(kind));
    }

    void schedule_flood_step(uint64_t period, int kind, uint64_t at) {
        if (at >= duration_) return;
        q_.schedule(at, [this, period, kind, at] {
            send_attack_segment(kind);
            schedule_flood_step(period, kind, at + period);
        });
    }

    void send_attack_segment(int kind) {
        const AttackerConfig& a = cfg_.attacker;
        Segment s;
        s.key.src_ip = a.spoof_ip_lo +
                       static_cast<uint32_t>(attacker_rng_.below(
                           static_cast<uint64_t>(a.spoof_ip_hi) - a.spoof_ip_lo + 1));
        s.key.src_port = static_cast<uint16_t>(
            attacker_rng_.range_u32(a.spoof_port_lo, a.spoof_port_hi));
        s.key.dst_ip = cfg_.server.ip;
        s.key.dst_port = cfg_.server.port;
        s.seq = static_cast<uint32_t>(attacker_rng_.next());
        s.window = 1024;
        if (kind == 0) {
            s.flags = tcpflag::kSyn;
            s.options.set_mss(kMssWire);
            ++atk_syn_sent_;
        } else if (kind == 1) {
            s.flags = tcpflag::kAck;
            s.ack = static_cast<uint32_t>(attacker_rng_.next());
            ++atk_ack_sent_;
        } else {
            s.flags = tcpflag::kRst;
            ++atk_rst_sent_;
        }
        l_up_.send(s);
    }

    // ---- bookkeeping ----

    struct Req {
        uint64_t scheduled_at = 0;
        uint64_t completed_at = 0;
        bool success = false;
        bool done = false;
    };

    struct Ledger {
        std::vector<uint8_t> c2s_sent, c2s_rcvd, s2c_sent, s2c_rcvd;
    };

    void finalize(MetricsReport& rep);

    ScenarioConfig cfg_;
    EngineConfig engine_cfg_;
    const SimHooks* hooks_;
    uint64_t duration_;
    uint64_t hard_end_;
    DetRng root_;
    EventQueue q_;

    Link l_up_, l_down_, s_up_, s_down_;

    std::vector<EngineShard> shards_;
    std::vector<uint64_t> shard_armed_;
    double bucket_rate_ = 0, bucket_depth_ = 64, bucket_tokens_ = 64;
    uint64_t bucket_last_ = 0;
    uint64_t overload_dropped_ = 0, overload_dropped_legit_ = 0;
    uint64_t attack_arrived_ = 0, attack_processed_ = 0, attack_syn_processed_ = 0;
    uint64_t to_void_ = 0;

    DetRng server_rng_{0}, attacker_rng_{0}, client_rng_{0};
    std::unordered_map<FlowKey, Tcb, FlowKeyHash> backlog_;
    std::deque<FlowKey> backlog_fifo_;
    std::unordered_map<FlowKey, SrvConn, FlowKeyHash> srv_conns_;
    uint64_t server_epoch_ = 0;
    uint64_t srv_tcb_total_ = 0, srv_tcb_hwm_ = 0, srv_established_ = 0;
    uint64_t srv_rst_sent_ = 0, srv_syn_dropped_ = 0, srv_evicted_ = 0, srv_attacker_rx_ = 0;

    std::vector<Slot> slots_;
    std::vector<Req> requests_;
    LatencyRecorder setup_lat_, request_lat_;
    uint64_t conn_attempts_ = 0, conn_established_ = 0, conn_failures_ = 0, rst_retries_ = 0;
    uint64_t atk_syn_sent_ = 0, atk_ack_sent_ = 0, atk_rst_sent_ = 0;
    bool stopping_ = false;

    std::unordered_map<FlowKey, Ledger, FlowKeyHash> ledgers_;
};

MetricsReport Sim::run() {
    while (!q_.empty() && q_.next_at() <= hard_end_) q_.step();
    MetricsReport rep;
    finalize(rep);
    return rep;
}

void Sim::finalize(MetricsReport& rep) {
    rep.conn_setup = setup_lat_;
    rep.request = request_lat_;

    uint64_t succeeded = 0, failed = 0;
    for (const Req& r : requests_) {
        if (r.done && r.success)
            ++succeeded;
        else
            ++failed;
    }
    double success_p =
        requests_.empty() ? 1.0 : static_cast<double>(succeeded) / requests_.size();

    uint64_t stream_flows = 0, stream_mismatches = 0;
    for (const auto& [flow, ledger] : ledgers_) {
        ++stream_flows;
        if (ledger.c2s_sent != ledger.c2s_rcvd || ledger.s2c_sent != ledger.s2c_rcvd)
            ++stream_mismatches;
    }

    double dur_s = static_cast<double>(duration_) / 1e6;
    rep.put("strategy", cfg_.topology.proxy ? to_string(engine_cfg_.strategy) : "none");
    rep.put("duration_s", dur_s);
    rep.put("requests_issued", static_cast<uint64_t>(requests_.size()));
    rep.put("requests_succeeded", succeeded);
    rep.put("requests_failed", failed);
    rep.put("success_probability", success_p);
    rep.put("conn_attempts", conn_attempts_);
    rep.put("conn_established", conn_established_);
    rep.put("conn_failures", conn_failures_);
    rep.put("rst_retries", rst_retries_);

    LatencyStats setup = setup_lat_.stats();
    rep.put("setup_count", setup.count);
    rep.put("setup_p50_us", setup.p50_us);
    rep.put("setup_p90_us", setup.p90_us);
    rep.put("setup_p99_us", setup.p99_us);
    rep.put("setup_p999_us", setup.p999_us);
    LatencyStats reqs = request_lat_.stats();
    rep.put("request_count", reqs.count);
    rep.put("request_p50_us", reqs.p50_us);
    rep.put("request_p90_us", reqs.p90_us);
    rep.put("request_p99_us", reqs.p99_us);
    rep.put("request_p999_us", reqs.p999_us);

    rep.put("attack_syn_sent", atk_syn_sent_);
    rep.put("attack_ack_sent", atk_ack_sent_);
    rep.put("attack_rst_sent", atk_rst_sent_);
    rep.put("attack_arrived", attack_arrived_);
    rep.put("attack_processed", attack_processed_);
    rep.put("attack_processed_per_s", static_cast<double>(attack_processed_) / dur_s);
    rep.put("attack_syn_processed_per_s",
            static_cast<double>(attack_syn_processed_) / dur_s);
    rep.put("proxy_overload_dropped", overload_dropped_);
    rep.put("proxy_overload_dropped_legit", overload_dropped_legit_);

    Counters agg;
    for (const EngineShard& shard : shards_) {
        const Counters& c = shard.counters();
        agg.processed += c.processed;
        agg.emitted_client += c.emitted_client;
        agg.emitted_server += c.emitted_server;
        for (std::size_t i = 0; i < std::size(agg.dropped); ++i) agg.dropped[i] += c.dropped[i];
        agg.hash_invocations += c.hash_invocations;
        agg.whitelist_lookups += c.whitelist_lookups;
        agg.whitelist_admits += c.whitelist_admits;
        agg.conn_inserted += c.conn_inserted;
        agg.conn_removed += c.conn_removed;
        agg.conn_high_water += c.conn_high_water;
        agg.splices_completed += c.splices_completed;
        agg.splices_expired += c.splices_expired;
        agg.whitelist_evicted += c.whitelist_evicted;
        agg.conn_gc_dropped += c.conn_gc_dropped;
    }
    uint64_t conn_final = 0, wl_final = 0;
    for (const EngineShard& shard : shards_) {
        conn_final += shard.conn_entries();
        wl_final += shard.whitelist_entries();
    }
    rep.put("engine_processed", agg.processed);
    rep.put("engine_emitted_client", agg.emitted_client);
    rep.put("engine_emitted_server", agg.emitted_server);
    rep.put("engine_hash_invocations", agg.hash_invocations);
    rep.put("engine_whitelist_lookups", agg.whitelist_lookups);
    rep.put("engine_whitelist_admits", agg.whitelist_admits);
    rep.put("engine_conn_inserted", agg.conn_inserted);
    rep.put("engine_conn_removed", agg.conn_removed);
    rep.put("engine_conn_high_water", agg.conn_high_water);
    rep.put("engine_splices_completed", agg.splices_completed);
    rep.put("engine_splices_expired", agg.splices_expired);
    rep.put("engine_whitelist_evicted", agg.whitelist_evicted);
    rep.put("engine_conn_gc_dropped", agg.conn_gc_dropped);
    rep.put("engine_conn_entries_final", conn_final);
    rep.put("engine_whitelist_entries_final", wl_final);
    for (std::size_t i = 0; i < static_cast<std::size_t>(DropReason::kCount); ++i)
        rep.put(std::string("engine_drop_") + to_string(static_cast<DropReason>(i)),
                agg.dropped[i]);

    rep.put("server_tcb_allocated", srv_tcb_total_);
    rep.put("server_tcb_high_water", srv_tcb_hwm_);
    rep.put("server_established", srv_established_);
    rep.put("server_rst_sent", srv_rst_sent_);
    rep.put("server_syn_dropped", srv_syn_dropped_);
    rep.put("server_evicted", srv_evicted_);
    rep.put("server_attacker_segments", srv_attacker_rx_);

    rep.put("link_up_delivered", l_up_.delivered);
    rep.put("link_up_dropped", l_up_.dropped);
    rep.put("link_down_delivered", l_down_.delivered);
    rep.put("link_down_dropped", l_down_.dropped);
    rep.put("link_srv_up_delivered", s_up_.delivered);
    rep.put("link_srv_up_dropped", s_up_.dropped);
    rep.put("link_srv_down_delivered", s_down_.delivered);
    rep.put("link_srv_down_dropped", s_down_.dropped);
    rep.put("segments_to_spoofed", to_void_);

    rep.put("stream_flows", stream_flows);
    rep.put("stream_mismatches", stream_mismatches);
}

}  // namespace

MetricsReport run_scenario(const ScenarioConfig& cfg, uint64_t seed, uint64_t duration_us,
                           const SimHooks* hooks) {
    cfg.validate();
    Sim sim(cfg, seed, duration_us, hooks);
    return sim.run();
}

}  // namespace synproxy
