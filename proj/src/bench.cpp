#include "synproxy/bench.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include "synproxy/cookie.hpp"
#include "synproxy/util.hpp"

namespace synproxy {

namespace {

constexpr uint32_t kBenchServerIp = 0x0A010001;
constexpr uint16_t kBenchServerPort = 80;
constexpr uint64_t kBenchClock = 1000ULL * 1000000;  // fixed instant

Segment spoofed_syn(DetRng& rng) {
    Segment s;
    s.key = FlowKey{static_cast<uint32_t>(rng.next()), kBenchServerIp,
                    static_cast<uint16_t>(rng.range_u32(1024, 65535)), kBenchServerPort};
    s.seq = static_cast<uint32_t>(rng.next());
    s.flags = tcpflag::kSyn;
    s.window = 1024;
    s.options.set_mss(1460);
    return s;
}

// 90% spoofed SYNs (the paper's "more than 90% of all received traffic
// is malicious" assumption), 10% legitimate handshake segments whose
// cookies actually verify.
std::vector<Segment> build_trace(const BenchOptions& opts, const EngineConfig& cfg) {
    std::vector<Segment> trace;
    trace.reserve(opts.packets);
    DetRng rng(mix64(opts.seed ^ 0xbe7c4));

    if (opts.mix == BenchMix::SynOnly) {
        for (uint64_t i = 0; i < opts.packets; ++i) trace.push_back(spoofed_syn(rng));
        return trace;
    }

    while (trace.size() < opts.packets) {
        for (int burst = 0; burst < 9 && trace.size() < opts.packets; ++burst)
            trace.push_back(spoofed_syn(rng));
        if (trace.size() >= opts.packets) break;

        // one legitimate exchange: SYN, then the matching cookie ACK
        Segment syn = spoofed_syn(rng);
        trace.push_back(syn);
        if (trace.size() >= opts.packets) break;
        Segment ack;
        ack.key = syn.key;
        ack.seq = syn.seq + 1;
        ack.ack = encode_cookie(cfg.key, syn.key.reversed(), kBenchClock, 1460, cfg.mss_table) + 1;
        ack.flags = tcpflag::kAck;
        ack.window = 1024;
        trace.push_back(ack);
    }
    return trace;
}

}  // namespace

const char* to_string(BenchMix m) {
    return m == BenchMix::SynOnly ? "syn-only" : "handshake-mix";
}

BenchResult run_bench(const BenchOptions& opts) {
    EngineConfig cfg;
    cfg.strategy = opts.strategy;
    cfg.shard_count = opts.shards ? opts.shards : 1;
    cfg.key = SipKey::from_seed(opts.seed);
    cfg.run_nonce = mix64(opts.seed);
    cfg.batch_size = opts.batch ? opts.batch : 1;
    cfg.normalize();

    std::vector<Segment> trace = build_trace(opts, cfg);

    // Partition by the same flow routing the harness would use.
    std::vector<std::vector<Segment>> per_shard(cfg.shard_count);
    for (Segment& s : trace)
        per_shard[shard_of(s.key, Iface::ClientSide, cfg)].push_back(std::move(s));
    trace.clear();

    std::vector<EngineShard> shards;
    shards.reserve(cfg.shard_count);
    for (uint32_t i = 0; i < cfg.shard_count; ++i) shards.emplace_back(cfg);

    std::vector<double> shard_seconds(cfg.shard_count, 0.0);
    auto worker = [&](uint32_t idx) {
        EngineShard& eng = shards[idx];
        const std::vector<Segment>& input = per_shard[idx];
        const uint32_t batch = cfg.batch_size;
        auto begin = std::chrono::steady_clock::now();
        std::size_t i = 0;
        while (i < input.size()) {
            std::size_t end = std::min(input.size(), i + batch);
            for (; i < end; ++i) eng.process(input[i], Iface::ClientSide, kBenchClock);
        }
        auto stop = std::chrono::steady_clock::now();
        shard_seconds[idx] = std::chrono::duration<double>(stop - begin).count();
    };

    if (cfg.shard_count == 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (uint32_t i = 0; i < cfg.shard_count; ++i) threads.emplace_back(worker, i);
        for (auto& t : threads) t.join();
    }

    BenchResult r;
    r.options = opts;
    r.options.shards = cfg.shard_count;
    for (uint32_t i = 0; i < cfg.shard_count; ++i) {
        r.seconds = std::max(r.seconds, shard_seconds[i]);
        double rate = shard_seconds[i] > 0
                          ? static_cast<double>(per_shard[i].size()) / shard_seconds[i]
                          : 0.0;
        r.per_shard_segments_per_s.push_back(rate);
        const Counters& c = shards[i].counters();
        r.hash_invocations += c.hash_invocations;
        r.emitted += c.emitted_total();
        r.dropped += c.dropped_total();
    }
    r.segments_per_s = r.seconds > 0 ? static_cast<double>(opts.packets) / r.seconds : 0.0;
    return r;
}

std::string bench_csv_header() {
    return "strategy,mix,packets,batch,shards,seconds,segments_per_s,"
           "hash_invocations,emitted,dropped,per_shard_segments_per_s,"
           "schema=synproxy-bench-v1";
}

std::string bench_csv_row(const BenchResult& r) {
    std::ostringstream os;
    os << to_string(r.options.strategy) << ',' << to_string(r.options.mix) << ','
       << r.options.packets << ',' << r.options.batch << ',' << r.options.shards << ',';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", r.seconds);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.1f", r.segments_per_s);
    os << buf << ',' << r.hash_invocations << ',' << r.emitted << ',' << r.dropped << ',';
    for (std::size_t i = 0; i < r.per_shard_segments_per_s.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.1f", r.per_shard_segments_per_s[i]);
        os << (i ? ";" : "") << buf;
    }
    return os.str();
}

}  // namespace synproxy
