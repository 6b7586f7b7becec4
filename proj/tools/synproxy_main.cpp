// synproxy command-line frontend: scenario runner, pcap replay, cookie
// debug tool and throughput microbenchmarks.
//
// Exit codes: 0 success, 2 invalid arguments/config, 3 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "synproxy/bench.hpp"
#include "synproxy/netsim.hpp"
#include "synproxy/pcap.hpp"
#include "synproxy/util.hpp"

namespace {

using namespace synproxy;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

SipKey resolve_key(const std::string& key_hex, uint64_t seed) {
    if (!key_hex.empty()) return SipKey::from_hex(key_hex);
    return SipKey::from_seed(seed);
}

bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    return static_cast<bool>(out);
}

// ---- sim ----

struct SimArgs {
    std::string config_path;
    uint64_t seed = 1;
    double duration_s = 0;  // 0: take the config's value
    std::string out_dir = ".";
    std::vector<std::string> overrides;
};

int cmd_sim(const SimArgs& args) {
    ScenarioConfig cfg;
    try {
        IniDoc doc = IniDoc::parse_file(args.config_path);
        for (const std::string& o : args.overrides) doc.set_dotted(o);
        cfg = load_scenario(doc);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    uint64_t duration =
        args.duration_s > 0 ? static_cast<uint64_t>(args.duration_s * 1e6) : cfg.duration_us;

    MetricsReport rep = run_scenario(cfg, args.seed, duration, nullptr);

    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    std::string metrics_path = args.out_dir + "/metrics.csv";
    std::string hist_path = args.out_dir + "/latency_hist.csv";
    if (ec || !write_file(metrics_path, rep.to_csv()) ||
        !write_file(hist_path, rep.histogram_csv())) {
        std::cerr << "cannot write results under " << args.out_dir << "\n";
        return kExitIo;
    }
    std::cout << rep.summary();
    std::cout << "wrote " << metrics_path << " and " << hist_path << "\n";
    return kExitOk;
}

// ---- replay ----

struct ReplayArgs {
    std::string in_path;
    std::string out_path;
    std::string strategy = "syncookie";
    std::string key_hex;
    uint64_t seed = 1;
    std::string clock = "pcap-timestamps";
    std::string server_ip = "10.1.0.1";
    std::string mode = "zero_window";
    uint32_t window = 1;
    bool validate_checksums = false;
    std::string drops_path;
};

int cmd_replay(const ReplayArgs& args) {
    EngineConfig cfg;
    auto strategy = strategy_from_string(args.strategy);
    if (!strategy) {
        std::cerr << "unknown strategy: " << args.strategy << "\n";
        return kExitConfig;
    }
    cfg.strategy = *strategy;
    cfg.data_delay_mode = args.mode == "store_first" ? DataDelayMode::StoreFirstSegment
                                                     : DataDelayMode::ZeroWindowResendSynAck;
    cfg.cookie_window = args.window;
    uint32_t server_ip;
    try {
        cfg.key = resolve_key(args.key_hex, args.seed);
        server_ip = parse_ipv4(args.server_ip);
    } catch (const std::exception& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return kExitConfig;
    }
    cfg.run_nonce = mix64(args.seed);
    cfg.normalize();
    EngineShard engine(cfg);

    std::vector<PcapRecord> input;
    try {
        input = read_pcap(args.in_path);
    } catch (const PcapError& e) {
        std::cerr << "cannot read " << args.in_path << ": " << e.what() << "\n";
        return e.kind() == PcapError::Kind::Io ? kExitIo : kExitConfig;
    }

    uint64_t malformed = 0, checksum_failures = 0, emitted = 0;
    try {
        PcapWriter writer(args.out_path);
        for (const PcapRecord& rec : input) {
            uint64_t now = args.clock == "fixed" ? 0 : rec.ts_us;
            for (const Action& a : engine.advance_clock(now)) {
                if (a.kind != Action::Kind::Emit) continue;
                writer.append(now, serialize_segment(a.segment, cfg.mtu));
                ++emitted;
            }
            ParseResult parsed = parse_segment(rec.frame);
            if (!parsed.ok()) {
                ++malformed;
                continue;
            }
            if (args.validate_checksums && !checksums_valid(rec.frame)) {
                ++checksum_failures;
                continue;
            }
            Iface arrived = parsed.segment.key.src_ip == server_ip ? Iface::ServerSide
                                                                   : Iface::ClientSide;
            for (const Action& a : engine.process(parsed.segment, arrived, now)) {
                if (a.kind != Action::Kind::Emit) continue;
                writer.append(now, serialize_segment(a.segment, cfg.mtu));
                ++emitted;
            }
        }
        writer.close();
    } catch (const PcapError& e) {
        std::cerr << "cannot write " << args.out_path << ": " << e.what() << "\n";
        return kExitIo;
    }

    std::ostringstream drops;
    drops << "reason,count,schema=synproxy-drops-v1\n";
    drops << "malformed-frame," << malformed << '\n';
    drops << "checksum-invalid," << checksum_failures << '\n';
    const Counters& c = engine.counters();
    for (std::size_t i = 0; i < static_cast<std::size_t>(DropReason::kCount); ++i)
        drops << to_string(static_cast<DropReason>(i)) << ',' << c.dropped[i] << '\n';
    std::string drops_path =
        args.drops_path.empty() ? args.out_path + ".drops.csv" : args.drops_path;
    if (!write_file(drops_path, drops.str())) {
        std::cerr << "cannot write " << drops_path << "\n";
        return kExitIo;
    }

    std::cout << "processed " << input.size() << " frames, emitted " << emitted
              << ", dropped " << (c.dropped_total() + malformed + checksum_failures) << " ("
              << drops_path << ")\n";
    return kExitOk;
}

// ---- cookie ----

struct CookieArgs {
    std::string key_hex;
    uint64_t seed = 1;
    std::string src = "10.0.0.1";
    std::string dst = "10.1.0.1";
    uint16_t sport = 40000;
    uint16_t dport = 80;
    uint16_t mss = 1460;
    double now_s = 0;
    uint64_t ack = 0;
    uint32_t window = 1;
};

int cmd_cookie(const CookieArgs& args, bool encode) {
    SipKey key;
    FlowKey tuple;
    try {
        key = resolve_key(args.key_hex, args.seed);
        tuple = FlowKey{parse_ipv4(args.src), parse_ipv4(args.dst), args.sport, args.dport};
    } catch (const std::exception& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return kExitConfig;
    }
    MssTable table;
    uint64_t now_us = static_cast<uint64_t>(args.now_s * 1e6);

    if (encode) {
        uint32_t cookie = encode_cookie(key, tuple, now_us, args.mss, table);
        Cookie c = unpack(cookie);
        std::printf("cookie=0x%08x t5=%u mss_idx=%u (mss=%u) hash24=0x%06x\n", cookie, c.t5,
                    c.mss_idx, table[c.mss_idx], c.hash24);
        return kExitOk;
    }
    VerifyResult v = verify_cookie(key, tuple, static_cast<uint32_t>(args.ack), now_us,
                                   args.window, table);
    if (v.ok()) {
        std::printf("ACCEPT %u\n", v.mss);
        return kExitOk;
    }
    std::printf("REJECT %s\n", to_string(v.status));
    return kExitOk;
}

// ---- bench ----

struct BenchArgs {
    std::string strategy = "syncookie";
    uint64_t packets = 1000000;
    std::vector<uint32_t> batches = {64};
    std::vector<uint32_t> shards = {1};
    std::string mix = "syn-only";
    uint64_t seed = 1;
    std::string out_path;
};

int cmd_bench(const BenchArgs& args) {
    auto strategy = strategy_from_string(args.strategy);
    if (!strategy) {
        std::cerr << "unknown strategy: " << args.strategy << "\n";
        return kExitConfig;
    }
    BenchMix mix;
    if (args.mix == "syn-only")
        mix = BenchMix::SynOnly;
    else if (args.mix == "handshake-mix")
        mix = BenchMix::HandshakeMix;
    else {
        std::cerr << "unknown mix: " << args.mix << "\n";
        return kExitConfig;
    }

    std::ostringstream csv;
    csv << bench_csv_header() << '\n';
    for (uint32_t shard_count : args.shards) {
        for (uint32_t batch : args.batches) {
            BenchOptions opts;
            opts.strategy = *strategy;
            opts.mix = mix;
            opts.packets = args.packets;
            opts.batch = batch;
            opts.shards = shard_count;
            opts.seed = args.seed;
            BenchResult r = run_bench(opts);
            csv << bench_csv_row(r) << '\n';
            std::fprintf(stderr, "%s batch=%u shards=%u: %.0f segments/s\n",
                         to_string(r.options.strategy), batch, shard_count, r.segments_per_s);
        }
    }
    if (args.out_path.empty()) {
        std::cout << csv.str();
    } else if (!write_file(args.out_path, csv.str())) {
        std::cerr << "cannot write " << args.out_path << "\n";
        return kExitIo;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SYN-flood mitigation engine: simulator, replay and debug tools"};
    app.require_subcommand(1);

    SimArgs sim;
    CLI::App* sim_cmd = app.add_subcommand("sim", "run a simulated scenario");
    sim_cmd->add_option("-c,--config", sim.config_path, "scenario config file")->required();
    sim_cmd->add_option("--seed", sim.seed, "RNG seed");
    sim_cmd->add_option("--duration", sim.duration_s, "simulated seconds (overrides config)");
    sim_cmd->add_option("-o,--out", sim.out_dir, "output directory");
    sim_cmd->add_option("--set", sim.overrides, "override as section.key=value");

    ReplayArgs replay;
    CLI::App* replay_cmd = app.add_subcommand("replay", "run a pcap through one engine shard");
    replay_cmd->add_option("-i,--in", replay.in_path, "input pcap")->required();
    replay_cmd->add_option("-o,--out", replay.out_path, "output pcap of emitted segments")
        ->required();
    replay_cmd->add_option("--strategy", replay.strategy, "syncookie|authfull|authcookie");
    replay_cmd->add_option("--key", replay.key_hex, "cookie key, 32 hex chars");
    replay_cmd->add_option("--seed", replay.seed, "derive the key from a seed");
    replay_cmd->add_option("--clock", replay.clock, "pcap-timestamps|fixed")
        ->check(CLI::IsMember({"pcap-timestamps", "fixed"}));
    replay_cmd->add_option("--server-ip", replay.server_ip,
                           "frames from this source count as server-side");
    replay_cmd->add_option("--mode", replay.mode, "zero_window|store_first")
        ->check(CLI::IsMember({"zero_window", "store_first"}));
    replay_cmd->add_option("--window", replay.window, "cookie verification window (ticks)");
    replay_cmd->add_flag("--validate-checksums", replay.validate_checksums,
                         "drop frames with invalid checksums");
    replay_cmd->add_option("--drops", replay.drops_path, "drop-count CSV path");

    CLI::App* cookie_cmd = app.add_subcommand("cookie", "encode or verify SYN cookies");
    cookie_cmd->require_subcommand(1);
    CookieArgs cookie;
    CLI::App* enc_cmd = cookie_cmd->add_subcommand("encode", "compute a cookie");
    CLI::App* ver_cmd = cookie_cmd->add_subcommand("verify", "check an acknowledgment number");
    for (CLI::App* c : {enc_cmd, ver_cmd}) {
        c->add_option("--key", cookie.key_hex, "32 hex chars");
        c->add_option("--seed", cookie.seed, "derive the key from a seed");
        c->add_option("--src", cookie.src, "source IPv4");
        c->add_option("--dst", cookie.dst, "destination IPv4");
        c->add_option("--sport", cookie.sport, "source port");
        c->add_option("--dport", cookie.dport, "destination port");
        c->add_option("--now", cookie.now_s, "clock in seconds");
    }
    enc_cmd->add_option("--mss", cookie.mss, "client MSS option");
    ver_cmd->add_option("--ack", cookie.ack, "acknowledgment number from the final ACK")
        ->required();
    ver_cmd->add_option("--window", cookie.window, "accepted previous ticks (0-3)");

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "engine throughput microbenchmark");
    bench_cmd->add_option("--strategy", bench.strategy, "syncookie|authfull|authcookie");
    bench_cmd->add_option("--packets", bench.packets, "synthetic segments per run");
    bench_cmd->add_option("--batch", bench.batches, "batch sizes (repeatable)");
    bench_cmd->add_option("--shards", bench.shards, "shard counts (repeatable)");
    bench_cmd->add_option("--mix", bench.mix, "syn-only|handshake-mix")
        ->check(CLI::IsMember({"syn-only", "handshake-mix"}));
    bench_cmd->add_option("--seed", bench.seed, "RNG seed");
    bench_cmd->add_option("-o,--out", bench.out_path, "CSV output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (sim_cmd->parsed()) return cmd_sim(sim);
        if (replay_cmd->parsed()) return cmd_replay(replay);
        if (cookie_cmd->parsed()) return cmd_cookie(cookie, enc_cmd->parsed());
        if (bench_cmd->parsed()) return cmd_bench(bench);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitConfig;
}
