// In-memory throughput benchmark: synthetic segments driven straight
// through engine shards, one thread per shard, no simulator clock. The
// numbers reflect processing cost only.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synproxy/engine.hpp"

namespace synproxy {

enum class BenchMix { SynOnly, HandshakeMix };

struct BenchOptions {
    Strategy strategy = Strategy::SynCookie;
    BenchMix mix = BenchMix::SynOnly;
    uint64_t packets = 1000000;
    uint32_t batch = 64;
    uint32_t shards = 1;
    uint64_t seed = 1;
};

struct BenchResult {
    BenchOptions options;
    double seconds = 0;
    double segments_per_s = 0;
    std::vector<double> per_shard_segments_per_s;
    uint64_t hash_invocations = 0;
    uint64_t emitted = 0;
    uint64_t dropped = 0;
};

BenchResult run_bench(const BenchOptions& opts);

std::string bench_csv_header();  // schema synproxy-bench-v1
std::string bench_csv_row(const BenchResult& r);

const char* to_string(BenchMix m);

}  // namespace synproxy
