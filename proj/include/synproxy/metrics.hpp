// Scenario metrics: counters, latency percentiles and CSV rendering.
// Output must be byte-stable for a fixed (config, seed), so numbers are
// formatted with fixed precision and rows are emitted in a fixed order.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace synproxy {

struct LatencyStats {
    uint64_t count = 0;
    uint64_t p50_us = 0;
    uint64_t p90_us = 0;
    uint64_t p99_us = 0;
    uint64_t p999_us = 0;
    uint64_t max_us = 0;
};

// Exact percentiles via sort; fine at desk scale.
class LatencyRecorder {
  public:
    void record(uint64_t us) { samples_.push_back(us); }
    LatencyStats stats() const;

    // log2 buckets: (lo_us, hi_us, count), hi exclusive.
    struct Bucket {
        uint64_t lo_us;
        uint64_t hi_us;
        uint64_t count;
    };
    std::vector<Bucket> histogram() const;

    const std::vector<uint64_t>& samples() const { return samples_; }

  private:
    std::vector<uint64_t> samples_;
};

struct MetricsReport {
    // Ordered metric -> value rows; values pre-formatted.
    std::vector<std::pair<std::string, std::string>> rows;
    LatencyRecorder conn_setup;
    LatencyRecorder request;

    void put(const std::string& metric, uint64_t v);
    void put(const std::string& metric, double v);  // fixed 6-digit precision
    void put(const std::string& metric, const std::string& v);

    std::string to_csv() const;         // schema synproxy-metrics-v1
    std::string histogram_csv() const;  // schema synproxy-latency-hist-v1
    std::string summary() const;        // human-readable digest

    // Convenience for tests: numeric value of a row (throws if absent).
    double value(const std::string& metric) const;
};

}  // namespace synproxy
