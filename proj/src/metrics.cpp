#include "synproxy/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace synproxy {

namespace {

uint64_t percentile(const std::vector<uint64_t>& sorted, double q) {
    if (sorted.empty()) return 0;
    std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
    return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

LatencyStats LatencyRecorder::stats() const {
    LatencyStats s;
    if (samples_.empty()) return s;
    std::vector<uint64_t> sorted = samples_;
    std::sort(sorted.begin(), sorted.end());
    s.count = sorted.size();
    s.p50_us = percentile(sorted, 0.50);
    s.p90_us = percentile(sorted, 0.90);
    s.p99_us = percentile(sorted, 0.99);
    s.p999_us = percentile(sorted, 0.999);
    s.max_us = sorted.back();
    return s;
}

std::vector<LatencyRecorder::Bucket> LatencyRecorder::histogram() const {
    std::vector<uint64_t> counts(64, 0);
    int top = -1;
    for (uint64_t v : samples_) {
        int b = v == 0 ? 0 : std::bit_width(v);
        counts[b]++;
        top = std::max(top, b);
    }
    std::vector<Bucket> out;
    for (int b = 0; b <= top; ++b) {
        uint64_t lo = b == 0 ? 0 : uint64_t{1} << (b - 1);
        uint64_t hi = uint64_t{1} << b;
        out.push_back({lo, hi, counts[b]});
    }
    return out;
}

void MetricsReport::put(const std::string& metric, uint64_t v) {
    rows.emplace_back(metric, std::to_string(v));
}

void MetricsReport::put(const std::string& metric, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    rows.emplace_back(metric, buf);
}

void MetricsReport::put(const std::string& metric, const std::string& v) {
    rows.emplace_back(metric, v);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "metric,value,schema=synproxy-metrics-v1\n";
    for (const auto& [k, v] : rows) os << k << ',' << v << '\n';
    return os.str();
}

std::string MetricsReport::histogram_csv() const {
    std::ostringstream os;
    os << "series,bucket_lo_us,bucket_hi_us,count,schema=synproxy-latency-hist-v1\n";
    auto emit = [&](const char* name, const LatencyRecorder& rec) {
        for (const auto& b : rec.histogram())
            os << name << ',' << b.lo_us << ',' << b.hi_us << ',' << b.count << '\n';
    };
    emit("conn_setup", conn_setup);
    emit("request", request);
    return os.str();
}

std::string MetricsReport::summary() const {
    std::ostringstream os;
    for (const auto& [k, v] : rows) {
        os.width(40);
        os << std::left << k;
        os << ' ' << v << '\n';
    }
    return os.str();
}

double MetricsReport::value(const std::string& metric) const {
    for (const auto& [k, v] : rows)
        if (k == metric) return std::stod(v);
    throw std::out_of_range("no metric named " + metric);
}

}  // namespace synproxy
