// Scenario/engine configuration: a small [section] key = value format
// with typed accessors, range validation and unknown-key detection. The
// full schema is documented in the README; every value can also be
// overridden from the command line as section.key=value.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "synproxy/engine.hpp"

namespace synproxy {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IniDoc {
  public:
    static IniDoc parse_file(const std::string& path);    // throws ConfigError
    static IniDoc parse_string(const std::string& text);  // throws ConfigError

    void set(const std::string& section, const std::string& key, const std::string& value);
    // "section.key=value" form, used for CLI overrides.
    void set_dotted(const std::string& assignment);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::vector<std::string> unknown_keys(const std::set<std::string>& known) const;

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class BacklogPolicy { DropNew, EvictOldest };

struct LinkConfig {
    uint64_t delay_us = 50;
    uint64_t jitter_us = 0;
    double loss = 0.0;
};

struct TopologyConfig {
    bool proxy = true;
    LinkConfig client_link;  // loadgen/attacker <-> proxy (or server when proxy=false)
    LinkConfig server_link;  // proxy <-> server
};

struct ClientsConfig {
    uint32_t parallel_connections = 10;
    double request_rate = 100.0;  // requests/s across the fleet
    uint64_t start_delay_us = 0;  // lets an attack saturate first
    uint32_t request_size = 64;
    uint32_t response_size = 1024;
    uint64_t data_retransmit_timeout_us = 200000;
    std::vector<uint64_t> syn_retransmit_schedule_us = {1000000, 2000000, 4000000};
    bool app_retry_on_rst = true;
    uint64_t request_deadline_us = 2000000;
    uint32_t ip_base = 0x0A00000A;  // 10.0.0.10, one address per connection slot
    uint16_t first_port = 40000;
};

struct AttackerConfig {
    double syn_flood_rate = 0.0;  // packets/s
    double ack_flood_rate = 0.0;
    double rst_flood_rate = 0.0;
    uint32_t spoof_ip_lo = 0xAC100000;  // 172.16.0.0
    uint32_t spoof_ip_hi = 0xAC10FFFF;  // 172.16.255.255
    uint16_t spoof_port_lo = 1024;
    uint16_t spoof_port_hi = 65535;

    bool active() const { return syn_flood_rate > 0 || ack_flood_rate > 0 || rst_flood_rate > 0; }
    bool owns_ip(uint32_t ip) const { return ip >= spoof_ip_lo && ip <= spoof_ip_hi; }
};

struct ServerConfig {
    uint32_t ip = 0x0A010001;  // 10.1.0.1
    uint16_t port = 80;
    uint32_t backlog_capacity = 256;
    BacklogPolicy backlog_policy = BacklogPolicy::DropNew;
    uint32_t synack_retries = 5;
    uint64_t synack_timeout_us = 1000000;  // initial, doubling per retry
    uint64_t service_time_us = 100;
};

struct CapacityConfig {
    double ops_per_second = 0.0;  // 0 = unlimited
};

struct ScenarioConfig {
    EngineConfig engine;
    std::optional<SipKey> explicit_key;  // otherwise derived from the run seed
    TopologyConfig topology;
    ClientsConfig clients;
    AttackerConfig attacker;
    ServerConfig server;
    CapacityConfig capacity;
    uint64_t duration_us = 10 * 1000000ULL;
    uint64_t drain_us = 5 * 1000000ULL;

    void validate() const;  // throws ConfigError
};

ScenarioConfig load_scenario(const IniDoc& doc);  // throws ConfigError

}  // namespace synproxy
