#include "synproxy/config.hpp"

#include <fstream>
#include <sstream>

namespace synproxy {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Typed view over an IniDoc that records which keys were read, so
// leftovers can be flagged as unknown.
class Loader {
  public:
    explicit Loader(const IniDoc& doc) : doc_(doc) {}

    std::string where(const std::string& s, const std::string& k) const { return s + "." + k; }

    std::optional<std::string> raw(const std::string& s, const std::string& k) {
        known_.insert(where(s, k));
        return doc_.get(s, k);
    }

    std::string str(const std::string& s, const std::string& k, const std::string& dflt) {
        return raw(s, k).value_or(dflt);
    }

    uint64_t u64(const std::string& s, const std::string& k, uint64_t dflt) {
        auto v = raw(s, k);
        if (!v) return dflt;
        try {
            std::size_t pos = 0;
            uint64_t out = std::stoull(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(where(s, k) + ": expected an unsigned integer, got '" + *v + "'");
        }
    }

    double num(const std::string& s, const std::string& k, double dflt) {
        auto v = raw(s, k);
        if (!v) return dflt;
        try {
            std::size_t pos = 0;
            double out = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(where(s, k) + ": expected a number, got '" + *v + "'");
        }
    }

    bool boolean(const std::string& s, const std::string& k, bool dflt) {
        auto v = raw(s, k);
        if (!v) return dflt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError(where(s, k) + ": expected true/false, got '" + *v + "'");
    }

    uint32_t ip(const std::string& s, const std::string& k, uint32_t dflt) {
        auto v = raw(s, k);
        if (!v) return dflt;
        try {
            return parse_ipv4(*v);
        } catch (const std::exception&) {
            throw ConfigError(where(s, k) + ": expected an IPv4 address, got '" + *v + "'");
        }
    }

    // "lo-hi" pair of IPv4 addresses or ports.
    template <typename T, typename Parse>
    std::pair<T, T> range(const std::string& s, const std::string& k, std::pair<T, T> dflt,
                          Parse parse) {
        auto v = raw(s, k);
        if (!v) return dflt;
        std::size_t dash = v->find('-');
        if (dash == std::string::npos)
            throw ConfigError(where(s, k) + ": expected 'lo-hi', got '" + *v + "'");
        try {
            T lo = parse(trim(v->substr(0, dash)));
            T hi = parse(trim(v->substr(dash + 1)));
            return {lo, hi};
        } catch (const std::exception&) {
            throw ConfigError(where(s, k) + ": malformed range '" + *v + "'");
        }
    }

    std::vector<uint64_t> u64_list(const std::string& s, const std::string& k,
                                   std::vector<uint64_t> dflt) {
        auto v = raw(s, k);
        if (!v) return dflt;
        std::vector<uint64_t> out;
        std::stringstream ss(*v);
        std::string piece;
        while (std::getline(ss, piece, ',')) {
            piece = trim(piece);
            try {
                out.push_back(std::stoull(piece));
            } catch (const std::exception&) {
                throw ConfigError(where(s, k) + ": malformed list element '" + piece + "'");
            }
        }
        if (out.empty()) throw ConfigError(where(s, k) + ": empty list");
        return out;
    }

    void finish() const {
        auto unknown = doc_.unknown_keys(known_);
        if (!unknown.empty()) throw ConfigError("unknown config key: " + unknown.front());
    }

  private:
    const IniDoc& doc_;
    std::set<std::string> known_;
};

uint64_t seconds_to_us(double s) { return static_cast<uint64_t>(s * 1e6 + 0.5); }

}  // namespace

IniDoc IniDoc::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

IniDoc IniDoc::parse_string(const std::string& text) {
    IniDoc doc;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.resize(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                              "' outside any [section]");
        doc.sections_[section][key] = value;
    }
    return doc;
}

void IniDoc::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

void IniDoc::set_dotted(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be section.key=value: " + assignment);
    std::string path = trim(assignment.substr(0, eq));
    std::size_t dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
        throw ConfigError("override must be section.key=value: " + assignment);
    set(path.substr(0, dot), path.substr(dot + 1), trim(assignment.substr(eq + 1)));
}

std::optional<std::string> IniDoc::get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

std::vector<std::string> IniDoc::unknown_keys(const std::set<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [section, kv] : sections_)
        for (const auto& [key, value] : kv)
            if (!known.count(section + "." + key)) out.push_back(section + "." + key);
    return out;
}

ScenarioConfig load_scenario(const IniDoc& doc) {
    Loader ld(doc);
    ScenarioConfig cfg;

    // [engine]
    {
        std::string strat = ld.str("engine", "strategy", "syncookie");
        if (strat == "none") {
            cfg.topology.proxy = false;
        } else if (auto s = strategy_from_string(strat)) {
            cfg.engine.strategy = *s;
        } else {
            throw ConfigError("engine.strategy: unknown strategy '" + strat + "'");
        }
        std::string mode = ld.str("engine", "data_delay_mode", "zero_window");
        if (mode == "zero_window")
            cfg.engine.data_delay_mode = DataDelayMode::ZeroWindowResendSynAck;
        else if (mode == "store_first")
            cfg.engine.data_delay_mode = DataDelayMode::StoreFirstSegment;
        else
            throw ConfigError("engine.data_delay_mode: expected zero_window|store_first");
        cfg.engine.cookie_window = static_cast<uint32_t>(ld.u64("engine", "cookie_window", 1));
        if (cfg.engine.cookie_window > 3)
            throw ConfigError("engine.cookie_window: must be 0..3");
        cfg.engine.shard_count = static_cast<uint32_t>(ld.u64("engine", "shard_count", 1));
        cfg.engine.mtu = ld.u64("engine", "mtu", kDefaultMtu);
        cfg.engine.default_window =
            static_cast<uint16_t>(ld.u64("engine", "default_window", 65535));
        cfg.engine.ttl = static_cast<uint8_t>(ld.u64("engine", "ttl", 64));
        cfg.engine.batch_size = static_cast<uint32_t>(ld.u64("engine", "batch_size", 64));
        if (auto hex = ld.raw("engine", "key")) {
            try {
                cfg.explicit_key = SipKey::from_hex(*hex);
            } catch (const std::exception& e) {
                throw ConfigError(std::string("engine.key: ") + e.what());
            }
        }
        if (auto list = ld.raw("engine", "mss_table")) {
            auto values = ld.u64_list("engine", "mss_table", {});
            if (values.size() != MssTable::kSize)
                throw ConfigError("engine.mss_table: need exactly 8 values");
            std::array<uint16_t, MssTable::kSize> arr;
            for (std::size_t i = 0; i < arr.size(); ++i)
                arr[i] = static_cast<uint16_t>(values[i]);
            try {
                cfg.engine.mss_table = MssTable(arr);
            } catch (const std::exception& e) {
                throw ConfigError(std::string("engine.mss_table: ") + e.what());
            }
        }
    }

    // [whitelist]
    {
        std::string g = ld.str("whitelist", "granularity", "per-ip");
        if (g == "per-ip")
            cfg.engine.whitelist_granularity = WhitelistGranularity::PerSourceIp;
        else if (g == "per-flow")
            cfg.engine.whitelist_granularity = WhitelistGranularity::PerFlow;
        else
            throw ConfigError("whitelist.granularity: expected per-ip|per-flow");
        cfg.engine.whitelist_mask_bits =
            static_cast<uint32_t>(ld.u64("whitelist", "mask_bits", 20));
        if (cfg.engine.whitelist_mask_bits < 1 || cfg.engine.whitelist_mask_bits > 32)
            throw ConfigError("whitelist.mask_bits: must be 1..32");
        cfg.engine.whitelist_sweep_period_us =
            seconds_to_us(ld.num("whitelist", "sweep_period_s", 60));
    }

    // [conn]
    cfg.engine.conn_swap_period_us = seconds_to_us(ld.num("conn", "swap_period_s", 60));
    cfg.engine.conn_capacity = ld.u64("conn", "capacity", 1u << 20);

    // [topology]
    {
        cfg.topology.proxy = ld.boolean("topology", "proxy", cfg.topology.proxy);
        cfg.topology.client_link.delay_us = ld.u64("topology", "client_delay_us", 50);
        cfg.topology.client_link.jitter_us = ld.u64("topology", "client_jitter_us", 0);
        cfg.topology.client_link.loss = ld.num("topology", "client_loss", 0.0);
        cfg.topology.server_link.delay_us = ld.u64("topology", "server_delay_us", 50);
        cfg.topology.server_link.jitter_us = ld.u64("topology", "server_jitter_us", 0);
        cfg.topology.server_link.loss = ld.num("topology", "server_loss", 0.0);
    }

    // [clients]
    {
        auto& c = cfg.clients;
        c.parallel_connections =
            static_cast<uint32_t>(ld.u64("clients", "parallel_connections", 10));
        c.request_rate = ld.num("clients", "request_rate", 100.0);
        c.start_delay_us = seconds_to_us(ld.num("clients", "start_delay_s", 0.0));
        c.request_size = static_cast<uint32_t>(ld.u64("clients", "request_size", 64));
        c.response_size = static_cast<uint32_t>(ld.u64("clients", "response_size", 1024));
        c.data_retransmit_timeout_us =
            seconds_to_us(ld.num("clients", "data_retransmit_timeout_ms", 200) / 1000.0);
        auto sched = ld.u64_list("clients", "syn_retransmit_schedule_s", {1, 2, 4});
        c.syn_retransmit_schedule_us.clear();
        for (uint64_t s : sched) c.syn_retransmit_schedule_us.push_back(s * 1000000ULL);
        c.app_retry_on_rst = ld.boolean("clients", "app_retry_on_rst", true);
        c.request_deadline_us =
            seconds_to_us(ld.num("clients", "request_deadline_ms", 2000) / 1000.0);
        c.ip_base = ld.ip("clients", "ip_base", c.ip_base);
        c.first_port = static_cast<uint16_t>(ld.u64("clients", "first_port", 40000));
    }

    // [attacker]
    {
        auto& a = cfg.attacker;
        a.syn_flood_rate = ld.num("attacker", "syn_flood_rate", 0.0);
        a.ack_flood_rate = ld.num("attacker", "ack_flood_rate", 0.0);
        a.rst_flood_rate = ld.num("attacker", "rst_flood_rate", 0.0);
        auto ips = ld.range<uint32_t>("attacker", "spoof_ip_range",
                                      {a.spoof_ip_lo, a.spoof_ip_hi},
                                      [](const std::string& s) { return parse_ipv4(s); });
        a.spoof_ip_lo = ips.first;
        a.spoof_ip_hi = ips.second;
        auto ports = ld.range<uint16_t>(
            "attacker", "spoof_port_range", {a.spoof_port_lo, a.spoof_port_hi},
            [](const std::string& s) { return static_cast<uint16_t>(std::stoul(s)); });
        a.spoof_port_lo = ports.first;
        a.spoof_port_hi = ports.second;
    }

    // [server]
    {
        auto& s = cfg.server;
        s.ip = ld.ip("server", "ip", s.ip);
        s.port = static_cast<uint16_t>(ld.u64("server", "port", 80));
        s.backlog_capacity = static_cast<uint32_t>(ld.u64("server", "backlog_capacity", 256));
        std::string policy = ld.str("server", "backlog_policy", "drop-new");
        if (policy == "drop-new")
            s.backlog_policy = BacklogPolicy::DropNew;
        else if (policy == "evict-oldest")
            s.backlog_policy = BacklogPolicy::EvictOldest;
        else
            throw ConfigError("server.backlog_policy: expected drop-new|evict-oldest");
        s.synack_retries = static_cast<uint32_t>(ld.u64("server", "synack_retries", 5));
        s.synack_timeout_us = seconds_to_us(ld.num("server", "synack_timeout_s", 1.0));
        s.service_time_us = ld.u64("server", "service_time_us", 100);
    }

    // [engine_capacity]
    cfg.capacity.ops_per_second = ld.num("engine_capacity", "ops_per_second", 0.0);

    // [sim]
    cfg.duration_us = seconds_to_us(ld.num("sim", "duration_s", 10.0));
    cfg.drain_us = seconds_to_us(ld.num("sim", "drain_s", 5.0));

    ld.finish();
    cfg.engine.normalize();
    cfg.validate();
    return cfg;
}

void ScenarioConfig::validate() const {
    auto bad = [](const std::string& msg) { throw ConfigError(msg); };

    if (attacker.syn_flood_rate < 0 || attacker.ack_flood_rate < 0 ||
        attacker.rst_flood_rate < 0)
        bad("attacker.*_flood_rate: rates must be >= 0");
    if (clients.request_rate < 0) bad("clients.request_rate: must be >= 0");
    if (capacity.ops_per_second < 0) bad("engine_capacity.ops_per_second: must be >= 0");
    for (const LinkConfig* l : {&topology.client_link, &topology.server_link}) {
        if (l->loss < 0.0 || l->loss > 1.0) bad("topology.*_loss: must be within [0, 1]");
        if (l->jitter_us > l->delay_us) bad("topology.*_jitter_us: must not exceed the delay");
    }
    if (attacker.spoof_ip_lo > attacker.spoof_ip_hi)
        bad("attacker.spoof_ip_range: lo exceeds hi");
    if (attacker.spoof_port_lo > attacker.spoof_port_hi)
        bad("attacker.spoof_port_range: lo exceeds hi");
    if (clients.request_rate > 0 && clients.parallel_connections == 0)
        bad("clients.parallel_connections: must be >= 1 when requests are issued");
    if (clients.request_size == 0 || clients.request_size > 1400)
        bad("clients.request_size: must be 1..1400 (single-segment payloads)");
    if (clients.response_size == 0 || clients.response_size > 1400)
        bad("clients.response_size: must be 1..1400 (single-segment payloads)");
    if (clients.syn_retransmit_schedule_us.empty())
        bad("clients.syn_retransmit_schedule_s: must not be empty");
    if (duration_us == 0) bad("sim.duration_s: must be > 0");

    // Attacker-received accounting at the server relies on disjoint
    // address pools.
    if (clients.parallel_connections > 0) {
        uint32_t client_lo = clients.ip_base;
        uint32_t client_hi = clients.ip_base + clients.parallel_connections - 1;
        if (attacker.active() && client_hi >= attacker.spoof_ip_lo &&
            attacker.spoof_ip_hi >= client_lo)
            bad("attacker.spoof_ip_range: overlaps clients.ip_base range");
        if (server.ip >= client_lo && server.ip <= client_hi)
            bad("server.ip: collides with clients.ip_base range");
    }
    if (attacker.owns_ip(server.ip)) bad("attacker.spoof_ip_range: contains server.ip");
    if (server.backlog_capacity == 0) bad("server.backlog_capacity: must be >= 1");
}

}  // namespace synproxy
