#include "synproxy/config.hpp"

#include "doctest.h"

using namespace synproxy;

namespace {

const char* kSample = R"(
# quickstart-style scenario
[engine]
strategy = authcookie
cookie_window = 2

[whitelist]
granularity = per-ip
mask_bits = 16
sweep_period_s = 30

[conn]
swap_period_s = 45
capacity = 4096

[topology]
client_delay_us = 50
server_delay_us = 50
client_loss = 0.01

[clients]
parallel_connections = 4
request_rate = 50
request_size = 100
response_size = 1000

[attacker]
syn_flood_rate = 1000
spoof_ip_range = 172.16.0.0-172.16.0.255

[server]
ip = 10.1.0.1
backlog_capacity = 128
backlog_policy = evict-oldest

[engine_capacity]
ops_per_second = 5000

[sim]
duration_s = 2
)";

}  // namespace

TEST_CASE("scenario config parses with typed values") {
    ScenarioConfig cfg = load_scenario(IniDoc::parse_string(kSample));
    CHECK(cfg.engine.strategy == Strategy::AuthCookie);
    CHECK(cfg.engine.cookie_window == 2);
    CHECK(cfg.engine.whitelist_mask_bits == 16);
    CHECK(cfg.engine.whitelist_sweep_period_us == 30000000);
    CHECK(cfg.engine.conn_swap_period_us == 45000000);
    CHECK(cfg.engine.conn_capacity == 4096);
    CHECK(cfg.topology.client_link.loss == doctest::Approx(0.01));
    CHECK(cfg.clients.parallel_connections == 4);
    CHECK(cfg.attacker.syn_flood_rate == doctest::Approx(1000));
    CHECK(cfg.attacker.spoof_ip_lo == parse_ipv4("172.16.0.0"));
    CHECK(cfg.attacker.spoof_ip_hi == parse_ipv4("172.16.0.255"));
    CHECK(cfg.server.backlog_policy == BacklogPolicy::EvictOldest);
    CHECK(cfg.capacity.ops_per_second == doctest::Approx(5000));
    CHECK(cfg.duration_us == 2000000);
    // auth + per-ip whitelist forces source-ip sharding
    CHECK(cfg.engine.shard_key == ShardKey::SourceIp);
}

TEST_CASE("defaults load from an empty document") {
    ScenarioConfig cfg = load_scenario(IniDoc::parse_string(""));
    CHECK(cfg.engine.strategy == Strategy::SynCookie);
    CHECK(cfg.engine.shard_key == ShardKey::FourTuple);
    CHECK(cfg.topology.proxy);
    CHECK(cfg.clients.syn_retransmit_schedule_us ==
          std::vector<uint64_t>{1000000, 2000000, 4000000});
    CHECK(cfg.duration_us == 10000000);
}

TEST_CASE("diagnostics name the offending key") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            load_scenario(IniDoc::parse_string(text));
            FAIL("expected ConfigError for: " << text);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    expect_error("[engine]\nstrategy = frobnicate\n", "engine.strategy");
    expect_error("[engine]\ncookie_window = 9\n", "engine.cookie_window");
    expect_error("[clients]\nrequest_rate = fast\n", "clients.request_rate");
    expect_error("[whitelist]\nmask_bits = 64\n", "whitelist.mask_bits");
    expect_error("[attacker]\nspoof_ip_range = 10.0.0.9\n", "attacker.spoof_ip_range");
    expect_error("[topology]\nclient_loss = 1.5\n", "loss");
    expect_error("[server]\nbacklog_policy = lifo\n", "server.backlog_policy");
    expect_error("[engine]\nstrateggy = syncookie\n", "engine.strateggy");  // unknown key
    expect_error("[clients]\nrequest_size = 5000\n", "clients.request_size");
}

TEST_CASE("overlapping attacker and client pools are rejected") {
    const char* text = R"(
[attacker]
syn_flood_rate = 10
spoof_ip_range = 10.0.0.0-10.0.0.255
)";
    CHECK_THROWS_AS(load_scenario(IniDoc::parse_string(text)), ConfigError);
}

TEST_CASE("dotted overrides") {
    IniDoc doc = IniDoc::parse_string(kSample);
    doc.set_dotted("engine.strategy=syncookie");
    doc.set_dotted("sim.duration_s = 7");
    ScenarioConfig cfg = load_scenario(doc);
    CHECK(cfg.engine.strategy == Strategy::SynCookie);
    CHECK(cfg.duration_us == 7000000);
    CHECK_THROWS_AS(doc.set_dotted("no-dots-here"), ConfigError);
}

TEST_CASE("ini syntax errors carry line numbers") {
    try {
        IniDoc::parse_string("[engine]\nstrategy syncookie\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(IniDoc::parse_string("key = value\n"), ConfigError);
    CHECK_THROWS_AS(IniDoc::parse_string("[open\n"), ConfigError);
}

TEST_CASE("explicit engine key is honored") {
    ScenarioConfig cfg = load_scenario(
        IniDoc::parse_string("[engine]\nkey = 000102030405060708090a0b0c0d0e0f\n"));
    REQUIRE(cfg.explicit_key.has_value());
    CHECK(*cfg.explicit_key == SipKey::from_hex("000102030405060708090a0b0c0d0e0f"));
}
