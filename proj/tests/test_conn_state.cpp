#include "synproxy/conn_state.hpp"

#include "doctest.h"

using namespace synproxy;

namespace {

const FlowKey kFlow{0x0A000001, 0x0A000002, 4000, 80};

ConnEntry established(uint32_t delta) {
    ConnEntry e;
    e.delta = delta;
    e.splice_state = SpliceState::Established;
    return e;
}

Segment seg(uint8_t flags, uint32_t seq, uint32_t ack, std::size_t payload_len = 0) {
    Segment s;
    s.key = kFlow;
    s.flags = flags;
    s.seq = seq;
    s.ack = ack;
    s.payload.resize(payload_len);
    return s;
}

}  // namespace

TEST_CASE("insert, lookup, overwrite") {
    SwapMaps maps(16);
    ConnEntry e = established(4000);
    REQUIRE(maps.insert(kFlow, e));
    ConnEntry* got = maps.lookup(kFlow);
    REQUIRE(got);
    CHECK(got->delta == 4000);

    REQUIRE(maps.insert(kFlow, established(5000)));
    CHECK(maps.lookup(kFlow)->delta == 5000);
    CHECK(maps.size() == 1);
}

TEST_CASE("capacity limit rejects new keys, not overwrites") {
    SwapMaps maps(2);
    CHECK(maps.insert(FlowKey{1, 2, 3, 4}, {}));
    CHECK(maps.insert(FlowKey{1, 2, 3, 5}, {}));
    CHECK(!maps.insert(FlowKey{1, 2, 3, 6}, {}));
    CHECK(maps.insert(FlowKey{1, 2, 3, 4}, established(1)));  // overwrite ok at capacity
}

TEST_CASE("lookup copies history entries up") {
    SwapMaps maps(16);
    maps.insert(kFlow, established(4000));
    maps.swap();  // entry now lives in history only
    CHECK(maps.active_size() == 0);

    ConnEntry* got = maps.lookup(kFlow);
    REQUIRE(got);
    CHECK(got->delta == 4000);  // fields untouched by the move
    CHECK(maps.active_size() == 1);

    // Having been copied up, it survives the next swap.
    maps.swap();
    CHECK(maps.lookup(kFlow) != nullptr);
}

TEST_CASE("absent key leaves maps unchanged") {
    SwapMaps maps(16);
    maps.insert(kFlow, {});
    CHECK(maps.lookup(FlowKey{9, 9, 9, 9}) == nullptr);
    CHECK(maps.size() == 1);
}

TEST_CASE("two idle swaps discard an entry") {
    SwapMaps maps(16);
    maps.insert(kFlow, {});
    CHECK(maps.swap() == 0);  // history was empty
    CHECK(maps.swap() == 1);  // the idle entry goes
    CHECK(maps.lookup(kFlow) == nullptr);
    CHECK(maps.swap() == 0);
}

TEST_CASE("remove erases from either map") {
    SwapMaps maps(16);
    maps.insert(kFlow, {});
    CHECK(maps.remove(kFlow));
    CHECK(maps.lookup(kFlow) == nullptr);
    CHECK(!maps.remove(kFlow));

    maps.insert(kFlow, {});
    maps.swap();  // history-resident
    CHECK(maps.remove(kFlow));
    CHECK(maps.size() == 0);
}

TEST_CASE("retention property over a 10-period schedule") {
    SwapMaps maps(1024);
    FlowKey hot{1, 1, 1, 1};
    FlowKey cold{2, 2, 2, 2};
    maps.insert(hot, {});
    maps.insert(cold, {});
    for (int period = 1; period <= 10; ++period) {
        maps.swap();
        CHECK(maps.lookup(hot) != nullptr);
    }
    CHECK(maps.lookup(cold) == nullptr);
}

TEST_CASE("durable payload fits 64 bits") {
    ConnEntry e = established(0xFFFFFFFF);
    e.fin_client_seen = e.fin_client_acked = e.fin_server_seen = e.fin_server_acked = true;
    e.rst_seen = true;
    CHECK(e.packed_core() == 0x3FFFFFFFFFULL);  // 38 bits used
    CHECK((e.packed_core() >> 38) == 0);
}

TEST_CASE("teardown: RST terminates immediately") {
    auto r = track_teardown(established(0), seg(tcpflag::kRst, 1, 0), Direction::ClientToServer);
    CHECK(r.terminate);
    CHECK(r.entry.rst_seen);

    auto r2 =
        track_teardown(established(0), seg(tcpflag::kRst | tcpflag::kAck, 1, 0),
                       Direction::ServerToClient);
    CHECK(r2.terminate);
}

TEST_CASE("teardown: four-way close") {
    // delta = 4000: server sequence space runs 4000 above what the
    // client sees. Client FIN at seq 1000; server FIN at (raw) 9000.
    ConnEntry e = established(4000);

    // client FIN
    auto r1 = track_teardown(e, seg(tcpflag::kFin | tcpflag::kAck, 1000, 5001),
                             Direction::ClientToServer);
    CHECK(!r1.terminate);
    CHECK(r1.entry.fin_client_seen);
    CHECK(!r1.entry.fin_client_acked);

    // server ACKs the FIN (ack = 1001 > fin seq 1000)
    auto r2 = track_teardown(r1.entry, seg(tcpflag::kAck, 9000, 1001),
                             Direction::ServerToClient);
    CHECK(!r2.terminate);
    CHECK(r2.entry.fin_client_acked);

    // server FIN at raw seq 9000
    auto r3 = track_teardown(r2.entry, seg(tcpflag::kFin | tcpflag::kAck, 9000, 1001),
                             Direction::ServerToClient);
    CHECK(!r3.terminate);
    CHECK(r3.entry.fin_server_seen);

    // client ACKs: client-space ack 5001 lifts to 9001 > 9000
    auto r4 =
        track_teardown(r3.entry, seg(tcpflag::kAck, 1001, 5001), Direction::ClientToServer);
    CHECK(r4.terminate);
}

TEST_CASE("teardown: one-sided FIN does not terminate") {
    auto r = track_teardown(established(0), seg(tcpflag::kFin | tcpflag::kAck, 10, 20),
                            Direction::ClientToServer);
    auto r2 = track_teardown(r.entry, seg(tcpflag::kAck, 20, 11), Direction::ServerToClient);
    CHECK(!r2.terminate);
    CHECK(r2.entry.fin_client_acked);
    CHECK(!r2.entry.fin_server_seen);
}

TEST_CASE("teardown: stale ack does not acknowledge a FIN") {
    ConnEntry e = established(0);
    auto r1 = track_teardown(e, seg(tcpflag::kFin | tcpflag::kAck, 1000, 500),
                             Direction::ClientToServer);
    // Old duplicate ack (1000, not > 1000): FIN not yet acknowledged.
    auto r2 = track_teardown(r1.entry, seg(tcpflag::kAck, 500, 1000),
                             Direction::ServerToClient);
    CHECK(!r2.entry.fin_client_acked);
}

TEST_CASE("teardown: FIN after payload occupies the post-data sequence number") {
    ConnEntry e = established(0);
    // FIN with 100 payload bytes starting at seq 1000: FIN sits at 1100.
    auto r1 = track_teardown(e, seg(tcpflag::kFin | tcpflag::kAck, 1000, 500, 100),
                             Direction::ClientToServer);
    CHECK(r1.entry.fin_client_seq == 1100);
    auto r2 = track_teardown(r1.entry, seg(tcpflag::kAck, 500, 1100),
                             Direction::ServerToClient);
    CHECK(!r2.entry.fin_client_acked);  // acks only the data
    auto r3 = track_teardown(r2.entry, seg(tcpflag::kAck, 500, 1101),
                             Direction::ServerToClient);
    CHECK(r3.entry.fin_client_acked);
}
