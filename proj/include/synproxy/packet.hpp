// Ethernet II / IPv4 / TCP segment model: parsing, construction and
// bit-exact serialization with software checksums.
//
// Wire layout handled here:
//   [Ethernet 14B][IPv4 20B, no options][TCP 20-60B][payload]
//
// IPv4 only, no fragments, no VLAN tags. Frames that violate any of
// those are MalformedFrame; the caller decides the drop policy.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace synproxy {

using MacAddr = std::array<uint8_t, 6>;

constexpr std::size_t kDefaultMtu = 1514;  // Ethernet header + 1500

namespace tcpflag {
constexpr uint8_t kFin = 0x01;
constexpr uint8_t kSyn = 0x02;
constexpr uint8_t kRst = 0x04;
constexpr uint8_t kPsh = 0x08;
constexpr uint8_t kAck = 0x10;
constexpr uint8_t kUrg = 0x20;
}  // namespace tcpflag

// TCP connection 4-tuple in packet direction. src/dst are distinct
// roles: hashing and equality are order-sensitive.
struct FlowKey {
    uint32_t src_ip = 0;   // host byte order
    uint32_t dst_ip = 0;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;

    FlowKey reversed() const { return FlowKey{dst_ip, src_ip, dst_port, src_port}; }
    bool operator==(const FlowKey&) const = default;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept;
};

// Parsed TCP options. Known kinds are lifted into typed fields; anything
// else is preserved as raw TLVs in `unknown`. `wire` holds the original
// option bytes only when they differ from the canonical re-encoding of
// the parsed fields, so unmodified options always serialize back
// byte-for-byte while freshly built segments stay canonical.
struct TcpOptions {
    std::optional<uint16_t> mss;
    bool sack_permitted = false;
    std::optional<uint8_t> window_scale;
    std::optional<std::pair<uint32_t, uint32_t>> timestamp;
    std::vector<uint8_t> unknown;
    std::vector<uint8_t> wire;

    // Edits go through setters: they drop `wire` so the next encode
    // re-canonicalizes (unknown TLVs are still carried).
    void set_mss(std::optional<uint16_t> v) {
        mss = v;
        wire.clear();
    }

    std::vector<uint8_t> encode() const;
    bool operator==(const TcpOptions&) const = default;
};

struct Segment {
    MacAddr eth_src{};
    MacAddr eth_dst{};
    FlowKey key;
    uint32_t seq = 0;
    uint32_t ack = 0;
    uint8_t flags = 0;
    uint16_t window = 0;
    uint8_t ttl = 64;
    TcpOptions options;
    std::vector<uint8_t> payload;

    bool has(uint8_t mask) const { return (flags & mask) == mask; }
    bool operator==(const Segment&) const = default;
};

enum class ParseError {
    None,
    TooShort,           // below any legal frame size, or data runs out mid-header
    NotIpv4,            // ethertype != 0x0800 or IP version != 4
    NotTcp,             // IP protocol != 6
    Fragmented,         // MF set or fragment offset != 0
    BadHeaderLength,    // ihl/data-offset/total-length fields inconsistent
    BadOptions,         // TCP option TLV runs past the header
};

const char* to_string(ParseError e);

struct ParseResult {
    Segment segment;
    ParseError error = ParseError::None;

    bool ok() const { return error == ParseError::None; }
};

class OversizeSegment : public std::runtime_error {
  public:
    explicit OversizeSegment(std::size_t size, std::size_t mtu);
};

// One's-complement Internet checksum. Odd-length input is padded with a
// zero byte; empty input yields 0xFFFF.
uint16_t internet_checksum(std::span<const uint8_t> data);

ParseResult parse_segment(std::span<const uint8_t> frame);

// Serializes with freshly computed IPv4 and TCP checksums. Throws
// OversizeSegment when the frame would exceed `mtu`.
std::vector<uint8_t> serialize_segment(const Segment& s, std::size_t mtu = kDefaultMtu);

// Recomputes both checksums over a raw frame. Meant for the optional
// inbound-validation path; parse_segment itself never enforces them.
bool checksums_valid(std::span<const uint8_t> frame);

inline FlowKey flow_key(const Segment& s) { return s.key; }

std::string to_string(const FlowKey& k);
uint32_t parse_ipv4(const std::string& dotted);  // throws std::invalid_argument
std::string ipv4_to_string(uint32_t ip);

}  // namespace synproxy
