// 32-bit SYN cookie codec. A cookie packs a coarse timestamp tick, an
// index into a small MSS table and a keyed 24-bit hash of the 4-tuple:
//
//   bit 31                                0
//       [ t5 : 5 ][ mss_idx : 3 ][ hash24 : 24 ]
//
// The tick has 64 s granularity; verification accepts the current tick
// plus a configurable number of previous ones.

#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "synproxy/packet.hpp"
#include "synproxy/siphash.hpp"

namespace synproxy {

constexpr uint32_t kTickSeconds = 64;
constexpr uint64_t kTickMicros = uint64_t{kTickSeconds} * 1000000;
constexpr uint16_t kDefaultMss = 536;  // used when the client sent no MSS option

struct Cookie {
    uint8_t t5 = 0;        // 5 bits
    uint8_t mss_idx = 0;   // 3 bits
    uint32_t hash24 = 0;   // 24 bits

    bool operator==(const Cookie&) const = default;
};

// Eight MSS values, strictly increasing; index 0 is the floor fallback.
class MssTable {
  public:
    static constexpr std::size_t kSize = 8;

    MssTable();  // 536, 1220, 1300, 1440, 1460, 4096, 8960, 9000
    explicit MssTable(const std::array<uint16_t, kSize>& values);  // throws std::invalid_argument

    uint16_t operator[](std::size_t i) const { return values_[i]; }
    uint8_t quantize(uint16_t mss) const;

    bool operator==(const MssTable&) const = default;

  private:
    std::array<uint16_t, kSize> values_;
};

uint32_t pack(const Cookie& c);
Cookie unpack(uint32_t v);

uint8_t tick_from_micros(uint64_t now_us);
uint8_t tick_from_seconds(double now_s);

uint32_t compute_hash24(const SipKey& key, const FlowKey& k, uint8_t t5);

uint32_t encode_cookie(const SipKey& key, const FlowKey& k, uint64_t now_us,
                       std::optional<uint16_t> client_mss, const MssTable& table);

enum class VerifyStatus { Ok, StaleCookie, BadHash };

const char* to_string(VerifyStatus s);

struct VerifyResult {
    VerifyStatus status = VerifyStatus::BadHash;
    uint16_t mss = 0;  // decoded MSS, valid only when status == Ok

    bool ok() const { return status == VerifyStatus::Ok; }
};

// `ack` is the raw acknowledgment number from the client's handshake
// ACK; the candidate cookie is ack-1 (mod 2^32). `window` is the number
// of previous ticks still accepted (0..3).
VerifyResult verify_cookie(const SipKey& key, const FlowKey& k, uint32_t ack, uint64_t now_us,
                           uint32_t window, const MssTable& table);

}  // namespace synproxy
