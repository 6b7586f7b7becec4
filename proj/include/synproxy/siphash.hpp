// SipHash-2-4, the keyed short-input PRF used for cookie hashes and
// hash-indexed whitelisting.

#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace synproxy {

struct SipKey {
    uint64_t k0 = 0;
    uint64_t k1 = 0;

    // 32 hex chars; the 16 bytes are taken little-endian per word, as in
    // the reference implementation.
    static SipKey from_hex(const std::string& hex32);  // throws std::invalid_argument
    static SipKey from_seed(uint64_t seed);
    std::string to_hex() const;
    bool operator==(const SipKey&) const = default;
};

uint64_t siphash24(const SipKey& key, std::span<const uint8_t> data);

}  // namespace synproxy
