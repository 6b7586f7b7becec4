#include "synproxy/siphash.hpp"

#include <bit>
#include <stdexcept>

namespace synproxy {

namespace {

inline void sipround(uint64_t& v0, uint64_t& v1, uint64_t& v2, uint64_t& v3) {
    v0 += v1;
    v1 = std::rotl(v1, 13);
    v1 ^= v0;
    v0 = std::rotl(v0, 32);
    v2 += v3;
    v3 = std::rotl(v3, 16);
    v3 ^= v2;
    v0 += v3;
    v3 = std::rotl(v3, 21);
    v3 ^= v0;
    v2 += v1;
    v1 = std::rotl(v1, 17);
    v1 ^= v2;
    v2 = std::rotl(v2, 32);
}

inline uint64_t load_le64(const uint8_t* p) {
    return static_cast<uint64_t>(p[0]) | static_cast<uint64_t>(p[1]) << 8 |
           static_cast<uint64_t>(p[2]) << 16 | static_cast<uint64_t>(p[3]) << 24 |
           static_cast<uint64_t>(p[4]) << 32 | static_cast<uint64_t>(p[5]) << 40 |
           static_cast<uint64_t>(p[6]) << 48 | static_cast<uint64_t>(p[7]) << 56;
}

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

SipKey SipKey::from_hex(const std::string& hex32) {
    if (hex32.size() != 32) throw std::invalid_argument("key must be 32 hex chars");
    uint8_t bytes[16];
    for (int i = 0; i < 16; ++i) {
        int hi = hex_nibble(hex32[2 * i]);
        int lo = hex_nibble(hex32[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("key must be 32 hex chars");
        bytes[i] = static_cast<uint8_t>(hi << 4 | lo);
    }
    return SipKey{load_le64(bytes), load_le64(bytes + 8)};
}

SipKey SipKey::from_seed(uint64_t seed) {
    uint64_t state = seed;
    SipKey k;
    k.k0 = splitmix64(state);
    k.k1 = splitmix64(state);
    return k;
}

std::string SipKey::to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(32, '0');
    for (int i = 0; i < 8; ++i) {
        uint8_t b0 = static_cast<uint8_t>(k0 >> (8 * i));
        uint8_t b1 = static_cast<uint8_t>(k1 >> (8 * i));
        out[2 * i] = digits[b0 >> 4];
        out[2 * i + 1] = digits[b0 & 0xF];
        out[16 + 2 * i] = digits[b1 >> 4];
        out[16 + 2 * i + 1] = digits[b1 & 0xF];
    }
    return out;
}

uint64_t siphash24(const SipKey& key, std::span<const uint8_t> data) {
    uint64_t v0 = key.k0 ^ 0x736f6d6570736575ULL;
    uint64_t v1 = key.k1 ^ 0x646f72616e646f6dULL;
    uint64_t v2 = key.k0 ^ 0x6c7967656e657261ULL;
    uint64_t v3 = key.k1 ^ 0x7465646279746573ULL;

    const std::size_t whole = data.size() / 8;
    for (std::size_t i = 0; i < whole; ++i) {
        uint64_t m = load_le64(data.data() + 8 * i);
        v3 ^= m;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= m;
    }

    uint64_t m = static_cast<uint64_t>(data.size() & 0xFF) << 56;
    const uint8_t* tail = data.data() + 8 * whole;
    switch (data.size() & 7) {
        case 7: m |= static_cast<uint64_t>(tail[6]) << 48; [[fallthrough]];
        case 6: m |= static_cast<uint64_t>(tail[5]) << 40; [[fallthrough]];
        case 5: m |= static_cast<uint64_t>(tail[4]) << 32; [[fallthrough]];
        case 4: m |= static_cast<uint64_t>(tail[3]) << 24; [[fallthrough]];
        case 3: m |= static_cast<uint64_t>(tail[2]) << 16; [[fallthrough]];
        case 2: m |= static_cast<uint64_t>(tail[1]) << 8; [[fallthrough]];
        case 1: m |= static_cast<uint64_t>(tail[0]); break;
        case 0: break;
    }
    v3 ^= m;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    v0 ^= m;

    v2 ^= 0xFF;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    return v0 ^ v1 ^ v2 ^ v3;
}

}  // namespace synproxy
