#include "synproxy/cookie.hpp"

#include <cmath>
#include <stdexcept>

namespace synproxy {

MssTable::MssTable() : values_{536, 1220, 1300, 1440, 1460, 4096, 8960, 9000} {}

MssTable::MssTable(const std::array<uint16_t, kSize>& values) : values_(values) {
    for (std::size_t i = 0; i < kSize; ++i) {
        if (values_[i] < 536 || values_[i] > 65495)
            throw std::invalid_argument("MSS value out of range [536, 65495]");
        if (i > 0 && values_[i] <= values_[i - 1])
            throw std::invalid_argument("MSS table must be strictly increasing");
    }
}

uint8_t MssTable::quantize(uint16_t mss) const {
    uint8_t idx = 0;
    for (std::size_t i = 0; i < kSize; ++i) {
        if (values_[i] <= mss) idx = static_cast<uint8_t>(i);
    }
    return idx;
}

uint32_t pack(const Cookie& c) {
    return static_cast<uint32_t>(c.t5 & 0x1F) << 27 |
           static_cast<uint32_t>(c.mss_idx & 0x07) << 24 | (c.hash24 & 0xFFFFFF);
}

Cookie unpack(uint32_t v) {
    return Cookie{static_cast<uint8_t>(v >> 27), static_cast<uint8_t>((v >> 24) & 0x07),
                  v & 0xFFFFFF};
}

uint8_t tick_from_micros(uint64_t now_us) {
    return static_cast<uint8_t>((now_us / kTickMicros) & 0x1F);
}

uint8_t tick_from_seconds(double now_s) {
    if (now_s < 0) now_s = 0;
    return static_cast<uint8_t>(
        static_cast<uint64_t>(std::floor(now_s / kTickSeconds)) & 0x1F);
}

uint32_t compute_hash24(const SipKey& key, const FlowKey& k, uint8_t t5) {
    // 4-tuple plus tick, big-endian, 13 bytes. The IP protocol field is
    // deliberately not part of the input.
    uint8_t msg[13];
    msg[0] = static_cast<uint8_t>(k.src_ip >> 24);
    msg[1] = static_cast<uint8_t>(k.src_ip >> 16);
    msg[2] = static_cast<uint8_t>(k.src_ip >> 8);
    msg[3] = static_cast<uint8_t>(k.src_ip);
    msg[4] = static_cast<uint8_t>(k.dst_ip >> 24);
    msg[5] = static_cast<uint8_t>(k.dst_ip >> 16);
    msg[6] = static_cast<uint8_t>(k.dst_ip >> 8);
    msg[7] = static_cast<uint8_t>(k.dst_ip);
    msg[8] = static_cast<uint8_t>(k.src_port >> 8);
    msg[9] = static_cast<uint8_t>(k.src_port);
    msg[10] = static_cast<uint8_t>(k.dst_port >> 8);
    msg[11] = static_cast<uint8_t>(k.dst_port);
    msg[12] = t5;
    return static_cast<uint32_t>(siphash24(key, msg) & 0xFFFFFF);
}

uint32_t encode_cookie(const SipKey& key, const FlowKey& k, uint64_t now_us,
                       std::optional<uint16_t> client_mss, const MssTable& table) {
    uint8_t t5 = tick_from_micros(now_us);
    Cookie c;
    c.t5 = t5;
    c.mss_idx = table.quantize(client_mss.value_or(kDefaultMss));
    c.hash24 = compute_hash24(key, k, t5);
    return pack(c);
}

const char* to_string(VerifyStatus s) {
    switch (s) {
        case VerifyStatus::Ok: return "ok";
        case VerifyStatus::StaleCookie: return "StaleCookie";
        case VerifyStatus::BadHash: return "BadHash";
    }
    return "?";
}

VerifyResult verify_cookie(const SipKey& key, const FlowKey& k, uint32_t ack, uint64_t now_us,
                           uint32_t window, const MssTable& table) {
    Cookie c = unpack(ack - 1);

    bool fresh = false;
    for (uint32_t age = 0; age <= window; ++age) {
        uint64_t then = now_us - static_cast<uint64_t>(age) * kTickMicros;
        if (then > now_us) break;  // before time zero
        if (c.t5 == tick_from_micros(then)) {
            fresh = true;
            break;
        }
    }
    if (!fresh) return {VerifyStatus::StaleCookie, 0};
    if (c.hash24 != compute_hash24(key, k, c.t5)) return {VerifyStatus::BadHash, 0};
    return {VerifyStatus::Ok, table[c.mss_idx]};
}

}  // namespace synproxy
