#include "synproxy/whitelist.hpp"

#include <bit>
#include <stdexcept>

namespace synproxy {

namespace {

constexpr uint64_t kEvenBits = 0x5555555555555555ULL;  // referenced bits (A)

std::size_t checked_slot_count(uint32_t mask_bits) {
    if (mask_bits < 1 || mask_bits > 32) throw std::invalid_argument("mask_bits must be 1..32");
    return std::size_t{1} << mask_bits;
}

}  // namespace

Whitelist::Whitelist(WhitelistGranularity granularity, uint32_t mask_bits,
                     const SipKey& flow_hash_key, uint64_t* hash_counter)
    : granularity_(granularity),
      mask_bits_(mask_bits),
      slot_count_(checked_slot_count(mask_bits)),
      flow_hash_key_(flow_hash_key),
      hash_counter_(hash_counter),
      words_(slot_count_ / 32 + (slot_count_ % 32 ? 1 : 0), 0) {}

uint64_t Whitelist::slot_of(const FlowKey& k) const {
    if (granularity_ == WhitelistGranularity::PerSourceIp)
        return k.src_ip & (slot_count_ - 1);
    uint8_t msg[12];
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
    if (hash_counter_) ++*hash_counter_;
    return siphash24(flow_hash_key_, msg) & (slot_count_ - 1);
}

void Whitelist::admit(const FlowKey& k) {
    uint64_t slot = slot_of(k);
    uint64_t& word = words_[slot / 32];
    uint64_t shift = (slot % 32) * 2;
    if (((word >> shift) & 3) == 0) ++occupied_;
    word |= uint64_t{3} << shift;
}

bool Whitelist::check(const FlowKey& k) {
    uint64_t slot = slot_of(k);
    uint64_t& word = words_[slot / 32];
    uint64_t shift = (slot % 32) * 2;
    if (((word >> shift) & 3) == 0) return false;
    word |= uint64_t{1} << shift;  // re-set the referenced bit
    return true;
}

uint64_t Whitelist::sweep() {
    uint64_t evicted = 0;
    for (uint64_t& word : words_) {
        if (word == 0) continue;
        uint64_t a = word & kEvenBits;
        uint64_t b = (word >> 1) & kEvenBits;
        evicted += static_cast<uint64_t>(std::popcount(b & ~a));
        // Referenced entries age to 10; unreferenced aging entries leave.
        word = (b & a) << 1;
    }
    occupied_ -= evicted;
    return evicted;
}

}  // namespace synproxy
