// Fixed-size whitelist of authenticated sources: two bits per slot,
// aged with a second-chance sweep.
//
// Slot states: 00 absent, 11 fresh, 10 aging. admit() sets both bits; a
// successful check() re-sets the referenced bit; sweep() clears one bit
// per pass (11 -> 10, 10 -> 00). An entry therefore survives up to two
// idle sweep periods and indefinitely while it keeps being looked up.
//
// Per-IP granularity indexes by the low mask_bits of the source
// address (injective at mask_bits=32, covering the whole IPv4 space in
// 1 GiB). Per-flow granularity hashes the ordered 4-tuple; collisions
// are accepted false positives, not prevented.

#pragma once

#include <cstdint>
#include <vector>

#include "synproxy/packet.hpp"
#include "synproxy/siphash.hpp"

namespace synproxy {

enum class WhitelistGranularity { PerSourceIp, PerFlow };

class Whitelist {
  public:
    Whitelist(WhitelistGranularity granularity, uint32_t mask_bits, const SipKey& flow_hash_key,
              uint64_t* hash_counter = nullptr);

    void admit(const FlowKey& k);
    bool check(const FlowKey& k);  // refreshes the entry on hit
    uint64_t sweep();              // returns number of evicted entries

    std::size_t slot_count() const { return slot_count_; }
    std::size_t memory_bytes() const { return words_.size() * sizeof(uint64_t); }
    uint64_t occupied() const { return occupied_; }

  private:
    uint64_t slot_of(const FlowKey& k) const;

    WhitelistGranularity granularity_;
    uint32_t mask_bits_;
    std::size_t slot_count_;
    SipKey flow_hash_key_;
    uint64_t* hash_counter_;
    uint64_t occupied_ = 0;
    std::vector<uint64_t> words_;  // 32 slots per word; bit A at even positions, B at odd
};

}  // namespace synproxy
