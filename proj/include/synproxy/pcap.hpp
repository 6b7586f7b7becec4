// Classic pcap (magic 0xA1B2C3D4, microsecond timestamps, linktype 1)
// reader/writer. Nanosecond captures and non-Ethernet linktypes are
// rejected as UnsupportedCapture.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace synproxy {

struct PcapRecord {
    uint64_t ts_us = 0;
    std::vector<uint8_t> frame;

    bool operator==(const PcapRecord&) const = default;
};

class PcapError : public std::runtime_error {
  public:
    enum class Kind { UnsupportedCapture, TruncatedFile, Io };

    PcapError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

std::vector<PcapRecord> read_pcap(const std::string& path);
void write_pcap(const std::string& path, std::span<const PcapRecord> records);

// Streaming writer for replay output.
class PcapWriter {
  public:
    explicit PcapWriter(const std::string& path);
    ~PcapWriter();
    PcapWriter(const PcapWriter&) = delete;
    PcapWriter& operator=(const PcapWriter&) = delete;

    void append(uint64_t ts_us, std::span<const uint8_t> frame);
    void close();

  private:
    void* file_ = nullptr;  // FILE*
};

}  // namespace synproxy
