#include "synproxy/pcap.hpp"

#include <cstdio>

namespace synproxy {

namespace {

constexpr uint32_t kMagicUsec = 0xA1B2C3D4;
constexpr uint32_t kMagicUsecSwapped = 0xD4C3B2A1;
constexpr uint32_t kMagicNsec = 0xA1B23C4D;
constexpr uint32_t kMagicNsecSwapped = 0x4D3CB2A1;
constexpr uint32_t kLinktypeEthernet = 1;
constexpr uint32_t kMaxFrameLen = 256 * 1024;  // corruption guard

uint32_t bswap32(uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

struct Reader {
    FILE* f;
    bool swap = false;

    // 4 = ok, 0 = clean EOF, anything else = truncated word.
    std::size_t read_u32(uint32_t& out) {
        uint8_t b[4];
        std::size_t n = std::fread(b, 1, 4, f);
        if (n != 4) return n;
        out = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
              static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
        if (swap) out = bswap32(out);
        return 4;
    }
};

void write_u32(FILE* f, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    std::fwrite(b, 1, 4, f);
}

void write_u16(FILE* f, uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    std::fwrite(b, 1, 2, f);
}

void write_global_header(FILE* f) {
    write_u32(f, kMagicUsec);
    write_u16(f, 2);       // version major
    write_u16(f, 4);       // version minor
    write_u32(f, 0);       // thiszone
    write_u32(f, 0);       // sigfigs
    write_u32(f, 65535);   // snaplen
    write_u32(f, kLinktypeEthernet);
}

void write_record(FILE* f, uint64_t ts_us, std::span<const uint8_t> frame) {
    write_u32(f, static_cast<uint32_t>(ts_us / 1000000));
    write_u32(f, static_cast<uint32_t>(ts_us % 1000000));
    write_u32(f, static_cast<uint32_t>(frame.size()));
    write_u32(f, static_cast<uint32_t>(frame.size()));
    if (!frame.empty()) std::fwrite(frame.data(), 1, frame.size(), f);
}

}  // namespace

std::vector<PcapRecord> read_pcap(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw PcapError(PcapError::Kind::Io, "cannot open " + path);
    struct Closer {
        FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{f};

    Reader rd{f};
    uint32_t magic;
    if (rd.read_u32(magic) != 4)
        throw PcapError(PcapError::Kind::TruncatedFile, path + ": missing global header");
    if (magic == kMagicUsecSwapped) {
        rd.swap = true;
    } else if (magic != kMagicUsec) {
        const char* detail = (magic == kMagicNsec || magic == kMagicNsecSwapped)
                                 ? ": nanosecond captures unsupported"
                                 : ": not a classic pcap file";
        throw PcapError(PcapError::Kind::UnsupportedCapture, path + detail);
    }

    uint32_t rest[5];  // version pair, thiszone, sigfigs, snaplen, linktype
    for (auto& w : rest)
        if (rd.read_u32(w) != 4)
            throw PcapError(PcapError::Kind::TruncatedFile, path + ": truncated global header");
    uint32_t linktype = rest[4];
    if (linktype != kLinktypeEthernet)
        throw PcapError(PcapError::Kind::UnsupportedCapture,
                        path + ": linktype " + std::to_string(linktype) + " (want Ethernet)");

    std::vector<PcapRecord> records;
    for (;;) {
        uint32_t ts_sec;
        std::size_t n = rd.read_u32(ts_sec);
        if (n == 0) break;  // clean EOF
        uint32_t ts_usec, incl_len, orig_len;
        if (n != 4 || rd.read_u32(ts_usec) != 4 || rd.read_u32(incl_len) != 4 ||
            rd.read_u32(orig_len) != 4)
            throw PcapError(PcapError::Kind::TruncatedFile, path + ": truncated record header");
        if (incl_len > kMaxFrameLen)
            throw PcapError(PcapError::Kind::TruncatedFile,
                            path + ": implausible record length " + std::to_string(incl_len));
        PcapRecord rec;
        rec.ts_us = static_cast<uint64_t>(ts_sec) * 1000000 + ts_usec;
        rec.frame.resize(incl_len);
        if (incl_len && std::fread(rec.frame.data(), 1, incl_len, f) != incl_len)
            throw PcapError(PcapError::Kind::TruncatedFile, path + ": truncated record body");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_pcap(const std::string& path, std::span<const PcapRecord> records) {
    PcapWriter w(path);
    for (const auto& r : records) w.append(r.ts_us, r.frame);
    w.close();
}

PcapWriter::PcapWriter(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw PcapError(PcapError::Kind::Io, "cannot create " + path);
    write_global_header(f);
    file_ = f;
}

PcapWriter::~PcapWriter() {
    if (file_) std::fclose(static_cast<FILE*>(file_));
}

void PcapWriter::append(uint64_t ts_us, std::span<const uint8_t> frame) {
    write_record(static_cast<FILE*>(file_), ts_us, frame);
}

void PcapWriter::close() {
    if (file_) {
        if (std::fclose(static_cast<FILE*>(file_)) != 0)
            throw PcapError(PcapError::Kind::Io, "close failed");
        file_ = nullptr;
    }
}

}  // namespace synproxy
