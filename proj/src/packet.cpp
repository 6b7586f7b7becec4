#include "synproxy/packet.hpp"

#include <cstring>
#include <sstream>

#include "synproxy/util.hpp"

namespace synproxy {

namespace {

constexpr std::size_t kEthLen = 14;
constexpr std::size_t kIpLen = 20;
constexpr std::size_t kTcpMinLen = 20;
constexpr uint16_t kEthertypeIpv4 = 0x0800;
constexpr uint8_t kProtoTcp = 6;

uint16_t rd16(const uint8_t* p) { return static_cast<uint16_t>(p[0] << 8 | p[1]); }
uint32_t rd32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}
void wr16(uint8_t* p, uint16_t v) {
    p[0] = static_cast<uint8_t>(v >> 8);
    p[1] = static_cast<uint8_t>(v);
}
void wr32(uint8_t* p, uint32_t v) {
    p[0] = static_cast<uint8_t>(v >> 24);
    p[1] = static_cast<uint8_t>(v >> 16);
    p[2] = static_cast<uint8_t>(v >> 8);
    p[3] = static_cast<uint8_t>(v);
}

namespace optkind {
constexpr uint8_t kEol = 0;
constexpr uint8_t kNop = 1;
constexpr uint8_t kMss = 2;
constexpr uint8_t kWindowScale = 3;
constexpr uint8_t kSackPermitted = 4;
constexpr uint8_t kTimestamp = 8;
}  // namespace optkind

// Returns false on a malformed TLV (length < 2 or running past the end).
bool parse_options(std::span<const uint8_t> bytes, TcpOptions& out) {
    std::size_t i = 0;
    while (i < bytes.size()) {
        uint8_t kind = bytes[i];
        if (kind == optkind::kEol) break;
        if (kind == optkind::kNop) {
            ++i;
            continue;
        }
        if (i + 1 >= bytes.size()) return false;
        uint8_t len = bytes[i + 1];
        if (len < 2 || i + len > bytes.size()) return false;
        const uint8_t* body = bytes.data() + i + 2;
        switch (kind) {
            case optkind::kMss:
                if (len != 4) return false;
                out.mss = rd16(body);
                break;
            case optkind::kWindowScale:
                if (len != 3) return false;
                out.window_scale = body[0];
                break;
            case optkind::kSackPermitted:
                if (len != 2) return false;
                out.sack_permitted = true;
                break;
            case optkind::kTimestamp:
                if (len != 10) return false;
                out.timestamp = {rd32(body), rd32(body + 4)};
                break;
            default:
                out.unknown.insert(out.unknown.end(), bytes.begin() + i, bytes.begin() + i + len);
                break;
        }
        i += len;
    }
    return true;
}

}  // namespace

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
    uint64_t a = (static_cast<uint64_t>(k.src_ip) << 32) | k.dst_ip;
    uint64_t b = (static_cast<uint64_t>(k.src_port) << 16) | k.dst_port;
    return static_cast<std::size_t>(mix64(a ^ mix64(b)));
}

std::vector<uint8_t> TcpOptions::encode() const {
    if (!wire.empty()) return wire;
    std::vector<uint8_t> out;
    if (mss) {
        out.insert(out.end(), {optkind::kMss, 4,
                               static_cast<uint8_t>(*mss >> 8), static_cast<uint8_t>(*mss)});
    }
    if (sack_permitted) out.insert(out.end(), {optkind::kSackPermitted, 2});
    if (window_scale) out.insert(out.end(), {optkind::kWindowScale, 3, *window_scale});
    if (timestamp) {
        uint8_t ts[10] = {optkind::kTimestamp, 10};
        wr32(ts + 2, timestamp->first);
        wr32(ts + 6, timestamp->second);
        out.insert(out.end(), ts, ts + 10);
    }
    out.insert(out.end(), unknown.begin(), unknown.end());
    while (out.size() % 4 != 0) out.push_back(optkind::kNop);
    return out;
}

const char* to_string(ParseError e) {
    switch (e) {
        case ParseError::None: return "none";
        case ParseError::TooShort: return "too-short";
        case ParseError::NotIpv4: return "not-ipv4";
        case ParseError::NotTcp: return "not-tcp";
        case ParseError::Fragmented: return "fragmented";
        case ParseError::BadHeaderLength: return "bad-header-length";
        case ParseError::BadOptions: return "bad-options";
    }
    return "?";
}

OversizeSegment::OversizeSegment(std::size_t size, std::size_t mtu)
    : std::runtime_error("segment of " + std::to_string(size) +
                         " bytes exceeds MTU " + std::to_string(mtu)) {}

uint16_t internet_checksum(std::span<const uint8_t> data) {
    uint64_t sum = 0;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) sum += rd16(data.data() + i);
    if (i < data.size()) sum += static_cast<uint16_t>(data[i] << 8);
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

ParseResult parse_segment(std::span<const uint8_t> frame) {
    ParseResult r;
    auto fail = [&](ParseError e) {
        r.error = e;
        return r;
    };

    if (frame.size() < kEthLen + kIpLen + kTcpMinLen) return fail(ParseError::TooShort);
    const uint8_t* eth = frame.data();
    if (rd16(eth + 12) != kEthertypeIpv4) return fail(ParseError::NotIpv4);

    const uint8_t* ip = eth + kEthLen;
    if ((ip[0] >> 4) != 4) return fail(ParseError::NotIpv4);
    std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
    if (ihl != kIpLen) return fail(ParseError::BadHeaderLength);  // IP options unsupported
    uint16_t frag = rd16(ip + 6);
    if ((frag & 0x2000) != 0 || (frag & 0x1FFF) != 0) return fail(ParseError::Fragmented);
    if (ip[9] != kProtoTcp) return fail(ParseError::NotTcp);
    std::size_t total_len = rd16(ip + 2);
    if (total_len < ihl + kTcpMinLen) return fail(ParseError::BadHeaderLength);
    if (frame.size() < kEthLen + total_len) return fail(ParseError::TooShort);

    const uint8_t* tcp = ip + ihl;
    std::size_t tcp_hlen = static_cast<std::size_t>(tcp[12] >> 4) * 4;
    if (tcp_hlen < kTcpMinLen || ihl + tcp_hlen > total_len) return fail(ParseError::BadHeaderLength);

    Segment& s = r.segment;
    std::memcpy(s.eth_dst.data(), eth, 6);
    std::memcpy(s.eth_src.data(), eth + 6, 6);
    s.key = FlowKey{rd32(ip + 12), rd32(ip + 16), rd16(tcp), rd16(tcp + 2)};
    s.ttl = ip[8];
    s.seq = rd32(tcp + 4);
    s.ack = rd32(tcp + 8);
    s.flags = tcp[13] & 0x3F;
    s.window = rd16(tcp + 14);

    std::span<const uint8_t> opt_bytes(tcp + kTcpMinLen, tcp_hlen - kTcpMinLen);
    if (!parse_options(opt_bytes, s.options)) return fail(ParseError::BadOptions);
    // Keep the original bytes only when re-encoding would not reproduce them.
    s.options.wire.clear();
    std::vector<uint8_t> canonical = s.options.encode();
    if (!std::equal(canonical.begin(), canonical.end(), opt_bytes.begin(), opt_bytes.end())) {
        s.options.wire.assign(opt_bytes.begin(), opt_bytes.end());
    }

    const uint8_t* data = tcp + tcp_hlen;
    s.payload.assign(data, ip + total_len);
    return r;
}

std::vector<uint8_t> serialize_segment(const Segment& s, std::size_t mtu) {
    std::vector<uint8_t> opts = s.options.encode();
    if (opts.size() % 4 != 0 || opts.size() > 40)
        throw OversizeSegment(kTcpMinLen + opts.size(), 60);
    std::size_t tcp_hlen = kTcpMinLen + opts.size();
    std::size_t total = kEthLen + kIpLen + tcp_hlen + s.payload.size();
    if (total > mtu) throw OversizeSegment(total, mtu);

    std::vector<uint8_t> out(total, 0);
    uint8_t* eth = out.data();
    std::memcpy(eth, s.eth_dst.data(), 6);
    std::memcpy(eth + 6, s.eth_src.data(), 6);
    wr16(eth + 12, kEthertypeIpv4);

    uint8_t* ip = eth + kEthLen;
    ip[0] = 0x45;
    wr16(ip + 2, static_cast<uint16_t>(total - kEthLen));
    wr16(ip + 6, 0x4000);  // DF
    ip[8] = s.ttl;
    ip[9] = kProtoTcp;
    wr32(ip + 12, s.key.src_ip);
    wr32(ip + 16, s.key.dst_ip);
    wr16(ip + 10, internet_checksum({ip, kIpLen}));

    uint8_t* tcp = ip + kIpLen;
    wr16(tcp, s.key.src_port);
    wr16(tcp + 2, s.key.dst_port);
    wr32(tcp + 4, s.seq);
    wr32(tcp + 8, s.ack);
    tcp[12] = static_cast<uint8_t>((tcp_hlen / 4) << 4);
    tcp[13] = s.flags;
    wr16(tcp + 14, s.window);
    if (!opts.empty()) std::memcpy(tcp + kTcpMinLen, opts.data(), opts.size());
    if (!s.payload.empty()) std::memcpy(tcp + tcp_hlen, s.payload.data(), s.payload.size());

    // TCP checksum over pseudo-header + header + payload.
    std::size_t tcp_total = tcp_hlen + s.payload.size();
    std::vector<uint8_t> pseudo(12 + tcp_total);
    wr32(pseudo.data(), s.key.src_ip);
    wr32(pseudo.data() + 4, s.key.dst_ip);
    pseudo[9] = kProtoTcp;
    wr16(pseudo.data() + 10, static_cast<uint16_t>(tcp_total));
    std::memcpy(pseudo.data() + 12, tcp, tcp_total);
    wr16(tcp + 16, internet_checksum(pseudo));
    return out;
}

bool checksums_valid(std::span<const uint8_t> frame) {
    ParseResult r = parse_segment(frame);
    if (!r.ok()) return false;
    const uint8_t* ip = frame.data() + kEthLen;
    if (internet_checksum({ip, kIpLen}) != 0) return false;
    std::size_t tcp_total = rd16(ip + 2) - kIpLen;
    std::vector<uint8_t> pseudo(12 + tcp_total);
    wr32(pseudo.data(), rd32(ip + 12));
    wr32(pseudo.data() + 4, rd32(ip + 16));
    pseudo[9] = kProtoTcp;
    wr16(pseudo.data() + 10, static_cast<uint16_t>(tcp_total));
    std::memcpy(pseudo.data() + 12, ip + kIpLen, tcp_total);
    return internet_checksum(pseudo) == 0;
}

std::string to_string(const FlowKey& k) {
    std::ostringstream os;
    os << ipv4_to_string(k.src_ip) << ':' << k.src_port << "->"
       << ipv4_to_string(k.dst_ip) << ':' << k.dst_port;
    return os.str();
}

uint32_t parse_ipv4(const std::string& dotted) {
    uint32_t parts[4];
    int n = 0;
    std::size_t pos = 0;
    bool consumed = false;
    while (n < 4) {
        std::size_t next = dotted.find('.', pos);
        std::string piece = dotted.substr(pos, next == std::string::npos ? next : next - pos);
        if (piece.empty() || piece.size() > 3 ||
            piece.find_first_not_of("0123456789") != std::string::npos)
            throw std::invalid_argument("bad IPv4 literal: " + dotted);
        unsigned long v = std::stoul(piece);
        if (v > 255) throw std::invalid_argument("bad IPv4 literal: " + dotted);
        parts[n++] = static_cast<uint32_t>(v);
        if (next == std::string::npos) {
            consumed = true;
            break;
        }
        pos = next + 1;
    }
    if (n != 4 || !consumed) throw std::invalid_argument("bad IPv4 literal: " + dotted);
    return parts[0] << 24 | parts[1] << 16 | parts[2] << 8 | parts[3];
}

std::string ipv4_to_string(uint32_t ip) {
    std::ostringstream os;
    os << (ip >> 24) << '.' << ((ip >> 16) & 0xFF) << '.' << ((ip >> 8) & 0xFF) << '.'
       << (ip & 0xFF);
    return os.str();
}

}  // namespace synproxy
