#!/usr/bin/env python3
"""Independent packet-crafting oracle.

Builds Ethernet II / IPv4 / TCP frames and classic pcap files with plain
struct.pack, sharing no code with the C++ implementation. Emits frozen
hex constants (pasted into the C++ tests) and reference files under
tests/data/.
"""
import struct
import sys
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def craft(
    eth_src,
    eth_dst,
    src_ip,
    dst_ip,
    sport,
    dport,
    seq,
    ack,
    flags,
    window=65535,
    ttl=64,
    options=b"",
    payload=b"",
    ip_id=0,
):
    assert len(options) % 4 == 0
    tcp_hlen = 20 + len(options)
    data_off = (tcp_hlen // 4) << 4
    tcp = struct.pack(
        ">HHIIBBHHH", sport, dport, seq, ack, data_off, flags, window, 0, 0
    )
    tcp += options
    pseudo = struct.pack(">IIBBH", src_ip, dst_ip, 0, 6, tcp_hlen + len(payload))
    csum = checksum(pseudo + tcp + payload)
    tcp = tcp[:16] + struct.pack(">H", csum) + tcp[18:]

    total_len = 20 + tcp_hlen + len(payload)
    ip = struct.pack(
        ">BBHHHBBHII", 0x45, 0, total_len, ip_id, 0x4000, ttl, 6, 0, src_ip, dst_ip
    )
    ip = ip[:10] + struct.pack(">H", checksum(ip)) + ip[12:]

    eth = eth_dst + eth_src + struct.pack(">H", 0x0800)
    return eth + ip + tcp + payload


def write_pcap(path, records):
    hdr = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    body = b""
    for ts_us, frame in records:
        body += struct.pack(
            "<IIII", ts_us // 1_000_000, ts_us % 1_000_000, len(frame), len(frame)
        )
        body += frame
    path.write_bytes(hdr + body)


MAC_A = bytes.fromhex("020000000001")
MAC_B = bytes.fromhex("020000000002")
SYN = 0x02
ACK = 0x10
PSH = 0x08


def ip4(a, b, c, d):
    return (a << 24) | (b << 16) | (c << 8) | d


def main():
    DATA_DIR.mkdir(exist_ok=True)

    # 1. Minimal 54-byte SYN frame, no options, no payload.
    f_min = craft(
        MAC_A,
        MAC_B,
        ip4(10, 0, 0, 1),
        ip4(10, 0, 0, 2),
        4000,
        80,
        seq=1000,
        ack=0,
        flags=SYN,
        window=64240,
        ttl=64,
    )
    assert len(f_min) == 54, len(f_min)

    # 2. SYN frame carrying an MSS=1460 option (02 04 05 b4).
    f_mss = craft(
        MAC_A,
        MAC_B,
        ip4(10, 0, 0, 1),
        ip4(10, 0, 0, 2),
        4000,
        80,
        seq=1000,
        ack=0,
        flags=SYN,
        window=64240,
        ttl=64,
        options=bytes.fromhex("020405b4"),
    )

    # 3. Data segment with payload, PSH|ACK.
    f_data = craft(
        MAC_B,
        MAC_A,
        ip4(192, 168, 1, 7),
        ip4(10, 0, 0, 2),
        51000,
        443,
        seq=0xDEADBEEF,
        ack=0x01020304,
        flags=PSH | ACK,
        window=1024,
        ttl=57,
        payload=b"hello, world",
        ip_id=0x1234,
    )

    for name, frame in [("min_syn", f_min), ("mss_syn", f_mss), ("data_psh", f_data)]:
        print(f"{name} ({len(frame)} bytes):")
        print(f'  "{frame.hex()}"')

    write_pcap(
        DATA_DIR / "reference.pcap",
        [(0, f_min), (1_500, f_mss), (2_000_000, f_data)],
    )
    print(f"wrote {DATA_DIR / 'reference.pcap'}")

    # Checksum sanity cases used directly by the unit tests.
    assert checksum(b"") == 0xFFFF
    assert checksum(b"\x00\x01") == 0xFFFE
    print("checksum anchors: OK")


if __name__ == "__main__":
    main()
