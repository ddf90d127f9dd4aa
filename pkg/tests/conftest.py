import struct

import pytest


def pcap_bytes(packets: list[bytes], magic: int = 0xA1B2C3D4, ts: list[tuple[int, int]] | None = None,
               link_type: int = 1) -> bytes:
    """Hand-rolled classic pcap builder, independent of the package writer."""
    if magic in (0xA1B2C3D4, 0xA1B23C4D):
        order = ">"
    else:
        order = "<"
    out = struct.pack(order + "IHHiIII", _native_magic(magic), 2, 4, 0, 0, 65535, link_type)
    for i, frame in enumerate(packets):
        sec, frac = ts[i] if ts else (i, 0)
        out += struct.pack(order + "IIII", sec, frac, len(frame), len(frame))
        out += frame
    return out


def _native_magic(magic: int) -> int:
    # The builder writes the magic in the file's own byte order, so the
    # big-endian representation must equal `magic`.
    if magic in (0xD4C3B2A1, 0x4D3CB2A1):
        return int.from_bytes(magic.to_bytes(4, "big"), "little")
    return magic


def ethernet(payload: bytes, ethertype: int = 0x0800) -> bytes:
    return b"\xaa" * 6 + b"\xbb" * 6 + struct.pack(">H", ethertype) + payload


def ipv4(payload: bytes, proto: int, src: str = "10.0.0.1", dst: str = "10.0.0.2",
         ttl: int = 64) -> bytes:
    total = 20 + len(payload)
    parts = [int(x) for x in src.split(".")]
    src_b = bytes(parts)
    dst_b = bytes(int(x) for x in dst.split("."))
    header = struct.pack(">BBHHHBBH", 0x45, 0, total, 0, 0, ttl, proto, 0) + src_b + dst_b
    return header + payload


def tcp(src_port: int, dst_port: int, flags: int, seq: int = 0, ackno: int = 0,
        payload: bytes = b"") -> bytes:
    return struct.pack(">HHIIBBHHH", src_port, dst_port, seq, ackno, 5 << 4, flags,
                       8192, 0, 0) + payload


def udp(src_port: int, dst_port: int, payload: bytes = b"") -> bytes:
    return struct.pack(">HHHH", src_port, dst_port, 8 + len(payload), 0) + payload


@pytest.fixture
def single_udp_capture() -> bytes:
    frame = ethernet(ipv4(udp(5000, 53, b"x" * 10), proto=17))
    return pcap_bytes([frame])
