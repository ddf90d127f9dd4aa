"""Packet domain types, classic-pcap decoding/encoding, and per-packet features.

Only classic pcap is handled (both byte orders, micro- and nanosecond
timestamp resolution), link type 1 (Ethernet), IPv4 and IPv6.  Frames whose
ethertype is anything else are skipped and counted, never raised.
"""

from __future__ import annotations

import enum
import ipaddress
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, Union

logger = logging.getLogger(__name__)

# Accepted global-header magics: value -> (byte order, ticks per second).
_MAGICS = {
    0xA1B2C3D4: (">", 1_000_000),
    0xD4C3B2A1: ("<", 1_000_000),
    0xA1B23C4D: (">", 1_000_000_000),
    0x4D3CB2A1: ("<", 1_000_000_000),
}
# Canonical nanosecond magic; written little-endian it reads back as 0x4d3cb2a1.
MAGIC_NS = 0xA1B23C4D

LINKTYPE_ETHERNET = 1

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMPV6 = 58


class CaptureError(Exception):
    """Fatal problem with a capture file."""


class TruncatedHeaderError(CaptureError):
    pass


class UnsupportedLinkTypeError(CaptureError):
    def __init__(self, link_type: int):
        super().__init__(f"unsupported link type {link_type}; only Ethernet (1) is accepted")
        self.link_type = link_type


class TrafficClass(enum.Enum):
    """Ground-truth class of a packet; the values are the sidecar wire strings."""

    IOT_BENIGN = "iot_benign"
    IOT_MALICIOUS = "iot_malicious"
    TRAD_BENIGN = "trad_benign"
    TRAD_MALICIOUS = "trad_malicious"

    @classmethod
    def from_wire(cls, text: str) -> "TrafficClass":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown traffic class {text!r}") from None


@dataclass(frozen=True, slots=True)
class FiveTuple:
    """Direction-sensitive flow key: reversing src and dst gives a different flow."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int


@dataclass(frozen=True, slots=True)
class CaptureHeader:
    magic: int
    snaplen: int
    link_type: int
    ticks_per_second: int


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One decoded packet.  Immutable; safe to share across threads.

    Ports are 0 for portless protocols, TCP flag bits are all 0 for non-TCP
    packets, and sequence/acknowledgment numbers are 0 outside TCP.
    """

    timestamp: float
    src_ip: str
    dst_ip: str
    protocol: int
    src_port: int
    dst_port: int
    tcp_flag: int
    udp_flag: int
    ttl: int
    ack: int
    syn: int
    fin: int
    psh: int
    urg: int
    rst: int
    sequence_number: int
    acknowledgment_number: int
    packet_size: int
    payload_size: int
    label: TrafficClass | None = None
    source_tag: str = ""


def five_tuple_of(pkt: PacketRecord) -> FiveTuple:
    return FiveTuple(pkt.src_ip, pkt.dst_ip, pkt.src_port, pkt.dst_port, pkt.protocol)


# Model-facing per-packet features, in a fixed documented order.  The packet
# timestamp is deliberately not part of this tuple: it drives windowing only,
# because absolute time memorizes the capture instead of the traffic.
GENERAL_FEATURE_NAMES: tuple[str, ...] = (
    "src_addr",
    "dst_addr",
    "protocol",
    "src_port",
    "dst_port",
    "tcp",
    "udp",
    "ttl",
    "ack",
    "syn",
    "fin",
    "psh",
    "urg",
    "rst",
    "sequence_number",
    "packet_size",
    "acknowledgment_number",
    "payload_size",
)

ADDR_ENCODINGS = ("last_octet", "zero")


def _addr_last_octet(ip: str) -> int:
    # IPv4 dotted quad or IPv6; compressed IPv6 tails ("::") encode as 0.
    if "." in ip:
        return int(ip.rsplit(".", 1)[1])
    tail = ip.rsplit(":", 1)[1]
    return (int(tail, 16) & 0xFF) if tail else 0


def general_features(pkt: PacketRecord, addr_mode: str = "last_octet") -> tuple[float, ...]:
    """Encode one packet as the 18 model-facing general features.

    Addresses are never fed to the model raw: by default only the
    least-significant octet, normalized to [0, 1], survives (`last_octet`);
    `zero` drops the address information entirely while keeping the arity.
    """
    if addr_mode == "last_octet":
        src = _addr_last_octet(pkt.src_ip) / 255.0
        dst = _addr_last_octet(pkt.dst_ip) / 255.0
    elif addr_mode == "zero":
        src = 0.0
        dst = 0.0
    else:
        raise ValueError(f"unknown address encoding {addr_mode!r}")
    return (
        src,
        dst,
        float(pkt.protocol),
        float(pkt.src_port),
        float(pkt.dst_port),
        float(pkt.tcp_flag),
        float(pkt.udp_flag),
        float(pkt.ttl),
        float(pkt.ack),
        float(pkt.syn),
        float(pkt.fin),
        float(pkt.psh),
        float(pkt.urg),
        float(pkt.rst),
        float(pkt.sequence_number),
        float(pkt.packet_size),
        float(pkt.acknowledgment_number),
        float(pkt.payload_size),
    )


CaptureSource = Union[bytes, bytearray, memoryview, str, Path, BinaryIO]


def _as_bytes(source: CaptureSource) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


class CaptureReader:
    """Lazy iterator of PacketRecord over one capture.

    Exposes `frames_total` / `frames_skipped` counters (skipped = non-IP
    frames) and, when a record header or body is cut short, stops the stream
    and reports the byte offset in `truncated_at`.
    """

    def __init__(self, source: CaptureSource):
        self._buf = _as_bytes(source)
        if len(self._buf) < 24:
            raise TruncatedHeaderError(
                f"capture header needs 24 bytes, got {len(self._buf)}"
            )
        magic = struct.unpack(">I", self._buf[:4])[0]
        if magic not in _MAGICS:
            raise CaptureError(f"unrecognized capture magic 0x{magic:08x}")
        self._order, ticks = _MAGICS[magic]
        _, _, _, _, snaplen, link_type = struct.unpack(self._order + "HHiIII", self._buf[4:24])
        if link_type != LINKTYPE_ETHERNET:
            raise UnsupportedLinkTypeError(link_type)
        self.header = CaptureHeader(magic=magic, snaplen=snaplen, link_type=link_type, ticks_per_second=ticks)
        self._rec_hdr = struct.Struct(self._order + "IIII")
        self._pos = 24
        self.frames_total = 0
        self.frames_skipped = 0
        self.truncated_at: int | None = None

    def __iter__(self) -> Iterator[PacketRecord]:
        return self

    def __next__(self) -> PacketRecord:
        buf = self._buf
        unpack = self._rec_hdr.unpack_from
        divisor = float(self.header.ticks_per_second)
        while True:
            pos = self._pos
            if pos >= len(buf):
                raise StopIteration
            if pos + 16 > len(buf):
                self.truncated_at = pos
                logger.warning("capture truncated mid record header at byte %d", pos)
                raise StopIteration
            ts_sec, ts_frac, incl_len, orig_len = unpack(buf, pos)
            if pos + 16 + incl_len > len(buf):
                self.truncated_at = pos
                logger.warning("capture truncated mid packet record at byte %d", pos)
                raise StopIteration
            self._pos = pos + 16 + incl_len
            self.frames_total += 1
            pkt = _decode_frame(buf, pos + 16, incl_len, ts_sec + ts_frac / divisor, orig_len)
            if pkt is None:
                self.frames_skipped += 1
                continue
            return pkt


def parse_capture(source: CaptureSource) -> CaptureReader:
    """Open a classic-pcap octet stream and iterate its IP packets lazily."""
    return CaptureReader(source)


def _decode_frame(buf: bytes, off: int, length: int, ts: float, orig_len: int) -> PacketRecord | None:
    if length < 14:
        return None
    ethertype = (buf[off + 12] << 8) | buf[off + 13]
    ip_off = off + 14
    if ethertype == ETHERTYPE_IPV4:
        return _decode_ipv4(buf, ip_off, off + length, ts, orig_len)
    if ethertype == ETHERTYPE_IPV6:
        return _decode_ipv6(buf, ip_off, off + length, ts, orig_len)
    return None


def _decode_ipv4(buf: bytes, off: int, end: int, ts: float, orig_len: int) -> PacketRecord | None:
    if off + 20 > end or buf[off] >> 4 != 4:
        return None
    ihl = (buf[off] & 0x0F) * 4
    if ihl < 20 or off + ihl > end:
        return None
    total_len = (buf[off + 2] << 8) | buf[off + 3]
    ttl = buf[off + 8]
    proto = buf[off + 9]
    src = f"{buf[off + 12]}.{buf[off + 13]}.{buf[off + 14]}.{buf[off + 15]}"
    dst = f"{buf[off + 16]}.{buf[off + 17]}.{buf[off + 18]}.{buf[off + 19]}"
    ip_payload = max(total_len - ihl, 0)
    return _decode_transport(buf, off + ihl, end, ts, orig_len, src, dst, proto, ttl, ip_payload)


def _decode_ipv6(buf: bytes, off: int, end: int, ts: float, orig_len: int) -> PacketRecord | None:
    if off + 40 > end or buf[off] >> 4 != 6:
        return None
    payload_len = (buf[off + 4] << 8) | buf[off + 5]
    proto = buf[off + 6]
    ttl = buf[off + 7]  # hop limit
    src = str(ipaddress.IPv6Address(buf[off + 8 : off + 24]))
    dst = str(ipaddress.IPv6Address(buf[off + 24 : off + 40]))
    return _decode_transport(buf, off + 40, end, ts, orig_len, src, dst, proto, ttl, payload_len)


def _decode_transport(
    buf: bytes,
    off: int,
    end: int,
    ts: float,
    orig_len: int,
    src: str,
    dst: str,
    proto: int,
    ttl: int,
    ip_payload: int,
) -> PacketRecord:
    src_port = dst_port = 0
    tcp_flag = udp_flag = 0
    ack = syn = fin = psh = urg = rst = 0
    seq = ackno = 0
    payload = ip_payload
    if proto == PROTO_TCP and off + 20 <= end:
        tcp_flag = 1
        src_port = (buf[off] << 8) | buf[off + 1]
        dst_port = (buf[off + 2] << 8) | buf[off + 3]
        seq = int.from_bytes(buf[off + 4 : off + 8], "big")
        ackno = int.from_bytes(buf[off + 8 : off + 12], "big")
        doff = (buf[off + 12] >> 4) * 4
        flags = buf[off + 13]
        fin = flags & 0x01
        syn = (flags >> 1) & 0x01
        rst = (flags >> 2) & 0x01
        psh = (flags >> 3) & 0x01
        ack = (flags >> 4) & 0x01
        urg = (flags >> 5) & 0x01
        payload = max(ip_payload - doff, 0)
    elif proto == PROTO_UDP and off + 8 <= end:
        udp_flag = 1
        src_port = (buf[off] << 8) | buf[off + 1]
        dst_port = (buf[off + 2] << 8) | buf[off + 3]
        udp_len = (buf[off + 4] << 8) | buf[off + 5]
        payload = max(udp_len - 8, 0)
    elif proto in (PROTO_ICMP, PROTO_ICMPV6):
        payload = max(ip_payload - 8, 0)
    return PacketRecord(
        timestamp=ts,
        src_ip=src,
        dst_ip=dst,
        protocol=proto,
        src_port=src_port,
        dst_port=dst_port,
        tcp_flag=tcp_flag,
        udp_flag=udp_flag,
        ttl=ttl,
        ack=ack,
        syn=syn,
        fin=fin,
        psh=psh,
        urg=urg,
        rst=rst,
        sequence_number=seq,
        acknowledgment_number=ackno,
        packet_size=orig_len,
        payload_size=payload,
    )


# ---------------------------------------------------------------------------
# Frame encoding (the write side; the merged-stream writer drives this).
# ---------------------------------------------------------------------------

def _checksum16(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum((data[i] << 8) | data[i + 1] for i in range(0, len(data), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def encode_frame(pkt: PacketRecord) -> bytes:
    """Synthesize an Ethernet/IP frame that decodes back to `pkt` field-for-field.

    Payload bytes are zeros; MACs are fixed so identical records always yield
    identical bytes.
    """
    proto = pkt.protocol
    if proto == PROTO_TCP:
        flags = (
            pkt.fin
            | (pkt.syn << 1)
            | (pkt.rst << 2)
            | (pkt.psh << 3)
            | (pkt.ack << 4)
            | (pkt.urg << 5)
        )
        transport = struct.pack(
            ">HHIIBBHHH",
            pkt.src_port,
            pkt.dst_port,
            pkt.sequence_number,
            pkt.acknowledgment_number,
            5 << 4,
            flags,
            65535,
            0,
            0,
        ) + b"\x00" * pkt.payload_size
    elif proto == PROTO_UDP:
        transport = struct.pack(
            ">HHHH", pkt.src_port, pkt.dst_port, 8 + pkt.payload_size, 0
        ) + b"\x00" * pkt.payload_size
    elif proto in (PROTO_ICMP, PROTO_ICMPV6):
        transport = b"\x00" * (8 + pkt.payload_size)
    else:
        transport = b"\x00" * pkt.payload_size

    if ":" in pkt.src_ip:
        ip_header = struct.pack(
            ">IHBB",
            6 << 28,
            len(transport),
            proto,
            pkt.ttl,
        ) + ipaddress.IPv6Address(pkt.src_ip).packed + ipaddress.IPv6Address(pkt.dst_ip).packed
        ethertype = ETHERTYPE_IPV6
    else:
        header_wo_ck = struct.pack(
            ">BBHHHBBH4s4s",
            0x45,
            0,
            20 + len(transport),
            0,
            0,
            pkt.ttl,
            proto,
            0,
            ipaddress.IPv4Address(pkt.src_ip).packed,
            ipaddress.IPv4Address(pkt.dst_ip).packed,
        )
        ck = _checksum16(header_wo_ck)
        ip_header = header_wo_ck[:10] + struct.pack(">H", ck) + header_wo_ck[12:]
        ethertype = ETHERTYPE_IPV4

    eth = b"\x02\x00\x00\x00\x00\x01" + b"\x02\x00\x00\x00\x00\x02" + struct.pack(">H", ethertype)
    return eth + ip_header + transport


def write_pcap(path: str | Path, records: "list[PacketRecord]") -> None:
    """Write records as a little-endian nanosecond classic pcap (Ethernet)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", MAGIC_NS, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
        for pkt in records:
            frame = encode_frame(pkt)
            ns = round(pkt.timestamp * 1_000_000_000)
            fh.write(struct.pack("<IIII", ns // 1_000_000_000, ns % 1_000_000_000, len(frame), pkt.packet_size))
            fh.write(frame)
