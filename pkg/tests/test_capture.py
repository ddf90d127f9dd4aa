import struct

import pytest

from netcascade.capture import (
    CaptureError,
    PacketRecord,
    TrafficClass,
    TruncatedHeaderError,
    UnsupportedLinkTypeError,
    FiveTuple,
    encode_frame,
    five_tuple_of,
    general_features,
    parse_capture,
    write_pcap,
)

from conftest import ethernet, ipv4, pcap_bytes, tcp, udp

FIN, SYN, RST, PSH, ACK, URG = 0x01, 0x02, 0x04, 0x08, 0x10, 0x20


def make_record(**overrides) -> PacketRecord:
    base = dict(
        timestamp=1.5,
        src_ip="10.0.0.1",
        dst_ip="10.0.0.2",
        protocol=17,
        src_port=5000,
        dst_port=53,
        tcp_flag=0,
        udp_flag=1,
        ttl=64,
        ack=0,
        syn=0,
        fin=0,
        psh=0,
        urg=0,
        rst=0,
        sequence_number=0,
        acknowledgment_number=0,
        packet_size=100,
        payload_size=58,
    )
    base.update(overrides)
    return PacketRecord(**base)


class TestParseCapture:
    def test_single_udp_packet(self, single_udp_capture):
        reader = parse_capture(single_udp_capture)
        records = list(reader)
        assert len(records) == 1
        pkt = records[0]
        assert pkt.udp_flag == 1
        assert pkt.tcp_flag == 0
        assert (pkt.ack, pkt.syn, pkt.fin, pkt.psh, pkt.urg, pkt.rst) == (0, 0, 0, 0, 0, 0)
        assert pkt.src_port == 5000
        assert pkt.dst_port == 53
        assert pkt.payload_size == 10
        assert reader.frames_total == 1
        assert reader.frames_skipped == 0

    def test_empty_file_is_fatal(self):
        with pytest.raises(TruncatedHeaderError):
            parse_capture(b"")

    def test_unknown_magic(self):
        with pytest.raises(CaptureError):
            parse_capture(b"\x00" * 24)

    def test_unsupported_link_type(self):
        data = pcap_bytes([], link_type=113)
        with pytest.raises(UnsupportedLinkTypeError) as err:
            parse_capture(data)
        assert err.value.link_type == 113

    def test_three_tcp_packets_match_hand_decoding(self):
        # Oracle: the flag bytes are crafted here and decoded by hand below.
        flag_bytes = [SYN, SYN | ACK, RST | ACK]
        frames = [
            ethernet(ipv4(tcp(1234, 80, fl, seq=100 + i, ackno=i), proto=6))
            for i, fl in enumerate(flag_bytes)
        ]
        data = pcap_bytes(frames, ts=[(0, 0), (0, 500000), (1, 0)])
        records = list(parse_capture(data))
        assert len(records) == 3
        for i, (pkt, fl) in enumerate(zip(records, flag_bytes)):
            assert pkt.syn == (1 if fl & SYN else 0)
            assert pkt.ack == (1 if fl & ACK else 0)
            assert pkt.rst == (1 if fl & RST else 0)
            assert pkt.sequence_number == 100 + i
            assert pkt.acknowledgment_number == i
            assert pkt.tcp_flag == 1
        assert records[1].timestamp == pytest.approx(0.5)

    def test_non_ip_frames_skipped_and_counted(self):
        arp = ethernet(b"\x00" * 28, ethertype=0x0806)
        ip = ethernet(ipv4(udp(1, 2), proto=17))
        data = pcap_bytes([arp, ip, arp])
        reader = parse_capture(data)
        records = list(reader)
        assert len(records) == 1
        assert reader.frames_total == 3
        assert reader.frames_skipped == 2
        assert reader.frames_skipped + len(records) == reader.frames_total

    def test_truncated_record_stops_stream_with_offset(self):
        frame = ethernet(ipv4(udp(1, 2), proto=17))
        data = pcap_bytes([frame, frame])
        cut = data[:-5]
        reader = parse_capture(cut)
        records = list(reader)
        assert len(records) == 1
        assert reader.truncated_at == 24 + 16 + len(frame)

    def test_all_four_magics(self):
        frame = ethernet(ipv4(udp(1, 2), proto=17))
        for magic in (0xA1B2C3D4, 0xD4C3B2A1, 0xA1B23C4D, 0x4D3CB2A1):
            data = pcap_bytes([frame], magic=magic, ts=[(3, 250000)])
            records = list(parse_capture(data))
            assert len(records) == 1
            expected = 3 + (250000 / 1e6 if magic in (0xA1B2C3D4, 0xD4C3B2A1) else 250000 / 1e9)
            assert records[0].timestamp == pytest.approx(expected)

    def test_nanosecond_resolution(self):
        frame = ethernet(ipv4(udp(1, 2), proto=17))
        data = pcap_bytes([frame], magic=0xA1B23C4D, ts=[(1, 999_999_999)])
        (pkt,) = parse_capture(data)
        assert pkt.timestamp == pytest.approx(1.999999999)

    def test_icmp_has_zero_ports(self):
        frame = ethernet(ipv4(b"\x08\x00\x00\x00\x00\x00\x00\x00" + b"p" * 4, proto=1))
        (pkt,) = parse_capture(frame and pcap_bytes([frame]))
        assert pkt.src_port == 0
        assert pkt.dst_port == 0
        assert pkt.payload_size == 4

    def test_ipv6_parsing(self):
        payload = udp(4000, 5000, b"ab")
        ip6 = struct.pack(">IHBB", 6 << 28, len(payload), 17, 60)
        ip6 += bytes.fromhex("20010db8000000000000000000000001")
        ip6 += bytes.fromhex("20010db8000000000000000000000002")
        data = pcap_bytes([ethernet(ip6 + payload, ethertype=0x86DD)])
        (pkt,) = parse_capture(data)
        assert pkt.src_ip == "2001:db8::1"
        assert pkt.udp_flag == 1
        assert pkt.payload_size == 2
        assert pkt.ttl == 60


class TestRoundTrip:
    def test_write_then_parse_is_field_identical(self, tmp_path):
        records = [
            make_record(timestamp=0.25, packet_size=file_size, payload_size=file_size - 42)
            for file_size in (60, 100, 1514)
        ] + [
            make_record(
                timestamp=1.000001,
                protocol=6,
                tcp_flag=1,
                udp_flag=0,
                syn=1,
                sequence_number=0xDEADBEEF,
                acknowledgment_number=0x12345678,
                packet_size=74,
                payload_size=20,
            ),
            make_record(timestamp=2.5, protocol=1, src_port=0, dst_port=0, udp_flag=0,
                        packet_size=60, payload_size=18),
        ]
        path = tmp_path / "out.pcap"
        write_pcap(path, records)
        parsed = list(parse_capture(path))
        assert parsed == records != []

    def test_encode_frame_deterministic(self):
        rec = make_record()
        assert encode_frame(rec) == encode_frame(rec)


class TestGeneralFeatures:
    def test_udp_packet_fields(self):
        pkt = make_record(ttl=64, payload_size=100)
        values = general_features(pkt)
        assert len(values) == 18
        named = dict(zip(
            ("src_addr", "dst_addr", "protocol", "src_port", "dst_port", "tcp", "udp",
             "ttl", "ack", "syn", "fin", "psh", "urg", "rst", "sequence_number",
             "packet_size", "acknowledgment_number", "payload_size"),
            values,
        ))
        assert named["tcp"] == 0
        assert named["udp"] == 1
        assert named["ttl"] == 64
        assert named["payload_size"] == 100
        assert all(named[f] == 0 for f in ("ack", "syn", "fin", "psh", "urg", "rst"))

    def test_tcp_syn(self):
        pkt = make_record(protocol=6, tcp_flag=1, udp_flag=0, syn=1)
        values = general_features(pkt)
        assert values[9] == 1  # syn
        assert values[8] == 0  # ack
        assert values[10] == 0  # fin

    def test_deterministic(self):
        pkt = make_record()
        assert general_features(pkt) == general_features(make_record())

    def test_address_encoding_normalized(self):
        pkt = make_record(src_ip="10.0.0.255", dst_ip="10.0.0.0")
        values = general_features(pkt)
        assert values[0] == 1.0
        assert values[1] == 0.0
        zeroed = general_features(pkt, addr_mode="zero")
        assert zeroed[0] == zeroed[1] == 0.0
        with pytest.raises(ValueError):
            general_features(pkt, addr_mode="bogus")


class TestFiveTuple:
    def test_projection(self):
        pkt = make_record(src_ip="10.0.0.1", dst_ip="10.0.0.2", protocol=6,
                          src_port=5000, dst_port=80, tcp_flag=1, udp_flag=0)
        assert five_tuple_of(pkt) == FiveTuple("10.0.0.1", "10.0.0.2", 5000, 80, 6)

    def test_portless_protocol(self):
        pkt = make_record(protocol=1, src_port=0, dst_port=0, udp_flag=0)
        ft = five_tuple_of(pkt)
        assert (ft.src_port, ft.dst_port) == (0, 0)

    def test_direction_sensitive(self):
        fwd = five_tuple_of(make_record())
        rev = five_tuple_of(make_record(src_ip="10.0.0.2", dst_ip="10.0.0.1",
                                        src_port=53, dst_port=5000))
        assert fwd != rev
        assert hash(fwd) != hash(rev) or fwd != rev


class TestTrafficClass:
    def test_exactly_four_variants(self):
        assert len(TrafficClass) == 4

    def test_wire_round_trip(self):
        for cls in TrafficClass:
            assert TrafficClass.from_wire(cls.value) is cls
        with pytest.raises(ValueError):
            TrafficClass.from_wire("nonsense")
