"""Synthetic labeled traffic with class-distinct behavior.

Four generators mirror the four traffic classes: periodic small-payload UDP
telemetry (IoT benign), SYN/UDP floods from a botnet subnet (IoT malicious),
TCP application sessions (traditional benign), and a scan/flood mix with
oversized packets (traditional malicious).  Streams are deterministic for a
seed and time-sorted, so they can drive mixer, extraction, cascade, and
service tests without real captures.

Run `python -m netcascade.synth out.pcap --packets 5000 --seed 7` to materialize
a capture + sidecar pair for the CLI walkthrough.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from netcascade.capture import PacketRecord, TrafficClass


def _q(ts: float) -> float:
    # Capture files carry nanosecond ticks; generating on the same grid keeps
    # write -> parse round trips exact.
    return round(ts * 1_000_000_000) / 1_000_000_000


@dataclass(frozen=True)
class ClassProfile:
    """Knobs for one traffic class's packet factory."""

    rate: float  # packets per second
    sources: int
    tcp_share: float
    syn_share: float  # among TCP packets, how many are bare SYNs
    dst_ports: tuple[int, ...]
    scan_ports: bool  # walk destination ports instead of sampling
    payload_range: tuple[int, int]
    oversize_share: float
    ttl_range: tuple[int, int]


PROFILES: dict[TrafficClass, ClassProfile] = {
    TrafficClass.IOT_BENIGN: ClassProfile(
        rate=60.0,
        sources=6,
        tcp_share=0.1,
        syn_share=0.2,
        dst_ports=(1883, 5683, 8883),
        scan_ports=False,
        payload_range=(20, 120),
        oversize_share=0.0,
        ttl_range=(58, 64),
    ),
    TrafficClass.IOT_MALICIOUS: ClassProfile(
        rate=400.0,
        sources=24,
        tcp_share=0.7,
        syn_share=0.95,
        dst_ports=(80,),
        scan_ports=False,
        payload_range=(0, 8),
        oversize_share=0.0,
        ttl_range=(30, 48),
    ),
    TrafficClass.TRAD_BENIGN: ClassProfile(
        rate=120.0,
        sources=8,
        tcp_share=0.95,
        syn_share=0.05,
        dst_ports=(80, 443, 22),
        scan_ports=False,
        payload_range=(100, 1200),
        oversize_share=0.0,
        ttl_range=(100, 128),
    ),
    TrafficClass.TRAD_MALICIOUS: ClassProfile(
        rate=350.0,
        sources=16,
        tcp_share=0.8,
        syn_share=0.8,
        dst_ports=(0,),
        scan_ports=True,
        payload_range=(0, 40),
        oversize_share=0.08,
        ttl_range=(200, 255),
    ),
}

_SUBNETS = {
    TrafficClass.IOT_BENIGN: "10.1.0.",
    TrafficClass.IOT_MALICIOUS: "10.2.0.",
    TrafficClass.TRAD_BENIGN: "192.168.1.",
    TrafficClass.TRAD_MALICIOUS: "198.51.100.",
}
_VICTIMS = {
    TrafficClass.IOT_BENIGN: "10.0.0.1",
    TrafficClass.IOT_MALICIOUS: "10.0.0.2",
    TrafficClass.TRAD_BENIGN: "192.168.1.1",
    TrafficClass.TRAD_MALICIOUS: "203.0.113.9",
}


def _make_packet(
    cls: TrafficClass,
    profile: ClassProfile,
    ts: float,
    rng: random.Random,
    source_tag: str,
) -> PacketRecord:
    src = _SUBNETS[cls] + str(rng.randrange(2, 2 + profile.sources))
    dst = _VICTIMS[cls]
    is_tcp = rng.random() < profile.tcp_share
    payload = rng.randint(*profile.payload_range)
    if profile.oversize_share and rng.random() < profile.oversize_share:
        payload = rng.randint(1500, 2500)
    ttl = rng.randint(*profile.ttl_range)
    if profile.scan_ports:
        dst_port = rng.randrange(1, 10_000)
    else:
        dst_port = rng.choice(profile.dst_ports)
    src_port = rng.randrange(1024, 65535)
    if is_tcp:
        bare_syn = rng.random() < profile.syn_share
        syn = 1 if bare_syn else 0
        ack = 0 if bare_syn else 1
        psh = 0 if bare_syn else int(rng.random() < 0.4)
        rst = int(not bare_syn and rng.random() < 0.02)
        seq = rng.getrandbits(32)
        ackno = 0 if bare_syn else rng.getrandbits(32)
        size = 14 + 20 + 20 + payload
        return PacketRecord(
            timestamp=ts,
            src_ip=src,
            dst_ip=dst,
            protocol=6,
            src_port=src_port,
            dst_port=dst_port,
            tcp_flag=1,
            udp_flag=0,
            ttl=ttl,
            ack=ack,
            syn=syn,
            fin=int(not bare_syn and rng.random() < 0.05),
            psh=psh,
            urg=0,
            rst=rst,
            sequence_number=seq,
            acknowledgment_number=ackno,
            packet_size=size,
            payload_size=payload,
            label=cls,
            source_tag=source_tag,
        )
    size = 14 + 20 + 8 + payload
    return PacketRecord(
        timestamp=ts,
        src_ip=src,
        dst_ip=dst,
        protocol=17,
        src_port=src_port,
        dst_port=dst_port if dst_port else 53,
        tcp_flag=0,
        udp_flag=1,
        ttl=ttl,
        ack=0,
        syn=0,
        fin=0,
        psh=0,
        urg=0,
        rst=0,
        sequence_number=0,
        acknowledgment_number=0,
        packet_size=size,
        payload_size=payload,
        label=cls,
        source_tag=source_tag,
    )


def synthetic_stream(
    n_packets: int,
    seed: int = 0,
    classes: Iterable[TrafficClass] | None = None,
    start: float = 0.0,
    source_tag: str = "synth",
    drift_at: float | None = None,
) -> list[PacketRecord]:
    """Deterministic labeled stream interleaving the requested classes.

    With `drift_at` (a fraction of the stream), the malicious classes swap
    their port/payload habits at that point, shifting the class-conditional
    feature distributions mid-stream.
    """
    chosen = tuple(classes) if classes is not None else tuple(PROFILES)
    rng = random.Random(seed)
    clocks = {cls: start for cls in chosen}
    out: list[PacketRecord] = []
    profiles = dict(PROFILES)
    drift_index = int(n_packets * drift_at) if drift_at is not None else None
    for i in range(n_packets):
        if drift_index is not None and i == drift_index:
            profiles = _drifted(profiles)
        cls = min(chosen, key=lambda c: clocks[c])
        ts = _q(clocks[cls])
        clocks[cls] += rng.expovariate(profiles[cls].rate)
        out.append(_make_packet(cls, profiles[cls], ts, rng, source_tag))
    out.sort(key=lambda p: p.timestamp)
    return out


def _drifted(profiles: dict[TrafficClass, ClassProfile]) -> dict[TrafficClass, ClassProfile]:
    """Shift malicious behavior: the botnet turns into a UDP amplification
    flood and the traditional attacker moves to heavy oversized payloads."""
    out = dict(profiles)
    iot = profiles[TrafficClass.IOT_MALICIOUS]
    out[TrafficClass.IOT_MALICIOUS] = ClassProfile(
        rate=iot.rate,
        sources=iot.sources,
        tcp_share=0.05,
        syn_share=0.5,
        dst_ports=(53, 123),
        scan_ports=False,
        payload_range=(400, 900),
        oversize_share=0.0,
        ttl_range=iot.ttl_range,
    )
    trad = profiles[TrafficClass.TRAD_MALICIOUS]
    out[TrafficClass.TRAD_MALICIOUS] = ClassProfile(
        rate=trad.rate,
        sources=trad.sources,
        tcp_share=0.9,
        syn_share=0.1,
        dst_ports=(443,),
        scan_ports=False,
        payload_range=(1200, 1450),
        oversize_share=0.5,
        ttl_range=trad.ttl_range,
    )
    return out


def flow_burst(
    n_flows: int,
    packets_per_flow: int,
    seed: int = 0,
    label: TrafficClass = TrafficClass.TRAD_BENIGN,
    start: float = 0.0,
    gap: float = 0.01,
    source_tag: str = "burst",
) -> list[PacketRecord]:
    """Small TCP sessions with clean SYN -> data -> FIN structure, for tests
    that need exact flow boundaries."""
    rng = random.Random(seed)
    out: list[PacketRecord] = []
    ts = start
    for f in range(n_flows):
        src = f"172.16.0.{2 + (f % 200)}"
        dst = "172.16.0.1"
        sport = 20000 + f
        dport = 80
        seq = rng.getrandbits(32)
        for k in range(packets_per_flow):
            first = k == 0
            last = k == packets_per_flow - 1
            payload = 0 if first else rng.randint(10, 200)
            out.append(
                PacketRecord(
                    timestamp=_q(ts),
                    src_ip=src,
                    dst_ip=dst,
                    protocol=6,
                    src_port=sport,
                    dst_port=dport,
                    tcp_flag=1,
                    udp_flag=0,
                    ttl=64,
                    ack=0 if first else 1,
                    syn=1 if first else 0,
                    fin=1 if last and packets_per_flow > 1 else 0,
                    psh=0,
                    urg=0,
                    rst=0,
                    sequence_number=(seq + k) % (1 << 32),
                    acknowledgment_number=0 if first else rng.getrandbits(32),
                    packet_size=54 + payload,
                    payload_size=payload,
                    label=label,
                    source_tag=source_tag,
                )
            )
            ts += gap
    return out


def main(argv: list[str] | None = None) -> int:
    import argparse

    from netcascade.mixer import write_capture

    parser = argparse.ArgumentParser(description="Generate a synthetic labeled capture")
    parser.add_argument("output", help="capture file to write (sidecar lands next to it)")
    parser.add_argument("--packets", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--drift-at", type=float, default=None)
    args = parser.parse_args(argv)
    stream = synthetic_stream(args.packets, seed=args.seed, drift_at=args.drift_at)
    sidecar = write_capture(stream, args.output)
    print(f"wrote {len(stream)} packets to {args.output} (labels: {sidecar})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
