"""Fixed-window statistical features, vector assembly, and min-max scaling.

Windows are left-closed right-open intervals [k*PI, (k+1)*PI) over the whole
stream (global, not per-source, unless configured otherwise).  All 24 window
statistics are produced by a single-pass accumulator; variance tracking uses
Welford's update so streaming results match a two-pass recomputation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from netcascade.capture import (
    GENERAL_FEATURE_NAMES,
    PacketRecord,
    TrafficClass,
    general_features,
)


@dataclass(frozen=True)
class WindowConfig:
    """Interval length and the detection thresholds that shape the statistics.

    `short_lived_requires_flag` narrows short-lived-connection counting to
    flows that showed a SYN, FIN, or RST inside the window, so mid-stream
    fragments of long flows are not mistaken for short sessions.
    """

    processing_interval: float = 1.0
    abnormal_size_threshold: int = 1500
    port_frequency_threshold: int = 5
    short_lived_threshold: int = 5
    short_lived_requires_flag: bool = True
    group_by_source: bool = False
    addr_mode: str = "last_octet"

    def __post_init__(self) -> None:
        if self.processing_interval <= 0:
            raise ValueError("processing_interval must be positive")
        if self.abnormal_size_threshold <= 0 or self.port_frequency_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.short_lived_threshold <= 0:
            raise ValueError("short_lived_threshold must be positive")

    def to_dict(self) -> dict:
        return {
            "processing_interval": self.processing_interval,
            "abnormal_size_threshold": self.abnormal_size_threshold,
            "port_frequency_threshold": self.port_frequency_threshold,
            "short_lived_threshold": self.short_lived_threshold,
            "short_lived_requires_flag": self.short_lived_requires_flag,
            "group_by_source": self.group_by_source,
            "addr_mode": self.addr_mode,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WindowConfig":
        return cls(**dict(data))


STAT_FEATURE_NAMES: tuple[str, ...] = (
    "packet_count",
    "dst_port_entropy",
    "most_freq_src_port",
    "most_freq_dst_port",
    "short_lived_connections",
    "repeated_connection_attempts",
    "scanning_count",
    "flow_rate",
    "source_entropy",
    "rst_count",
    "most_freq_packet_size_freq",
    "abnormal_size_frequency",
    "sequence_number_variance",
    "avg_packet_number",
    "syn_frequency",
    "ack_frequency",
    "tcp_frequency",
    "udp_frequency",
    "most_freq_protocol",
    "packet_size_variance",
    "most_freq_payload_size",
    "avg_payload_size",
    "packet_size_stddev",
    "avg_packet_size",
)

FEATURE_NAMES: tuple[str, ...] = GENERAL_FEATURE_NAMES + STAT_FEATURE_NAMES
N_FEATURES = len(FEATURE_NAMES)  # 42

CSV_HEADER: tuple[str, ...] = FEATURE_NAMES + ("window_id", "label")


@dataclass(frozen=True)
class WindowStats:
    """The 24 per-window statistics, in their fixed vector order."""

    window_id: int
    packet_count: int
    dst_port_entropy: float
    most_freq_src_port: int
    most_freq_dst_port: int
    short_lived_connections: int
    repeated_connection_attempts: int
    scanning_count: int
    flow_rate: float
    source_entropy: float
    rst_count: int
    most_freq_packet_size_freq: int
    abnormal_size_frequency: int
    sequence_number_variance: float
    avg_packet_number: float
    syn_frequency: float
    ack_frequency: float
    tcp_frequency: float
    udp_frequency: float
    most_freq_protocol: int
    packet_size_variance: float
    most_freq_payload_size: int
    avg_payload_size: float
    packet_size_stddev: float
    avg_packet_size: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            float(self.packet_count),
            self.dst_port_entropy,
            float(self.most_freq_src_port),
            float(self.most_freq_dst_port),
            float(self.short_lived_connections),
            float(self.repeated_connection_attempts),
            float(self.scanning_count),
            self.flow_rate,
            self.source_entropy,
            float(self.rst_count),
            float(self.most_freq_packet_size_freq),
            float(self.abnormal_size_frequency),
            self.sequence_number_variance,
            self.avg_packet_number,
            self.syn_frequency,
            self.ack_frequency,
            self.tcp_frequency,
            self.udp_frequency,
            float(self.most_freq_protocol),
            self.packet_size_variance,
            float(self.most_freq_payload_size),
            self.avg_payload_size,
            self.packet_size_stddev,
            self.avg_packet_size,
        )


@dataclass(frozen=True)
class FeatureVector:
    """Model input: 18 general values followed by the 24 window statistics."""

    values: tuple[float, ...]
    window_id: int
    label: TrafficClass | None = None

    def __post_init__(self) -> None:
        if len(self.values) != N_FEATURES:
            raise ValueError(f"feature vector needs {N_FEATURES} values, got {len(self.values)}")


def window_id(timestamp: float, cfg: WindowConfig) -> int:
    """Index of the [k*PI, (k+1)*PI) window containing the timestamp."""
    if timestamp < 0:
        raise ValueError("timestamps must be non-negative")
    return int(timestamp // cfg.processing_interval)


def entropy(counts: Iterable[int] | Mapping[object, int]) -> float:
    """Natural-log Shannon entropy of an empirical count distribution."""
    if isinstance(counts, Mapping):
        counts = counts.values()
    values = [c for c in counts if c > 0]
    total = sum(values)
    if total <= 0:
        raise ValueError("entropy needs at least one observation")
    # 0*log(0) contributes nothing; zero counts are dropped above.
    return -sum((c / total) * math.log(c / total) for c in values)


def _modal_value(counts: dict[int, int], min_count: int = 0) -> int:
    """Most frequent key; ties go to the smallest key; below min_count -> 0."""
    best_key = 0
    best_count = 0
    for key, count in counts.items():
        if count > best_count or (count == best_count and key < best_key):
            best_key, best_count = key, count
    if best_count < min_count:
        return 0
    return best_key


class WindowAccumulator:
    """Single-pass builder of one window's statistics.

    Single-writer: feed packets of exactly one window in stream order, then
    call `finalize()` once.  Distinct windows can be accumulated in parallel.
    """

    def __init__(self, window_id: int, cfg: WindowConfig):
        self.window_id = window_id
        self.cfg = cfg
        self.n = 0
        self.tcp = 0
        self.udp = 0
        self.syn = 0
        self.ack = 0
        self.rst = 0
        self.scanning = 0
        self.abnormal = 0
        self.repeated = 0
        self.payload_sum = 0
        self.src_port_counts: dict[int, int] = {}
        self.dst_port_counts: dict[int, int] = {}
        self.proto_counts: dict[int, int] = {}
        self.size_counts: dict[int, int] = {}
        self.payload_counts: dict[int, int] = {}
        self.src_counts: dict[str, int] = {}
        self.flow_counts: dict[tuple, int] = {}
        self.flow_flagged: set[tuple] = set()
        self.syn_triples: set[tuple] = set()
        # Welford state for sequence-number and packet-size variance.
        self._seq_mean = 0.0
        self._seq_m2 = 0.0
        self._size_mean = 0.0
        self._size_m2 = 0.0

    def add(self, pkt: PacketRecord) -> None:
        self.n += 1
        n = self.n
        self.tcp += pkt.tcp_flag
        self.udp += pkt.udp_flag
        self.syn += pkt.syn
        self.ack += pkt.ack
        self.rst += pkt.rst
        if pkt.syn and not pkt.ack:
            self.scanning += 1
        if pkt.packet_size > self.cfg.abnormal_size_threshold:
            self.abnormal += 1
        self.payload_sum += pkt.payload_size

        for counts, key in (
            (self.src_port_counts, pkt.src_port),
            (self.dst_port_counts, pkt.dst_port),
            (self.proto_counts, pkt.protocol),
            (self.size_counts, pkt.packet_size),
            (self.payload_counts, pkt.payload_size),
        ):
            counts[key] = counts.get(key, 0) + 1
        self.src_counts[pkt.src_ip] = self.src_counts.get(pkt.src_ip, 0) + 1

        flow = (pkt.src_ip, pkt.dst_ip, pkt.src_port, pkt.dst_port, pkt.protocol)
        self.flow_counts[flow] = self.flow_counts.get(flow, 0) + 1
        if pkt.syn or pkt.fin or pkt.rst:
            self.flow_flagged.add(flow)

        if pkt.syn:
            triple = (pkt.src_ip, pkt.dst_ip, pkt.dst_port)
            if triple in self.syn_triples:
                self.repeated += 1
            else:
                self.syn_triples.add(triple)

        delta = pkt.sequence_number - self._seq_mean
        self._seq_mean += delta / n
        self._seq_m2 += delta * (pkt.sequence_number - self._seq_mean)
        delta = pkt.packet_size - self._size_mean
        self._size_mean += delta / n
        self._size_m2 += delta * (pkt.packet_size - self._size_mean)

    def finalize(self) -> WindowStats:
        if self.n == 0:
            raise ValueError("window has no packets")
        cfg = self.cfg
        n = self.n
        interval = cfg.processing_interval
        if cfg.short_lived_requires_flag:
            short_lived = sum(
                1
                for flow, count in self.flow_counts.items()
                if count < cfg.short_lived_threshold and flow in self.flow_flagged
            )
        else:
            short_lived = sum(
                1 for count in self.flow_counts.values() if count < cfg.short_lived_threshold
            )
        size_var = self._size_m2 / n
        return WindowStats(
            window_id=self.window_id,
            packet_count=n,
            dst_port_entropy=entropy(self.dst_port_counts),
            most_freq_src_port=_modal_value(self.src_port_counts, cfg.port_frequency_threshold),
            most_freq_dst_port=_modal_value(self.dst_port_counts, cfg.port_frequency_threshold),
            short_lived_connections=short_lived,
            repeated_connection_attempts=self.repeated,
            scanning_count=self.scanning,
            flow_rate=n / interval,
            source_entropy=entropy(self.src_counts),
            rst_count=self.rst,
            most_freq_packet_size_freq=max(self.size_counts.values()),
            abnormal_size_frequency=self.abnormal,
            sequence_number_variance=self._seq_m2 / n,
            avg_packet_number=float(n),
            syn_frequency=self.syn / interval,
            ack_frequency=self.ack / interval,
            tcp_frequency=self.tcp / n,
            udp_frequency=self.udp / n,
            most_freq_protocol=_modal_value(self.proto_counts),
            packet_size_variance=size_var,
            most_freq_payload_size=_modal_value(self.payload_counts),
            avg_payload_size=self.payload_sum / n,
            packet_size_stddev=math.sqrt(size_var),
            avg_packet_size=self._size_mean,
        )


def compute_window_stats(
    packets: Sequence[PacketRecord], cfg: WindowConfig, wid: int | None = None
) -> WindowStats:
    """Statistics for one window's packets (all must share the window)."""
    if not packets:
        raise ValueError("window has no packets")
    ids = {window_id(p.timestamp, cfg) for p in packets}
    if len(ids) > 1:
        raise ValueError(f"packets span windows {sorted(ids)}")
    actual = ids.pop()
    if wid is not None and wid != actual:
        raise ValueError(f"packets belong to window {actual}, not {wid}")
    acc = WindowAccumulator(actual, cfg)
    for pkt in packets:
        acc.add(pkt)
    return acc.finalize()


def window_batches(
    stream: Iterable[PacketRecord], cfg: WindowConfig
) -> Iterator[tuple[int, list[PacketRecord]]]:
    """Group a time-sorted stream into consecutive windows.

    With `group_by_source` enabled, each window is further split per source
    address and the sub-batches are emitted in first-seen order.
    """
    current_id: int | None = None
    bucket: list[PacketRecord] = []
    for pkt in stream:
        wid = window_id(pkt.timestamp, cfg)
        if current_id is None:
            current_id = wid
        elif wid < current_id:
            raise ValueError("stream timestamps are not non-decreasing")
        if wid != current_id:
            yield from _emit(current_id, bucket, cfg)
            current_id = wid
            bucket = []
        bucket.append(pkt)
    if bucket:
        yield from _emit(current_id, bucket, cfg)  # type: ignore[arg-type]


def _emit(
    wid: int, bucket: list[PacketRecord], cfg: WindowConfig
) -> Iterator[tuple[int, list[PacketRecord]]]:
    if not cfg.group_by_source:
        yield wid, bucket
        return
    groups: dict[str, list[PacketRecord]] = {}
    for pkt in bucket:
        groups.setdefault(pkt.src_ip, []).append(pkt)
    for pkts in groups.values():
        yield wid, pkts


def assemble(pkt: PacketRecord, stats: WindowStats, cfg: WindowConfig) -> FeatureVector:
    """Join one packet's general features with its window's statistics."""
    if window_id(pkt.timestamp, cfg) != stats.window_id:
        raise ValueError(
            f"packet at t={pkt.timestamp} is not in window {stats.window_id}"
        )
    return FeatureVector(
        values=general_features(pkt, cfg.addr_mode) + stats.as_tuple(),
        window_id=stats.window_id,
        label=pkt.label,
    )


def stream_vectors(
    stream: Iterable[PacketRecord], cfg: WindowConfig
) -> Iterator[FeatureVector]:
    """Full extraction pipeline: windows -> stats -> one vector per packet."""
    for wid, pkts in window_batches(stream, cfg):
        acc = WindowAccumulator(wid, cfg)
        for pkt in pkts:
            acc.add(pkt)
        stats = acc.finalize()
        suffix = stats.as_tuple()
        for pkt in pkts:
            yield FeatureVector(
                values=general_features(pkt, cfg.addr_mode) + suffix,
                window_id=wid,
                label=pkt.label,
            )


# ---------------------------------------------------------------------------
# Min-max scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        if self.minimum.shape != self.maximum.shape:
            raise ValueError("scaler min/max shapes differ")
        if np.any(self.minimum > self.maximum):
            raise ValueError("scaler has min > max")

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScalerParams":
        return cls(
            minimum=np.asarray(data["min"], dtype=float),
            maximum=np.asarray(data["max"], dtype=float),
        )


def fit_scaler(vectors: Sequence[Sequence[float]] | np.ndarray) -> ScalerParams:
    matrix = np.asarray(vectors, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError("fit_scaler needs at least one vector")
    return ScalerParams(minimum=matrix.min(axis=0), maximum=matrix.max(axis=0))


def apply_scaler(params: ScalerParams, vector: Sequence[float] | np.ndarray) -> np.ndarray:
    """Map to [0, 1]: (x - min) / (max - min), clamped; constant dims map to 0."""
    data = np.asarray(vector, dtype=float)
    if data.shape[-1] != params.minimum.shape[0]:
        raise ValueError(
            f"vector has {data.shape[-1]} dims, scaler has {params.minimum.shape[0]}"
        )
    span = params.maximum - params.minimum
    safe = np.where(span > 0, span, 1.0)
    scaled = (data - params.minimum) / safe
    scaled = np.where(span > 0, scaled, 0.0)
    return np.clip(scaled, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Feature CSV (offline training input and oracle-test surface)
# ---------------------------------------------------------------------------

def write_feature_csv(path: str | Path, vectors: Iterable[FeatureVector]) -> int:
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for vec in vectors:
            label = vec.label.value if vec.label is not None else ""
            writer.writerow([repr(v) for v in vec.values] + [vec.window_id, label])
            count += 1
    return count


def read_feature_csv(path: str | Path) -> list[FeatureVector]:
    out: list[FeatureVector] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        for row in reader:
            values = tuple(float(v) for v in row[:N_FEATURES])
            wid = int(row[N_FEATURES])
            label_text = row[N_FEATURES + 1]
            label = TrafficClass.from_wire(label_text) if label_text else None
            out.append(FeatureVector(values=values, window_id=wid, label=label))
    return out
