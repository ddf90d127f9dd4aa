"""Build labeled multi-environment streams by splicing flows between captures.

Injection never starts mid-session: a random position is drawn inside the
source capture, then rewound to the first packet of that packet's flow so the
replay begins at a clean boundary.  Labels never touch the packet bytes; they
ride in a tab-separated sidecar next to the capture file.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from netcascade.capture import (
    FiveTuple,
    PacketRecord,
    TrafficClass,
    five_tuple_of,
    parse_capture,
    write_pcap,
)


class MixError(Exception):
    """Invalid mix plan or unmixable inputs."""


@dataclass(frozen=True)
class FlowIndex:
    """Partition of one capture's packet indices into five-tuple flows."""

    flows: dict[FiveTuple, list[int]]
    first_index: dict[FiveTuple, int]

    def flow_of(self, capture: Sequence[PacketRecord], position: int) -> FiveTuple:
        return five_tuple_of(capture[position])


@dataclass(frozen=True)
class Injection:
    capture_id: str
    flow_start: int
    offset: float  # stream time (seconds) where the flow's first packet lands


@dataclass(frozen=True)
class MixPlan:
    base: str
    injections: tuple[Injection, ...]
    seed: int = 0
    flows_per_injection: int = 1

    def to_text(self) -> str:
        lines = [
            f"base = {self.base}",
            f"seed = {self.seed}",
            f"flows_per_injection = {self.flows_per_injection}",
        ]
        for inj in self.injections:
            lines.append(f"inject = {inj.capture_id} {inj.flow_start} {inj.offset!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MixPlan":
        base = ""
        seed = 0
        flows = 1
        injections: list[Injection] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MixError(f"plan line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "base":
                base = value
            elif key == "seed":
                seed = int(value)
            elif key == "flows_per_injection":
                flows = int(value)
            elif key == "inject":
                parts = value.split()
                if len(parts) != 3:
                    raise MixError(f"plan line {lineno}: inject needs 'capture index offset'")
                injections.append(Injection(parts[0], int(parts[1]), float(parts[2])))
            else:
                raise MixError(f"plan line {lineno}: unknown key {key!r}")
        if not base:
            raise MixError("plan has no base capture")
        return cls(base=base, injections=tuple(injections), seed=seed, flows_per_injection=flows)


def index_flows(capture: Sequence[PacketRecord]) -> FlowIndex:
    """Group packet indices by five-tuple, remembering each flow's first packet."""
    flows: dict[FiveTuple, list[int]] = {}
    first: dict[FiveTuple, int] = {}
    for i, pkt in enumerate(capture):
        key = five_tuple_of(pkt)
        bucket = flows.get(key)
        if bucket is None:
            flows[key] = [i]
            first[key] = i
        else:
            bucket.append(i)
    return FlowIndex(flows=flows, first_index=first)


def pick_injection(
    capture: Sequence[PacketRecord], index: FlowIndex, rng: random.Random
) -> int:
    """Draw a uniform packet position, then rewind to its flow's first packet."""
    if not capture:
        raise MixError("cannot pick an injection point in an empty capture")
    position = rng.randrange(len(capture))
    return index.first_index[five_tuple_of(capture[position])]


def random_plan(
    base: str,
    captures: Mapping[str, Sequence[PacketRecord]],
    n_injections: int,
    seed: int,
    max_offset: float,
    flows_per_injection: int = 1,
) -> MixPlan:
    """Seeded plan generator: capture choice, boundary, and offset all vary."""
    rng = random.Random(seed)
    ids = sorted(captures)
    indexes = {cid: index_flows(captures[cid]) for cid in ids}
    injections = []
    for _ in range(n_injections):
        cid = rng.choice(ids)
        start = pick_injection(captures[cid], indexes[cid], rng)
        injections.append(Injection(cid, start, rng.uniform(0.0, max_offset)))
    return MixPlan(base=base, injections=tuple(injections), seed=seed, flows_per_injection=flows_per_injection)


def _flows_from(index: FlowIndex, start: int, count: int) -> list[int]:
    """Packet indices of `count` flows, beginning at the flow that starts at `start`."""
    ordered = sorted(index.first_index.items(), key=lambda kv: kv[1])
    starts = [pos for _, pos in ordered]
    try:
        at = starts.index(start)
    except ValueError:
        raise MixError(f"index {start} is not a flow first-packet") from None
    chosen: list[int] = []
    for key, _ in ordered[at : at + count]:
        chosen.extend(index.flows[key])
    return sorted(chosen)


def merge(
    base: Sequence[PacketRecord],
    plan: MixPlan,
    captures: Mapping[str, Sequence[PacketRecord]],
) -> list[PacketRecord]:
    """Splice the plan's flows into the base stream at their offsets.

    Injected packets are time-shifted as a block (first packet lands exactly
    at the offset; intra-flow gaps are preserved, not rescaled).  Output is
    sorted by timestamp, ties broken by (source_tag, original ordinal) so a
    plan always produces the same stream.
    """
    decorated: list[tuple[float, str, int, PacketRecord]] = [
        (pkt.timestamp, pkt.source_tag, i, pkt) for i, pkt in enumerate(base)
    ]
    indexes: dict[str, FlowIndex] = {}
    for n, inj in enumerate(plan.injections):
        if inj.offset < 0:
            raise MixError(f"injection #{n} ({inj.capture_id}): negative offset {inj.offset}")
        source = captures.get(inj.capture_id)
        if source is None:
            raise MixError(f"injection #{n}: unknown capture {inj.capture_id!r}")
        if inj.capture_id not in indexes:
            indexes[inj.capture_id] = index_flows(source)
        try:
            picked = _flows_from(indexes[inj.capture_id], inj.flow_start, plan.flows_per_injection)
        except MixError as exc:
            raise MixError(f"injection #{n} ({inj.capture_id}): {exc}") from None
        shift = inj.offset - source[inj.flow_start].timestamp
        for i in picked:
            pkt = source[i]
            decorated.append((pkt.timestamp + shift, pkt.source_tag, i, pkt))
    decorated.sort(key=lambda item: item[:3])
    return [
        pkt if pkt.timestamp == ts else replace(pkt, timestamp=ts)
        for ts, _, _, pkt in decorated
    ]


def sidecar_path(capture_path: str | Path) -> Path:
    return Path(str(capture_path) + ".labels")


def write_capture(
    stream: Sequence[PacketRecord], path: str | Path, labels_path: str | Path | None = None
) -> Path:
    """Write a stream as capture file + sidecar; returns the sidecar path.

    Sidecar format: one line per packet, `ordinal<TAB>label<TAB>source_tag`.
    """
    path = Path(path)
    labels = Path(labels_path) if labels_path else sidecar_path(path)
    for i, pkt in enumerate(stream):
        if pkt.label is None:
            raise MixError(f"packet {i} is unlabeled; labeled streams only")
    write_pcap(path, list(stream))
    with open(labels, "w", encoding="utf-8") as fh:
        for i, pkt in enumerate(stream):
            fh.write(f"{i}\t{pkt.label.value}\t{pkt.source_tag}\n")
    return labels


def read_sidecar(path: str | Path) -> list[tuple[TrafficClass, str]]:
    out: list[tuple[TrafficClass, str]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise MixError(f"{path} line {lineno}: expected 3 tab-separated fields")
        ordinal, label, tag = parts
        if int(ordinal) != len(out):
            raise MixError(f"{path} line {lineno}: ordinal {ordinal} out of order")
        out.append((TrafficClass.from_wire(label), tag))
    return out


def read_labeled_capture(
    capture: str | Path, labels: str | Path | None = None
) -> list[PacketRecord]:
    """Parse a capture and re-attach its sidecar labels and source tags."""
    labels = Path(labels) if labels else sidecar_path(capture)
    records = list(parse_capture(capture))
    annotations = read_sidecar(labels)
    if len(annotations) != len(records):
        raise MixError(
            f"sidecar {labels} has {len(annotations)} lines for {len(records)} packets"
        )
    return [
        replace(pkt, label=lab, source_tag=tag)
        for pkt, (lab, tag) in zip(records, annotations)
    ]
