"""Confidence-gated two-level cascade with human escalation and continual M1 updates.

Per packet: M1 predicts; confidence at or above theta accepts immediately.
Otherwise M2 predicts; strictly above theta accepts AND retrains M1 on M2's
label.  Otherwise the packet escalates to a human, whose label also retrains
M1.  Retraining is one partial update blended with the previous parameters
(retention fraction alpha), and only M1 ever learns online — M2 retraining is
an offline job.

The boundary asymmetry (>= at M1, strictly > at M2) is deliberate and
configurable.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from netcascade.capture import FiveTuple, PacketRecord, TrafficClass, five_tuple_of
from netcascade.features import (
    ScalerParams,
    WindowAccumulator,
    WindowConfig,
    apply_scaler,
    general_features,
    window_batches,
)
from netcascade.models import CLASSES, OnlineModel, Prediction, interpolate

logger = logging.getLogger(__name__)

HUMAN_MODES = ("interactive", "oracle", "none")


class CascadeUsageError(Exception):
    pass


class UnknownRecordError(KeyError):
    pass


class AlreadyResolvedError(Exception):
    pass


@dataclass(frozen=True)
class CascadeConfig:
    """Thresholds and behavior knobs for one run.

    theta may sit at its 0 and 1 extremes for boundary experiments; alpha is
    the retention fraction handed to `interpolate`.
    """

    theta: float = 0.9
    alpha: float = 0.75
    scenario: int = 5
    human_mode: str = "oracle"
    batch_size: int = 1000
    m1_accept_strict: bool = False  # False: gamma1 >= theta accepts at M1
    human_timeout: float = 60.0
    scenario2_label_prob: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be within [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be within [0, 1]")
        if self.scenario not in (1, 2, 3, 4, 5):
            raise ValueError("scenario must be 1-5")
        if self.human_mode not in HUMAN_MODES:
            raise ValueError(f"human_mode must be one of {HUMAN_MODES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class EscalationRecord:
    """A packet awaiting (or having received) a second opinion."""

    id: str
    features: tuple[float, ...]
    five_tuple: FiveTuple
    timestamp: float
    packet_size: int
    payload_size: int
    m1_prediction: Prediction
    m2_prediction: Prediction | None
    status: str  # pending_m2 | pending_human | resolved
    created_at: float
    ground_truth: TrafficClass | None = None
    final_label: TrafficClass | None = None
    label_provenance: str | None = None
    resolved_at: float | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "five_tuple": f"{self.five_tuple.src_ip}:{self.five_tuple.src_port}->"
            f"{self.five_tuple.dst_ip}:{self.five_tuple.dst_port}/{self.five_tuple.protocol}",
            "timestamp": self.timestamp,
            "packet_size": self.packet_size,
            "payload_size": self.payload_size,
            "gamma1": self.m1_prediction.confidence,
            "m1_label": self.m1_prediction.label.value,
            "gamma2": self.m2_prediction.confidence if self.m2_prediction else None,
            "m2_label": self.m2_prediction.label.value if self.m2_prediction else None,
            "status": self.status,
            "created_at": self.created_at,
            "final_label": self.final_label.value if self.final_label else None,
            "label_provenance": self.label_provenance,
            "features": list(self.features),
        }


@dataclass
class RunMetrics:
    """Cascade accounting in the TRP/CPP/HIR/HE scheme.

    *_trp counts packets received at a level; *_cpp counts packets both
    resolved at that level via its confidence gate and correct against ground
    truth; hir counts packets whose confidence failed both gates.  he is
    hir / m1_trp.
    """

    m1_trp: int = 0
    m1_cpp: int = 0
    m2_trp: int = 0
    m2_cpp: int = 0
    hir: int = 0
    he: float = 0.0
    accuracy: float | None = None
    throughput: float | None = None
    batch_accuracy: list[float] = field(default_factory=list)
    retrain_events: int = 0
    provenance_counts: dict[str, int] = field(default_factory=dict)
    evaluated: int = 0
    correct: int = 0

    def to_dict(self) -> dict:
        return {
            "m1_trp": self.m1_trp,
            "m1_cpp": self.m1_cpp,
            "m2_trp": self.m2_trp,
            "m2_cpp": self.m2_cpp,
            "hir": self.hir,
            "he": self.he,
            "he_percent": self.he * 100.0,
            "accuracy": self.accuracy,
            "throughput": self.throughput,
            "batch_accuracy": list(self.batch_accuracy),
            "retrain_events": self.retrain_events,
            "provenance_counts": dict(self.provenance_counts),
        }


@dataclass(frozen=True)
class Resolution:
    label: TrafficClass | None
    provenance: str | None
    gamma1: float
    gamma2: float | None
    record_id: str | None
    pending: bool = False


@dataclass(frozen=True)
class PacketMeta:
    five_tuple: FiveTuple
    timestamp: float
    packet_size: int = 0
    payload_size: int = 0

    @classmethod
    def of(cls, pkt: PacketRecord) -> "PacketMeta":
        return cls(five_tuple_of(pkt), pkt.timestamp, pkt.packet_size, pkt.payload_size)


_FALLBACK_META = PacketMeta(FiveTuple("0.0.0.0", "0.0.0.0", 0, 0, 0), 0.0)


class Cascade:
    """Single-writer coordinator over M1/M2 and the human review queue.

    Predictions read the current model snapshot; retrains publish a new
    snapshot under the lock, so concurrent API readers never see a half
    update.
    """

    def __init__(
        self,
        m1: OnlineModel,
        m2: OnlineModel | None,
        config: CascadeConfig,
        event_sink: Callable[[dict], None] | None = None,
        clock: Callable[[], float] = time.time,
    ):
        if config.scenario in (3, 4, 5) and m2 is None:
            raise CascadeUsageError(f"scenario {config.scenario} requires an M2 model")
        self.m1 = m1
        self.m2 = m2
        self.config = config
        self._event_sink = event_sink
        self._clock = clock
        self._lock = threading.RLock()
        self._pending: dict[str, EscalationRecord] = {}
        self._resolved_ids: set[str] = set()
        self._next_id = 0
        self._metrics = RunMetrics()
        self._batch_correct = 0
        self._batch_count = 0
        self.listeners: list[Callable[[str, dict], None]] = []

    # -- events ------------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> None:
        if self._event_sink is not None:
            self._event_sink({"kind": kind, **payload})
        for listener in self.listeners:
            listener(kind, payload)

    def _log_resolution(self, record_id: str | None, meta: PacketMeta, res: Resolution,
                        ground_truth: TrafficClass | None) -> None:
        entry = {
            "kind": "resolution",
            "id": record_id or "",
            "ts": meta.timestamp,
            "five_tuple": f"{meta.five_tuple.src_ip}:{meta.five_tuple.src_port}->"
            f"{meta.five_tuple.dst_ip}:{meta.five_tuple.dst_port}/{meta.five_tuple.protocol}",
            "gamma1": res.gamma1,
            "provenance": res.provenance,
            "label": res.label.value if res.label else None,
        }
        if res.gamma2 is not None:
            entry["gamma2"] = res.gamma2
        if ground_truth is not None:
            entry["ground_truth"] = ground_truth.value
        self._emit("resolution", entry)

    # -- accounting ----------------------------------------------------------

    def _count_final(self, label: TrafficClass, ground_truth: TrafficClass | None) -> None:
        if ground_truth is None:
            return
        m = self._metrics
        m.evaluated += 1
        correct = label == ground_truth
        if correct:
            m.correct += 1
            self._batch_correct += 1
        self._batch_count += 1
        if self._batch_count >= self.config.batch_size:
            m.batch_accuracy.append(self._batch_correct / self._batch_count)
            self._batch_correct = 0
            self._batch_count = 0

    def _retrain(self, x: np.ndarray, label: TrafficClass) -> None:
        updated = self.m1.update(x, label)
        self.m1 = interpolate(self.m1, updated, self.config.alpha)
        self._metrics.retrain_events += 1
        self._emit("retrain", {"kind": "retrain", "label": label.value})

    def _bump_provenance(self, provenance: str) -> None:
        counts = self._metrics.provenance_counts
        counts[provenance] = counts.get(provenance, 0) + 1

    # -- the decision procedure ---------------------------------------------

    def process(
        self,
        x: np.ndarray,
        ground_truth: TrafficClass | None = None,
        meta: PacketMeta | None = None,
    ) -> Resolution:
        """Run one feature vector through M1 -> M2 -> human."""
        meta = meta or _FALLBACK_META
        cfg = self.config
        with self._lock:
            m = self._metrics
            m.m1_trp += 1
            p1 = self.m1.predict(x)
            accepted = p1.confidence > cfg.theta if cfg.m1_accept_strict else p1.confidence >= cfg.theta
            if accepted:
                if ground_truth is not None and p1.label == ground_truth:
                    m.m1_cpp += 1
                res = Resolution(p1.label, "m1", p1.confidence, None, None)
                self._bump_provenance("m1")
                self._count_final(p1.label, ground_truth)
                self._log_resolution(None, meta, res, ground_truth)
                return res

            if self.m2 is None:
                raise CascadeUsageError("low-confidence packet but no M2 is configured")
            m.m2_trp += 1
            p2 = self.m2.predict(x)
            if p2.confidence > cfg.theta:
                if ground_truth is not None and p2.label == ground_truth:
                    m.m2_cpp += 1
                res = Resolution(p2.label, "m2", p1.confidence, p2.confidence, None)
                self._bump_provenance("m2")
                self._retrain(np.asarray(x, dtype=float), p2.label)
                self._count_final(p2.label, ground_truth)
                self._log_resolution(None, meta, res, ground_truth)
                return res

            # Past both gates: this packet needs a human.
            record = EscalationRecord(
                id=f"esc-{self._next_id:08d}",
                features=tuple(float(v) for v in np.asarray(x, dtype=float)),
                five_tuple=meta.five_tuple,
                timestamp=meta.timestamp,
                packet_size=meta.packet_size,
                payload_size=meta.payload_size,
                m1_prediction=p1,
                m2_prediction=p2,
                status="pending_human",
                created_at=self._clock(),
                ground_truth=ground_truth,
            )
            self._next_id += 1

            if cfg.human_mode == "oracle":
                if ground_truth is None:
                    logger.warning("oracle human mode without ground truth; falling back to M2 label")
                    return self._resolve_locked(record, p2.label, "m2")
                return self._resolve_locked(record, ground_truth, "human")
            if cfg.human_mode == "none":
                # No analyst attached: M2's label is terminal, but the packet
                # still counts as requiring intervention.
                logger.debug("human_mode=none: resolving %s with M2 label", record.id)
                return self._resolve_locked(record, p2.label, "m2")
            self._pending[record.id] = record
            self._emit("escalation_created", record.to_dict())
            return Resolution(None, None, p1.confidence, p2.confidence, record.id, pending=True)

    def _resolve_locked(
        self, record: EscalationRecord, label: TrafficClass, provenance: str
    ) -> Resolution:
        record.status = "resolved"
        record.final_label = label
        record.label_provenance = provenance
        record.resolved_at = self._clock()
        self._resolved_ids.add(record.id)
        self._pending.pop(record.id, None)
        self._metrics.hir += 1
        self._bump_provenance(provenance)
        self._retrain(np.asarray(record.features, dtype=float), label)
        self._count_final(label, record.ground_truth)
        res = Resolution(
            label,
            provenance,
            record.m1_prediction.confidence,
            record.m2_prediction.confidence if record.m2_prediction else None,
            record.id,
        )
        meta = PacketMeta(record.five_tuple, record.timestamp, record.packet_size, record.payload_size)
        self._log_resolution(record.id, meta, res, record.ground_truth)
        self._emit(
            "escalation_resolved",
            {"id": record.id, "label": label.value, "provenance": provenance},
        )
        return res

    # -- review queue --------------------------------------------------------

    def pending_records(self) -> list[EscalationRecord]:
        with self._lock:
            return sorted(self._pending.values(), key=lambda r: r.created_at)

    def submit_human_label(self, record_id: str, label: TrafficClass) -> Resolution:
        """Resolve a pending escalation with an analyst's label.

        Unknown ids raise UnknownRecordError; ids that already resolved (by a
        person or by timeout) raise AlreadyResolvedError without touching any
        counter.
        """
        with self._lock:
            record = self._pending.get(record_id)
            if record is None:
                if record_id in self._resolved_ids:
                    raise AlreadyResolvedError(record_id)
                raise UnknownRecordError(record_id)
            return self._resolve_locked(record, label, "human")

    def check_timeouts(self, now: float | None = None) -> int:
        """Fall pending records older than the timeout back to M2's label."""
        now = self._clock() if now is None else now
        expired = 0
        with self._lock:
            for record in list(self._pending.values()):
                if now - record.created_at >= self.config.human_timeout:
                    assert record.m2_prediction is not None
                    logger.warning("escalation %s timed out; using M2 label", record.id)
                    self._resolve_locked(record, record.m2_prediction.label, "m2")
                    expired += 1
        return expired

    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending)

    def metrics_snapshot(self) -> RunMetrics:
        """Point-in-time copy; counters keep running afterwards."""
        with self._lock:
            m = self._metrics
            snap = RunMetrics(
                m1_trp=m.m1_trp,
                m1_cpp=m.m1_cpp,
                m2_trp=m.m2_trp,
                m2_cpp=m.m2_cpp,
                hir=m.hir,
                he=m.hir / m.m1_trp if m.m1_trp else 0.0,
                accuracy=m.correct / m.evaluated if m.evaluated else None,
                throughput=m.throughput,
                batch_accuracy=list(m.batch_accuracy),
                retrain_events=m.retrain_events,
                provenance_counts=dict(m.provenance_counts),
                evaluated=m.evaluated,
                correct=m.correct,
            )
            return snap


def retrain_m1(m1: OnlineModel, x: np.ndarray, label: TrafficClass, alpha: float) -> OnlineModel:
    """One continual-learning step: partial update blended with the old weights."""
    return interpolate(m1, m1.update(np.asarray(x, dtype=float), label), alpha)


class JsonlWriter:
    """Append-only JSON-lines sink for the run event log."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def __call__(self, obj: dict) -> None:
        with self._lock:
            self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


# ---------------------------------------------------------------------------
# Scenario runner
# ---------------------------------------------------------------------------

def run_scenario(
    stream: Sequence[PacketRecord],
    scenario: int,
    cascade_cfg: CascadeConfig,
    window_cfg: WindowConfig,
    scaler: ScalerParams,
    m1: OnlineModel | None,
    m2: OnlineModel | None,
    event_sink: Callable[[dict], None] | None = None,
    pace: str = "max",
    sleep: Callable[[float], None] = time.sleep,
) -> RunMetrics:
    """Replay a labeled stream under one of the five deployment scenarios.

    1: frozen M1.  2: M1 retrained from ground-truth replay (seeded
    subsampling).  3: frozen M2.  4: full cascade without an analyst (M2's
    label is terminal).  5: full cascade with the sidecar acting as the
    analyst.  `pace="real-time"` sleeps so replay follows packet timestamps.
    """
    if scenario in (1, 2) and m1 is None:
        raise CascadeUsageError(f"scenario {scenario} requires M1")
    if scenario in (3, 4, 5) and m2 is None:
        raise CascadeUsageError(f"scenario {scenario} requires M2")
    if scenario in (4, 5) and m1 is None:
        raise CascadeUsageError(f"scenario {scenario} requires M1")

    cfg = CascadeConfig(
        theta=cascade_cfg.theta,
        alpha=cascade_cfg.alpha,
        scenario=scenario,
        human_mode="none" if scenario == 4 else cascade_cfg.human_mode,
        batch_size=cascade_cfg.batch_size,
        m1_accept_strict=cascade_cfg.m1_accept_strict,
        human_timeout=cascade_cfg.human_timeout,
        scenario2_label_prob=cascade_cfg.scenario2_label_prob,
        seed=cascade_cfg.seed,
    )

    rng = np.random.default_rng(cfg.seed)
    start_wall = time.perf_counter()
    start_ts: float | None = None
    packets = 0

    if scenario in (4, 5):
        assert m1 is not None
        coordinator = Cascade(m1, m2, cfg, event_sink=event_sink)
        for wid, pkts in window_batches(stream, window_cfg):
            if start_ts is None:
                start_ts = pkts[0].timestamp
            _pace_window(pace, wid, window_cfg, start_ts, start_wall, sleep)
            X = _window_matrix(pkts, wid, window_cfg, scaler)
            for row, pkt in zip(X, pkts):
                coordinator.process(row, ground_truth=pkt.label, meta=PacketMeta.of(pkt))
            packets += len(pkts)
        metrics = coordinator.metrics_snapshot()
    else:
        metrics = RunMetrics()
        model = m1 if scenario in (1, 2) else m2
        assert model is not None
        batch_correct = 0
        batch_count = 0
        for wid, pkts in window_batches(stream, window_cfg):
            if start_ts is None:
                start_ts = pkts[0].timestamp
            _pace_window(pace, wid, window_cfg, start_ts, start_wall, sleep)
            X = _window_matrix(pkts, wid, window_cfg, scaler)
            if scenario == 2:
                draws = rng.random(len(pkts))
                for i, (row, pkt) in enumerate(zip(X, pkts)):
                    predicted = model.predict(row).label
                    metrics.m1_trp += 1
                    if pkt.label is not None:
                        metrics.evaluated += 1
                        ok = predicted == pkt.label
                        metrics.correct += int(ok)
                        if ok:
                            metrics.m1_cpp += 1
                            batch_correct += 1
                        batch_count += 1
                        if draws[i] < cfg.scenario2_label_prob:
                            model = retrain_m1(model, row, pkt.label, cfg.alpha)
                            metrics.retrain_events += 1
                    if batch_count >= cfg.batch_size:
                        metrics.batch_accuracy.append(batch_correct / batch_count)
                        batch_correct = 0
                        batch_count = 0
            else:
                labels, confs = model.predict_batch(X)
                n = len(pkts)
                if scenario == 1:
                    metrics.m1_trp += n
                else:
                    metrics.m2_trp += n
                for idx, pkt in zip(labels, pkts):
                    if pkt.label is None:
                        continue
                    predicted = CLASSES[int(idx)]
                    metrics.evaluated += 1
                    ok = predicted == pkt.label
                    metrics.correct += int(ok)
                    if ok:
                        if scenario == 1:
                            metrics.m1_cpp += 1
                        else:
                            metrics.m2_cpp += 1
                        batch_correct += 1
                    batch_count += 1
                    if batch_count >= cfg.batch_size:
                        metrics.batch_accuracy.append(batch_correct / batch_count)
                        batch_correct = 0
                        batch_count = 0
            packets += len(pkts)
        metrics.he = metrics.hir / metrics.m1_trp if metrics.m1_trp else 0.0
        metrics.accuracy = metrics.correct / metrics.evaluated if metrics.evaluated else None

    elapsed = time.perf_counter() - start_wall
    metrics.throughput = packets / elapsed if elapsed > 0 else None
    return metrics


def _window_matrix(
    pkts: Sequence[PacketRecord], wid: int, cfg: WindowConfig, scaler: ScalerParams
) -> np.ndarray:
    acc = WindowAccumulator(wid, cfg)
    for pkt in pkts:
        acc.add(pkt)
    suffix = acc.finalize().as_tuple()
    raw = np.array([general_features(p, cfg.addr_mode) + suffix for p in pkts])
    return apply_scaler(scaler, raw)


def _pace_window(
    pace: str,
    wid: int,
    window_cfg: WindowConfig,
    start_ts: float,
    start_wall: float,
    sleep: Callable[[float], None],
) -> None:
    # A window's statistics exist only once the window closes, so real-time
    # replay releases each batch at the window's end boundary.
    if pace != "real-time":
        return
    due = (wid + 1) * window_cfg.processing_interval - start_ts
    ahead = due - (time.perf_counter() - start_wall)
    if ahead > 0:
        sleep(ahead)
