"""HTTP service for the analyst console and the live replay loop.

The coordinator consumes the capture on a background thread while analysts
read the review queue and post labels over a small JSON API.  Every
escalation and resolution is pushed to subscribers as newline-delimited JSON
on /api/events, along with a metrics tick every second.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from netcascade.capture import TrafficClass
from netcascade.cascade import (
    AlreadyResolvedError,
    Cascade,
    CascadeConfig,
    JsonlWriter,
    PacketMeta,
    UnknownRecordError,
)
from netcascade.features import WindowConfig
from netcascade.mixer import read_labeled_capture
from netcascade.models import load_bundle

logger = logging.getLogger(__name__)


def parse_kv(text: str) -> dict[str, str]:
    """Parse a `key = value` document; '#' starts a comment line."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    m1_model: str = ""
    m2_model: str = ""
    capture: str = ""
    sidecar: str = ""
    event_log: str = ""
    theta: float = 0.9
    alpha: float = 0.75
    batch_size: int = 1000
    human_timeout: float = 60.0
    tick_interval: float = 1.0
    pace: str = "max"  # or "real-time"
    auth_token: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError("port must be within 1-65535")
        if self.pace not in ("max", "real-time"):
            raise ValueError("pace must be 'max' or 'real-time'")

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        values = parse_kv(Path(path).read_text(encoding="utf-8"))
        cfg = cls()
        for key, raw in values.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                setattr(cfg, key, raw.lower() in ("1", "true", "yes"))
            elif isinstance(current, int):
                setattr(cfg, key, int(raw))
            elif isinstance(current, float):
                setattr(cfg, key, float(raw))
            else:
                setattr(cfg, key, raw)
        return cfg

    def validate_paths(self) -> None:
        for name in ("m1_model", "m2_model", "capture"):
            value = getattr(self, name)
            if not value:
                raise ValueError(f"service config is missing {name}")
            if not Path(value).exists():
                raise ValueError(f"{name} path does not exist: {value}")
        if self.sidecar and not Path(self.sidecar).exists():
            raise ValueError(f"sidecar path does not exist: {self.sidecar}")


class Broadcaster:
    """Fan-out of ApiEvents to any number of stream subscribers."""

    def __init__(self) -> None:
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=1000)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, kind: str, payload: dict) -> None:
        event = {"kind": kind, "payload": payload}
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(event)
            except queue.Full:
                logger.warning("event subscriber queue full; dropping event")

    def count(self) -> int:
        with self._lock:
            return len(self._subscribers)


class ServiceRuntime:
    """Owns the cascade, the replay thread, and the 1 s maintenance loop."""

    def __init__(self, config: ServiceConfig):
        config.validate_paths()
        self.config = config
        m1_bundle = load_bundle(config.m1_model)
        m2_bundle = load_bundle(config.m2_model, expected_dim=m1_bundle.model.dim)
        self.window_cfg: WindowConfig = m1_bundle.window
        self.scaler = m1_bundle.scaler
        self.broadcaster = Broadcaster()
        self.event_log = JsonlWriter(config.event_log) if config.event_log else None
        cascade_cfg = CascadeConfig(
            theta=config.theta,
            alpha=config.alpha,
            scenario=5,
            human_mode="interactive",
            batch_size=config.batch_size,
            human_timeout=config.human_timeout,
        )
        self.cascade = Cascade(
            m1_bundle.model, m2_bundle.model, cascade_cfg, event_sink=self.event_log
        )
        self.cascade.listeners.append(self._on_cascade_event)
        self.started_at = time.time()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.replay_done = threading.Event()
        self._processed = 0

    # Cascade listener: surface queue changes as ApiEvents.
    def _on_cascade_event(self, kind: str, payload: dict) -> None:
        if kind in ("escalation_created", "escalation_resolved"):
            self.broadcaster.publish(kind, payload)

    def start(self) -> None:
        replay = threading.Thread(target=self._replay_loop, name="replay", daemon=True)
        upkeep = threading.Thread(target=self._maintenance_loop, name="upkeep", daemon=True)
        self._threads = [replay, upkeep]
        for t in self._threads:
            t.start()

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5)
        if self.event_log is not None:
            self.event_log.close()

    def _replay_loop(self) -> None:
        from netcascade.cascade import _pace_window, _window_matrix

        try:
            stream = read_labeled_capture(self.config.capture, self.config.sidecar or None)
        except Exception:
            logger.exception("replay failed to load capture")
            self.replay_done.set()
            return
        from netcascade.features import window_batches

        start_wall = time.perf_counter()
        start_ts: float | None = None
        try:
            for wid, pkts in window_batches(stream, self.window_cfg):
                if self._stop.is_set():
                    break
                if start_ts is None:
                    start_ts = pkts[0].timestamp
                _pace_window(self.config.pace, wid, self.window_cfg, start_ts, start_wall,
                             self._interruptible_sleep)
                X = _window_matrix(pkts, wid, self.window_cfg, self.scaler)
                for row, pkt in zip(X, pkts):
                    if self._stop.is_set():
                        break
                    self.cascade.process(row, ground_truth=pkt.label, meta=PacketMeta.of(pkt))
                    self._processed += 1
        except Exception:
            logger.exception("replay loop crashed")
        finally:
            self.replay_done.set()

    def _interruptible_sleep(self, seconds: float) -> None:
        self._stop.wait(timeout=seconds)

    def _maintenance_loop(self) -> None:
        while not self._stop.wait(timeout=self.config.tick_interval):
            self.cascade.check_timeouts()
            metrics = self.cascade.metrics_snapshot()
            elapsed = time.time() - self.started_at
            metrics.throughput = self._processed / elapsed if elapsed > 0 else 0.0
            self.broadcaster.publish("metrics_tick", metrics.to_dict())


class LabelRequest(BaseModel):
    id: str
    label: str


def create_app(runtime: ServiceRuntime) -> FastAPI:
    app = FastAPI(title="netcascade analyst service")
    token = runtime.config.auth_token

    async def check_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.middleware("http")
    async def cors(request: Request, call_next):
        if request.method == "OPTIONS":
            response = JSONResponse({})
        else:
            response = await call_next(request)
        response.headers["Access-Control-Allow-Origin"] = "*"
        response.headers["Access-Control-Allow-Headers"] = "authorization, content-type"
        response.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS"
        return response

    @app.get("/api/health")
    async def health() -> dict:
        return {
            "status": "ok",
            "pending": runtime.cascade.pending_count(),
            "replay_done": runtime.replay_done.is_set(),
            "subscribers": runtime.broadcaster.count(),
        }

    @app.get("/api/queue", dependencies=[Depends(check_auth)])
    async def get_queue() -> list[dict]:
        return [record.to_dict() for record in runtime.cascade.pending_records()]

    @app.post("/api/label", dependencies=[Depends(check_auth)])
    async def post_label(body: LabelRequest) -> dict:
        try:
            label = TrafficClass.from_wire(body.label)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown label {body.label!r}")
        try:
            resolution = runtime.cascade.submit_human_label(body.id, label)
        except UnknownRecordError:
            raise HTTPException(status_code=404, detail=f"no pending record {body.id!r}")
        except AlreadyResolvedError:
            raise HTTPException(status_code=409, detail=f"record {body.id!r} already resolved")
        return {"status": "resolved", "id": body.id, "label": resolution.label.value}

    @app.get("/api/metrics", dependencies=[Depends(check_auth)])
    async def get_metrics() -> dict:
        metrics = runtime.cascade.metrics_snapshot()
        elapsed = time.time() - runtime.started_at
        metrics.throughput = runtime._processed / elapsed if elapsed > 0 else 0.0
        return metrics.to_dict()

    @app.get("/api/events", dependencies=[Depends(check_auth)])
    async def get_events() -> StreamingResponse:
        subscriber = runtime.broadcaster.subscribe()

        def stream() -> Iterator[str]:
            # metrics_tick events arrive every tick_interval, so the stream
            # is also its own keepalive.
            try:
                while not runtime._stop.is_set():
                    try:
                        event = subscriber.get(timeout=1.0)
                    except queue.Empty:
                        continue
                    yield json.dumps(event) + "\n"
            finally:
                runtime.broadcaster.unsubscribe(subscriber)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    runtime = ServiceRuntime(config)
    runtime.start()
    app = create_app(runtime)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        runtime.stop()
