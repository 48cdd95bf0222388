"""Insight and administration: session persistence, alerting, and operator
override handling. The HTTP/WS surface lives in api.py; this module is the
state behind it.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cam import UserState
from .errors import InvalidOverride, StorageFull

ALERT_KINDS = ("FATIGUE_THRESHOLD", "DISCONNECT", "DATA_QUALITY")
OVERRIDE_KINDS = ("SET_DIFFICULTY", "FORCE_REST", "SWITCH_CATEGORY", "PAUSE", "RESUME")

FATIGUE_REARM_MS = 60_000
FSYNC_INTERVAL_MS = 1_000

LOG_FILES = ("raw", "fused", "states", "directives", "reports", "alerts", "overrides")


@dataclass
class Alert:
    kind: str
    severity: str  # info | warning | critical
    t: int
    detail: str
    acknowledged: bool = False
    alert_id: int = 0

    def to_record(self) -> dict[str, Any]:
        return {
            "alert_id": self.alert_id,
            "kind": self.kind,
            "severity": self.severity,
            "t": self.t,
            "detail": self.detail,
            "acknowledged": self.acknowledged,
        }


@dataclass(frozen=True)
class OverrideCommand:
    kind: str
    value: Any
    issued_by: str
    t: int

    def validate(self, paused: bool) -> None:
        if self.kind not in OVERRIDE_KINDS:
            raise InvalidOverride(f"unknown kind {self.kind!r}")
        if self.kind == "SET_DIFFICULTY":
            if not isinstance(self.value, int) or not (1 <= self.value <= 10):
                raise InvalidOverride(f"SET_DIFFICULTY value {self.value!r} not in [1, 10]")
        if self.kind == "SWITCH_CATEGORY":
            from .cam import TASK_CATEGORIES

            if self.value not in TASK_CATEGORIES:
                raise InvalidOverride(f"unknown category {self.value!r}")
        if self.kind == "PAUSE" and paused:
            raise InvalidOverride("already paused")
        if self.kind == "RESUME" and not paused:
            raise InvalidOverride("not paused")

    def to_record(self) -> dict[str, Any]:
        return {"kind": self.kind, "value": self.value, "issued_by": self.issued_by, "t": self.t}


class Recorder:
    """Append-only typed JSONL logs under sessions/<id>/. Batched fsync (once
    per second of event time); on write failure persistence stops but live
    operation continues, signalled by a single StorageFull."""

    def __init__(self, session_dir: str | Path):
        self.session_dir = Path(session_dir)
        self.session_dir.mkdir(parents=True, exist_ok=True)
        self._files: dict[str, Any] = {}
        self._counts: dict[str, int] = {}
        self._last_fsync_ms = 0
        self.failed = False

    def path(self, stream: str) -> Path:
        return self.session_dir / f"{stream}.jsonl"

    def record(self, stream: str, obj: dict, t: Optional[int] = None) -> int:
        """Append one event; returns the line position (1-based)."""
        if self.failed:
            return -1
        if stream not in LOG_FILES:
            raise ValueError(f"unknown log stream {stream!r}")
        try:
            fh = self._files.get(stream)
            if fh is None:
                fh = open(self.path(stream), "a", encoding="utf-8")
                self._files[stream] = fh
            fh.write(json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n")
            fh.flush()
            if t is not None and t - self._last_fsync_ms >= FSYNC_INTERVAL_MS:
                os.fsync(fh.fileno())
                self._last_fsync_ms = t
        except OSError as e:
            self.failed = True
            raise StorageFull(str(e)) from None
        self._counts[stream] = self._counts.get(stream, 0) + 1
        return self._counts[stream]

    def close(self) -> None:
        for fh in self._files.values():
            try:
                fh.close()
            except OSError:
                pass
        self._files.clear()


class AlertEngine:
    """Edge-triggered alerting over user state and connection events."""

    def __init__(self, fatigue_threshold: float, rearm_ms: int = FATIGUE_REARM_MS):
        self.fatigue_threshold = fatigue_threshold
        self.rearm_ms = rearm_ms
        self._last_fatigue_alert_ms: Optional[int] = None
        self._next_id = 1
        self.active: list[Alert] = []

    def _emit(self, kind: str, severity: str, t: int, detail: str) -> Alert:
        alert = Alert(kind=kind, severity=severity, t=t, detail=detail, alert_id=self._next_id)
        self._next_id += 1
        self.active.append(alert)
        return alert

    def evaluate_state(self, state: UserState) -> list[Alert]:
        out: list[Alert] = []
        if state.fatigue >= self.fatigue_threshold:
            last = self._last_fatigue_alert_ms
            if last is None or state.t - last >= self.rearm_ms:
                self._last_fatigue_alert_ms = state.t
                out.append(
                    self._emit(
                        "FATIGUE_THRESHOLD",
                        "warning",
                        state.t,
                        f"fatigue {state.fatigue:.2f} >= {self.fatigue_threshold:.2f}",
                    )
                )
        return out

    def on_disconnect(self, device: str, t: int, expected: bool) -> list[Alert]:
        if expected:  # clean BYE, no alert
            return []
        return [self._emit("DISCONNECT", "warning", t, f"{device} connection lost")]

    def on_storage_full(self, t: int, detail: str) -> list[Alert]:
        return [self._emit("DATA_QUALITY", "critical", t, f"persistence stopped: {detail}")]

    def acknowledge(self, alert_id: int) -> bool:
        for alert in self.active:
            if alert.alert_id == alert_id:
                alert.acknowledged = True
                return True
        return False


@dataclass
class SessionRecord:
    session_id: str
    started_at: int
    path: Path
    plan_snapshot: dict = field(default_factory=dict)
    ended_at: Optional[int] = None

    def summary(self) -> dict[str, Any]:
        counts = {}
        for stream in LOG_FILES:
            p = self.path / f"{stream}.jsonl"
            if p.exists():
                with open(p, "rb") as fh:
                    counts[stream] = sum(1 for _ in fh)
            else:
                counts[stream] = 0
        return {
            "session_id": self.session_id,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "event_counts": counts,
            "plan": self.plan_snapshot,
        }
