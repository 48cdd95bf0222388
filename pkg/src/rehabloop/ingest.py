"""Sensor Module: per-device sessions that normalize, validate, unit-convert,
and timestamp incoming samples before they reach fusion.

One SensorSession per connection; sessions never share state. Devices are not
clock-synchronized, so every sample keeps both the device timestamp and the
hub receive timestamp; downstream alignment uses hub_ts.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import NonPositiveInterval, WrongStream
from .wire import DeviceType, Envelope, MsgType

RR_MS_MIN = 300.0
RR_MS_MAX = 2000.0
RR_MAX_JUMP = 0.25  # fractional change vs previous kept interval

ACCEL_CLAMP_G = 16.0
DEVICE_TS_REGRESS_MS = 10_000

CALIBRATION_S = 60
RING_CAPACITY_S = 600  # 10 minutes at the stream's nominal rate


def rr_to_ms(raw: int) -> float:
    """Convert an RR interval from 1/1024 s units to milliseconds.

    raw * 1000 / 1024 = raw * 125 / 128: for raw <= 2**20 the product fits a
    float64 mantissa and /128 is a pure exponent shift, so the result is exact.
    """
    if raw <= 0:
        raise NonPositiveInterval(f"rr_raw {raw}")
    return raw * 1000 / 1024


def reject_artifacts(
    rr_ms: list[float],
    low: float = RR_MS_MIN,
    high: float = RR_MS_MAX,
    max_jump: float = RR_MAX_JUMP,
) -> tuple[list[float], int]:
    """Drop intervals outside [low, high] ms or jumping > max_jump vs the
    previous kept interval. Returns (kept-in-order, dropped count)."""
    kept: list[float] = []
    dropped = 0
    for rr in rr_ms:
        if not (low <= rr <= high):
            dropped += 1
            continue
        if kept and abs(rr - kept[-1]) > max_jump * kept[-1]:
            dropped += 1
            continue
        kept.append(rr)
    return kept, dropped


@dataclass(frozen=True)
class EcgSample:
    bpm: int
    rr_raw: tuple[int, ...]
    rr_ms: tuple[float, ...]  # converted and artifact-filtered
    device_ts: int
    hub_ts: int

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "ecg",
            "bpm": self.bpm,
            "rr_raw": list(self.rr_raw),
            "rr_ms": list(self.rr_ms),
            "device_ts": self.device_ts,
            "hub_ts": self.hub_ts,
        }


@dataclass(frozen=True)
class PpgSample:
    bpm: float
    accel: tuple[float, float, float]  # Gs, clamped to +/-16
    confidence: float  # [0, 100]
    device_ts: int
    hub_ts: int

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "ppg",
            "bpm": self.bpm,
            "accel": list(self.accel),
            "confidence": self.confidence,
            "device_ts": self.device_ts,
            "hub_ts": self.hub_ts,
        }


@dataclass(frozen=True)
class AffectSample:
    emotion7: Optional[tuple[float, ...]]  # None when no face this frame
    face_detected: bool
    joints: Optional[tuple[tuple[float, float, float], ...]]
    device_ts: int
    hub_ts: int

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "affect",
            "emotion7": list(self.emotion7) if self.emotion7 is not None else None,
            "face_detected": self.face_detected,
            "joints": [list(j) for j in self.joints] if self.joints is not None else None,
            "device_ts": self.device_ts,
            "hub_ts": self.hub_ts,
        }


Sample = EcgSample | PpgSample | AffectSample


def sample_from_record(record: dict) -> Sample:
    """Rebuild a normalized sample from its session-log line."""
    kind = record.get("kind")
    if kind == "ecg":
        return EcgSample(
            bpm=record["bpm"],
            rr_raw=tuple(record["rr_raw"]),
            rr_ms=tuple(record["rr_ms"]),
            device_ts=record["device_ts"],
            hub_ts=record["hub_ts"],
        )
    if kind == "ppg":
        return PpgSample(
            bpm=record["bpm"],
            accel=tuple(record["accel"]),
            confidence=record["confidence"],
            device_ts=record["device_ts"],
            hub_ts=record["hub_ts"],
        )
    if kind == "affect":
        emotion7 = record.get("emotion7")
        joints = record.get("joints")
        return AffectSample(
            emotion7=tuple(emotion7) if emotion7 is not None else None,
            face_detected=record["face_detected"],
            joints=tuple(tuple(j) for j in joints) if joints is not None else None,
            device_ts=record["device_ts"],
            hub_ts=record["hub_ts"],
        )
    raise ValueError(f"unknown sample kind {kind!r}")


@dataclass
class Baseline:
    resting_bpm: float = 0.0
    calib_duration: float = 0.0
    complete: bool = False


class SensorSession:
    """Normalizes one device stream: unit conversion, artifact rejection,
    hub timestamping, ring buffering, baseline calibration, and logging."""

    def __init__(
        self,
        device_type: DeviceType,
        session_start_ms: int,
        nominal_rate_hz: float = 1.0,
        on_sample: Optional[Callable[[Sample], None]] = None,
        log: Optional[Callable[[dict], None]] = None,
    ):
        self.device_type = device_type
        self.session_start_ms = session_start_ms
        self.on_sample = on_sample
        self.log = log
        capacity = max(1, int(RING_CAPACITY_S * nominal_rate_hz))
        self.ring: deque[Sample] = deque(maxlen=capacity)
        self.baseline = Baseline()
        self._bpm_sum = 0.0
        self._bpm_count = 0
        self._last_device_ts: Optional[int] = None
        self.stale_dropped = 0
        self.artifacts_dropped = 0
        self.ignored = 0  # reserved streams (GYRO)

    def accept_packet(self, envelope: Envelope, hub_ts: int) -> list[Sample]:
        """Normalize one envelope into samples; forwards and logs each one."""
        allowed = {
            DeviceType.ECG_CHEST: MsgType.ECG,
            DeviceType.PPG_WRIST: MsgType.PPG,
            DeviceType.MOCAP: MsgType.SKEL_AFFECT,
        }.get(self.device_type)
        if envelope.msg_type is MsgType.GYRO and self.device_type is DeviceType.PPG_WRIST:
            self.ignored += 1
            return []
        if envelope.msg_type is not allowed:
            raise WrongStream(
                f"{envelope.msg_type.value} on a {self.device_type.value} session"
            )

        if (
            self._last_device_ts is not None
            and envelope.sent_at < self._last_device_ts - DEVICE_TS_REGRESS_MS
        ):
            # Device clock jumped backwards: drop, count, keep the session alive.
            self.stale_dropped += 1
            return []
        self._last_device_ts = max(self._last_device_ts or 0, envelope.sent_at)

        sample = self._normalize(envelope, hub_ts)
        self.ring.append(sample)
        self.update_baseline(sample, hub_ts)
        if self.log is not None:
            self.log(sample.to_record())
        if self.on_sample is not None:
            self.on_sample(sample)
        return [sample]

    def _normalize(self, envelope: Envelope, hub_ts: int) -> Sample:
        p = envelope.payload
        if envelope.msg_type is MsgType.ECG:
            rr_ms_all = [rr_to_ms(r) for r in p["rr_raw"]]
            kept, dropped = reject_artifacts(rr_ms_all)
            self.artifacts_dropped += dropped
            return EcgSample(
                bpm=p["bpm"],
                rr_raw=tuple(p["rr_raw"]),
                rr_ms=tuple(kept),
                device_ts=envelope.sent_at,
                hub_ts=hub_ts,
            )
        if envelope.msg_type is MsgType.PPG:
            def clamp(v: float) -> float:
                return max(-ACCEL_CLAMP_G, min(ACCEL_CLAMP_G, float(v)))

            ax, ay, az = p["accel"]
            return PpgSample(
                bpm=float(p["bpm"]),
                accel=(clamp(ax), clamp(ay), clamp(az)),
                confidence=float(p["confidence"]),
                device_ts=envelope.sent_at,
                hub_ts=hub_ts,
            )
        # SKEL_AFFECT
        emotion7 = tuple(float(x) for x in p["emotion7"]) if p["face_detected"] else None
        joints = p.get("joints")
        return AffectSample(
            emotion7=emotion7,
            face_detected=p["face_detected"],
            joints=tuple(tuple(j) for j in joints) if joints is not None else None,
            device_ts=envelope.sent_at,
            hub_ts=hub_ts,
        )

    def update_baseline(self, sample: Sample, hub_ts: int) -> Baseline:
        """Accumulate resting BPM over the first 60 s, then freeze."""
        if self.baseline.complete:
            return self.baseline
        elapsed_s = (hub_ts - self.session_start_ms) / 1000.0
        bpm = getattr(sample, "bpm", None)
        if bpm is not None and elapsed_s <= CALIBRATION_S:
            self._bpm_sum += bpm
            self._bpm_count += 1
            self.baseline.calib_duration = elapsed_s
            self.baseline.resting_bpm = self._bpm_sum / self._bpm_count
        if elapsed_s >= CALIBRATION_S and self._bpm_count > 0:
            self.baseline.calib_duration = max(self.baseline.calib_duration, CALIBRATION_S)
            self.baseline.complete = True
        return self.baseline
