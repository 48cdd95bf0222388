"""First-level fusion: aligns heterogeneous streams onto a 10 Hz frame clock
and computes windowed features (HRV, motion smoothness, affect) for the
decision core.

The assembler is the single consumer of the ingest queues; it holds the
latest value per stream (sample-and-hold) and emits one FusedFrame per tick.
Streams silent for more than the staleness cutoff are flagged and excluded
from every feature.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .affect import Affect4, AffectWindow, flatness as window_flatness, reduce, smooth
from .errors import NoUsableData, TooFewIntervals, TooFewSamples
from .ingest import AffectSample, EcgSample, PpgSample, Sample

FRAME_HZ = 10
FRAME_INTERVAL_MS = 1000 // FRAME_HZ
STALE_MS = 2000
FEATURE_WINDOW_S = 30
PPG_CONFIDENCE_GATE = 50.0
SMOOTHNESS_KAPPA = 10.0

STREAMS = ("ecg", "ppg", "affect")


def rmssd(rr_ms: list[float]) -> float:
    """Root mean square of successive RR differences, in ms."""
    if len(rr_ms) < 2:
        raise TooFewIntervals(f"need >= 2 RR intervals, got {len(rr_ms)}")
    total = 0.0
    for a, b in zip(rr_ms, rr_ms[1:]):
        d = b - a
        total += d * d
    return math.sqrt(total / (len(rr_ms) - 1))


def sdnn(rr_ms: list[float]) -> float:
    """Sample standard deviation (divisor N-1) of RR intervals, in ms."""
    n = len(rr_ms)
    if n < 2:
        raise TooFewIntervals(f"need >= 2 RR intervals, got {n}")
    mean = sum(rr_ms) / n
    var = sum((x - mean) ** 2 for x in rr_ms) / (n - 1)
    return math.sqrt(var)


def motion_smoothness(magnitudes: list[float], kappa: float = SMOOTHNESS_KAPPA) -> float:
    """Map mean squared discrete jerk (second difference of accel magnitude
    per tick^2) to (0, 1]: 1.0 for perfectly smooth, toward 0 as jerk grows."""
    n = len(magnitudes)
    if n < 3:
        raise TooFewSamples(f"need >= 3 samples, got {n}")
    total = 0.0
    for i in range(n - 2):
        j = magnitudes[i + 2] - 2 * magnitudes[i + 1] + magnitudes[i]
        total += j * j
    mean_sq_jerk = total / (n - 2)
    return 1.0 / (1.0 + kappa * mean_sq_jerk)


@dataclass(frozen=True)
class FusedFrame:
    t: int  # hub ms
    bpm_ecg: Optional[float]
    bpm_ppg: Optional[float]
    ppg_confidence: Optional[float]
    rr_recent: tuple[float, ...]  # new RR intervals (ms) since the previous frame
    accel: Optional[tuple[float, float, float]]
    affect: Optional[Affect4]  # smoothed over the affect window
    staleness: dict[str, Optional[int]]  # per-stream age in ms; None = never seen
    quality: dict[str, str]  # ok | stale | absent

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "bpm_ecg": self.bpm_ecg,
            "bpm_ppg": self.bpm_ppg,
            "ppg_confidence": self.ppg_confidence,
            "rr_recent": list(self.rr_recent),
            "accel": list(self.accel) if self.accel is not None else None,
            "affect": self.affect.to_record() if self.affect is not None else None,
            "staleness": self.staleness,
            "quality": self.quality,
        }


@dataclass(frozen=True)
class FeatureWindow:
    hrv_rmssd: Optional[float]
    hrv_sdnn: Optional[float]
    hr_mean: Optional[float]
    motion_smoothness: Optional[float]
    motion_activity: Optional[float]  # mean |accel magnitude - 1 G|
    affect_dist: Optional[Affect4]
    flatness: Optional[float]
    window_span: float  # seconds of frames actually covered
    fresh_streams: tuple[str, ...]  # streams that contributed

    def to_record(self) -> dict:
        return {
            "hrv_rmssd": self.hrv_rmssd,
            "hrv_sdnn": self.hrv_sdnn,
            "hr_mean": self.hr_mean,
            "motion_smoothness": self.motion_smoothness,
            "motion_activity": self.motion_activity,
            "affect_dist": self.affect_dist.to_record() if self.affect_dist else None,
            "flatness": self.flatness,
            "window_span": self.window_span,
            "fresh_streams": list(self.fresh_streams),
        }


@dataclass
class _Held:
    sample: Optional[Sample] = None
    last_update: Optional[int] = None


class FrameAssembler:
    """Sample-and-hold alignment of all streams onto the 10 Hz frame clock."""

    def __init__(self, stale_ms: int = STALE_MS, affect_window_s: float = 5.0):
        self.stale_ms = stale_ms
        self._held: dict[str, _Held] = {s: _Held() for s in STREAMS}
        self._pending_rr: list[float] = []
        self._affect_window = AffectWindow(affect_window_s)

    def on_sample(self, sample: Sample) -> None:
        if isinstance(sample, EcgSample):
            self._held["ecg"] = _Held(sample, sample.hub_ts)
            self._pending_rr.extend(sample.rr_ms)
        elif isinstance(sample, PpgSample):
            self._held["ppg"] = _Held(sample, sample.hub_ts)
        elif isinstance(sample, AffectSample):
            # No face this frame: carry the last affect, do not refresh staleness.
            if sample.face_detected and sample.emotion7 is not None:
                self._held["affect"] = _Held(sample, sample.hub_ts)
                self._affect_window.push(sample.hub_ts, reduce(sample.emotion7))

    def align(self, t: int) -> FusedFrame:
        """Emit the frame for clock tick t; deterministic in the input timeline."""
        staleness: dict[str, Optional[int]] = {}
        quality: dict[str, str] = {}
        for name in STREAMS:
            held = self._held[name]
            if held.last_update is None:
                staleness[name] = None
                quality[name] = "absent"
            else:
                age = max(0, t - held.last_update)
                staleness[name] = age
                quality[name] = "ok" if age <= self.stale_ms else "stale"

        ecg = self._held["ecg"].sample if quality["ecg"] == "ok" else None
        ppg = self._held["ppg"].sample if quality["ppg"] == "ok" else None
        affect_ok = quality["affect"] == "ok" and len(self._affect_window) > 0

        rr_recent = tuple(self._pending_rr) if ecg is not None else ()
        self._pending_rr.clear()

        return FusedFrame(
            t=t,
            bpm_ecg=float(ecg.bpm) if isinstance(ecg, EcgSample) else None,
            bpm_ppg=ppg.bpm if isinstance(ppg, PpgSample) else None,
            ppg_confidence=ppg.confidence if isinstance(ppg, PpgSample) else None,
            rr_recent=rr_recent,
            accel=ppg.accel if isinstance(ppg, PpgSample) else None,
            affect=smooth(self._affect_window) if affect_ok else None,
            staleness=staleness,
            quality=quality,
        )

    def affect_flatness(self) -> Optional[float]:
        if len(self._affect_window) == 0:
            return None
        return window_flatness(self._affect_window)


class FeatureExtractor:
    """Rolling 30 s window of frames; recomputes features on demand."""

    def __init__(self, window_s: int = FEATURE_WINDOW_S, frame_hz: int = FRAME_HZ):
        self.window_s = window_s
        self._frames: deque[FusedFrame] = deque(maxlen=window_s * frame_hz)

    def push(self, frame: FusedFrame) -> None:
        self._frames.append(frame)

    def extract(self) -> FeatureWindow:
        """Features from non-stale data only. Raises NoUsableData when every
        stream is stale or absent across the whole window."""
        frames = list(self._frames)
        if not frames:
            raise NoUsableData("no frames yet")

        rr: list[float] = []
        ecg_bpm: list[float] = []
        ppg_bpm: list[float] = []
        accel_mag: list[float] = []
        affect_probs: list[Affect4] = []
        fresh: set[str] = set()

        for f in frames:
            if f.quality["ecg"] == "ok":
                fresh.add("ecg")
                rr.extend(f.rr_recent)
                if f.bpm_ecg is not None:
                    ecg_bpm.append(f.bpm_ecg)
            if f.quality["ppg"] == "ok":
                fresh.add("ppg")
                if f.bpm_ppg is not None and (f.ppg_confidence or 0) >= PPG_CONFIDENCE_GATE:
                    ppg_bpm.append(f.bpm_ppg)
                # Jerk must be computed over the device's sample series, not
                # over held copies, or slow streams look artificially smooth.
                new_sample = (f.staleness["ppg"] or 0) < FRAME_INTERVAL_MS
                if f.accel is not None and new_sample:
                    ax, ay, az = f.accel
                    accel_mag.append(math.sqrt(ax * ax + ay * ay + az * az))
            if f.quality["affect"] == "ok" and f.affect is not None:
                fresh.add("affect")
                affect_probs.append(f.affect)

        if not fresh:
            raise NoUsableData("all streams stale")

        hr_mean: Optional[float] = None
        if ecg_bpm:
            hr_mean = sum(ecg_bpm) / len(ecg_bpm)
        elif ppg_bpm:
            hr_mean = sum(ppg_bpm) / len(ppg_bpm)

        hrv_rmssd = rmssd(rr) if len(rr) >= 2 else None
        hrv_sdnn = sdnn(rr) if len(rr) >= 2 else None

        smoothness: Optional[float] = None
        activity: Optional[float] = None
        if len(accel_mag) >= 3:
            smoothness = motion_smoothness(accel_mag)
            activity = sum(abs(m - 1.0) for m in accel_mag) / len(accel_mag)

        affect_dist: Optional[Affect4] = None
        flat: Optional[float] = None
        if affect_probs:
            sums = [0.0] * 4
            for a in affect_probs:
                for i, p in enumerate(a.probs):
                    sums[i] += p
            total = sum(sums)
            affect_dist = Affect4.from_probs(tuple(s / total for s in sums))
            flat = sums[1] / len(affect_probs)  # mean neutral probability

        span = (frames[-1].t - frames[0].t) / 1000.0
        return FeatureWindow(
            hrv_rmssd=hrv_rmssd,
            hrv_sdnn=hrv_sdnn,
            hr_mean=hr_mean,
            motion_smoothness=smoothness,
            motion_activity=activity,
            affect_dist=affect_dist,
            flatness=flat,
            window_span=span,
            fresh_streams=tuple(sorted(fresh)),
        )
