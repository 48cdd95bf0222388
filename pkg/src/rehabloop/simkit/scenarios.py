"""Scripted sensor-stream generation.

A scenario is a list of phases, each holding target physiology; the generator
turns it into timed ECG/PPG/affect envelopes. Generation is a pure function
of (script, seed): it avoids transcendental functions so the byte stream is
identical across runs and platforms.

BPM and RR stay mutually consistent through the 1/1024 s device unit:
rr_raw ~ round(61440 / bpm) since 60 s * 1024 units = 61440 unit-BPM product.
Per-interval jitter with sigma = rmssd_target / sqrt(2) yields successive
differences whose RMS approximates the target.
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Iterator

from ..wire import Envelope, MsgType

RR_UNITS_PER_MINUTE = 61440  # 60 s in 1/1024 s units

ECG_HZ = 1
PPG_HZ = 1
AFFECT_HZ = 5

JERKY_AMPLITUDE = 0.25  # accel magnitude alternation, Gs

NEUTRAL_PROFILE = (0.02, 0.02, 0.02, 0.12, 0.02, 0.05, 0.75)


@dataclass(frozen=True)
class Phase:
    duration_s: float
    bpm_mean: float
    bpm_slope: float = 0.0  # BPM per second within the phase
    rmssd_target_ms: float = 30.0
    affect_profile: tuple[float, ...] = NEUTRAL_PROFILE  # 7-class bias
    accel_pattern: str = "smooth"  # smooth | jerky
    confidence_level: float = 95.0

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("phase duration must be positive")
        if not (30 <= self.bpm_mean <= 220):
            raise ValueError("bpm_mean must lie in [30, 220]")


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    phases: tuple[Phase, ...]
    seed: int = 0

    def total_s(self) -> float:
        return sum(p.duration_s for p in self.phases)


SCENARIOS: dict[str, ScenarioScript] = {
    "rest": ScenarioScript(
        "rest",
        (
            Phase(120, bpm_mean=60, rmssd_target_ms=50, confidence_level=95),
        ),
    ),
    "steady-exercise": ScenarioScript(
        "steady-exercise",
        (
            Phase(60, bpm_mean=72, rmssd_target_ms=45),
            Phase(
                240,
                bpm_mean=95,
                rmssd_target_ms=35,
                affect_profile=(0.02, 0.02, 0.02, 0.30, 0.02, 0.07, 0.55),
            ),
        ),
    ),
    "fatigue-ramp": ScenarioScript(
        "fatigue-ramp",
        (
            Phase(60, bpm_mean=68, rmssd_target_ms=48),
            Phase(
                120,
                bpm_mean=75,
                bpm_slope=0.25,
                rmssd_target_ms=30,
                affect_profile=(0.06, 0.04, 0.05, 0.10, 0.10, 0.05, 0.60),
            ),
            Phase(
                120,
                bpm_mean=105,
                bpm_slope=0.1,
                rmssd_target_ms=10,
                affect_profile=(0.14, 0.08, 0.10, 0.04, 0.24, 0.04, 0.36),
                accel_pattern="jerky",
                confidence_level=80,
            ),
        ),
    ),
    "stress-spike": ScenarioScript(
        "stress-spike",
        (
            Phase(90, bpm_mean=70, rmssd_target_ms=45),
            Phase(
                30,
                bpm_mean=120,
                rmssd_target_ms=8,
                affect_profile=(0.25, 0.10, 0.25, 0.02, 0.18, 0.10, 0.10),
                accel_pattern="jerky",
            ),
            Phase(60, bpm_mean=80, rmssd_target_ms=35),
        ),
    ),
    "disengagement": ScenarioScript(
        "disengagement",
        (
            Phase(60, bpm_mean=70, rmssd_target_ms=45),
            Phase(
                180,
                bpm_mean=68,
                rmssd_target_ms=45,
                affect_profile=(0.01, 0.01, 0.01, 0.01, 0.01, 0.0, 0.95),
            ),
        ),
    ),
}


@dataclass(frozen=True)
class Timed:
    t_ms: int
    port: str  # ecg | ppg | affect
    envelope: Envelope


def _phase_at(script: ScenarioScript, second: float) -> tuple[Phase, float]:
    """Phase covering the given second and the offset into it."""
    acc = 0.0
    for phase in script.phases:
        if second < acc + phase.duration_s:
            return phase, second - acc
        acc += phase.duration_s
    last = script.phases[-1]
    return last, last.duration_s


def _affect_probs(rng: random.Random, profile: tuple[float, ...]) -> list[float]:
    raw = [max(1e-4, p + 0.05 * rng.random()) for p in profile]
    total = sum(raw)
    return [p / total for p in raw]


def gauss_ih(rng: random.Random) -> float:
    """Unit-variance noise via Irwin-Hall (12 uniforms): unlike random.gauss
    it involves no libm calls, so streams are byte-identical across platforms."""
    return sum(rng.random() for _ in range(12)) - 6.0


def generate_stream(script: ScenarioScript, seed: int | None = None) -> Iterator[Timed]:
    """Yield timed envelopes in timestamp order; pure in (script, seed)."""
    rng = random.Random(script.seed if seed is None else seed)
    seqs = {"ecg": 0, "ppg": 0, "affect": 0}
    total_ms = int(script.total_s() * 1000)

    events: list[Timed] = []
    for t_ms in range(0, total_ms, 1000 // AFFECT_HZ):
        second = t_ms / 1000.0
        phase, offset = _phase_at(script, second)

        if t_ms % (1000 // ECG_HZ) == 0:
            bpm = phase.bpm_mean + phase.bpm_slope * offset
            bpm = max(30.0, min(220.0, bpm))
            base_rr = RR_UNITS_PER_MINUTE / bpm
            sigma_units = (phase.rmssd_target_ms / math.sqrt(2.0)) * 1024 / 1000
            n_rr = max(1, round(bpm / 60.0))
            rr_raw = [
                max(1, round(base_rr + (sigma_units * gauss_ih(rng) if sigma_units > 0 else 0.0)))
                for _ in range(n_rr)
            ]
            seqs["ecg"] += 1
            events.append(
                Timed(
                    t_ms,
                    "ecg",
                    Envelope(
                        MsgType.ECG,
                        seq=seqs["ecg"],
                        sent_at=t_ms,
                        payload={"bpm": round(bpm), "rr_raw": rr_raw},
                    ),
                )
            )

        if t_ms % (1000 // PPG_HZ) == 0:
            bpm = phase.bpm_mean + phase.bpm_slope * offset + rng.uniform(-2.0, 2.0)
            if phase.accel_pattern == "jerky":
                tick_index = t_ms // (1000 // PPG_HZ)
                mag = 1.0 + (JERKY_AMPLITUDE if tick_index % 2 == 0 else -JERKY_AMPLITUDE)
            else:
                mag = 1.0
            seqs["ppg"] += 1
            events.append(
                Timed(
                    t_ms,
                    "ppg",
                    Envelope(
                        MsgType.PPG,
                        seq=seqs["ppg"],
                        sent_at=t_ms,
                        payload={
                            "bpm": round(bpm, 1),
                            "accel": [0.0, 0.0, round(mag, 4)],
                            "confidence": phase.confidence_level,
                        },
                    ),
                )
            )

        seqs["affect"] += 1
        events.append(
            Timed(
                t_ms,
                "affect",
                Envelope(
                    MsgType.SKEL_AFFECT,
                    seq=seqs["affect"],
                    sent_at=t_ms,
                    payload={
                        "emotion7": _affect_probs(rng, phase.affect_profile),
                        "face_detected": True,
                    },
                ),
            )
        )

    return iter(events)


def stream_hash(script: ScenarioScript, seed: int | None = None) -> str:
    """SHA-256 over the encoded byte stream; determinism probe."""
    from ..wire import encode

    h = hashlib.sha256()
    for timed in generate_stream(script, seed):
        h.update(str(timed.t_ms).encode())
        h.update(timed.port.encode())
        h.update(encode(timed.envelope))
    return h.hexdigest()
