"""Headless closed-loop simulation: sensor streams -> pipeline -> directives
-> reference game client -> performance reports -> pipeline.

Everything runs on a logical millisecond clock, so runs are deterministic per
seed and arbitrarily faster than real time. Two physiology modes:

* coupled   - vitals derive from the synthetic player's accumulated fatigue,
              closing the loop through the body as well as through reports;
* scripted  - vitals follow a ScenarioScript (open loop), used for recorded
              sessions and replay checks.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..cam import Directive, RuleConfig, TherapyPlan, UserState
from ..errors import InvalidOverride
from ..iam import Recorder
from ..ipm import PHASE_ACTIVE, PHASE_DONE, PHASE_IDLE, PHASE_REST, PACING_GAP_S, PerformanceReport, PlaySession, dda_step, load_catalog
from ..pipeline import Pipeline
from ..wire import DeviceType, Envelope, MsgType
from .player import SimPlayer
from .scenarios import ScenarioScript, Timed, gauss_ih, generate_stream

FRAME_STEP_MS = 100
DECIDE_STEP_MS = 1000

RESTING_BPM = 65.0


class CoupledPhysio:
    """Derives per-second vitals from the player's fatigue level."""

    def __init__(self, seed: int, resting_bpm: float = RESTING_BPM):
        self.rng = random.Random(seed)
        self.resting_bpm = resting_bpm
        self._seqs = {"ecg": 0, "ppg": 0, "affect": 0}
        self._ppg_tick = 0

    def emit(self, t_ms: int, fatigue: float) -> list[tuple[DeviceType, Envelope]]:
        out: list[tuple[DeviceType, Envelope]] = []
        f = max(0.0, min(1.0, fatigue))

        if t_ms % 1000 == 0:
            bpm = self.resting_bpm * (1.0 + 0.65 * f) + 0.5 * gauss_ih(self.rng)
            bpm = max(40.0, min(200.0, bpm))
            rmssd_target = max(4.0, 50.0 * (1.0 - 1.15 * f))
            sigma_units = (rmssd_target / math.sqrt(2.0)) * 1024 / 1000
            base_rr = 61440 / bpm
            n_rr = max(1, round(bpm / 60.0))
            rr_raw = [
                max(1, round(base_rr + sigma_units * gauss_ih(self.rng)))
                for _ in range(n_rr)
            ]
            self._seqs["ecg"] += 1
            out.append(
                (
                    DeviceType.ECG_CHEST,
                    Envelope(
                        MsgType.ECG,
                        seq=self._seqs["ecg"],
                        sent_at=t_ms,
                        payload={"bpm": round(bpm), "rr_raw": rr_raw},
                    ),
                )
            )

            # Accel magnitude alternates so realized smoothness tracks fatigue.
            s_target = 1.0 - min(0.92, 1.1 * f)
            jerk = (1.0 - s_target) / (10.0 * s_target)
            amp = math.sqrt(jerk / 16.0)
            self._ppg_tick += 1
            mag = 1.0 + (amp if self._ppg_tick % 2 == 0 else -amp)
            self._seqs["ppg"] += 1
            out.append(
                (
                    DeviceType.PPG_WRIST,
                    Envelope(
                        MsgType.PPG,
                        seq=self._seqs["ppg"],
                        sent_at=t_ms,
                        payload={
                            "bpm": round(bpm + self.rng.uniform(-2.0, 2.0), 1),
                            "accel": [0.0, 0.0, round(mag, 4)],
                            "confidence": 90.0,
                        },
                    ),
                )
            )

        if t_ms % 200 == 0:
            happiness = 0.60 * (1.0 - f)
            negative = 0.60 * f
            profile = (
                0.27 * negative,  # anger
                0.18 * negative,  # disgust
                0.18 * negative,  # fear
                happiness,
                0.37 * negative,  # sadness
                0.05,
                0.35,
            )
            raw = [max(1e-4, p + 0.02 * self.rng.random()) for p in profile]
            total = sum(raw)
            self._seqs["affect"] += 1
            out.append(
                (
                    DeviceType.MOCAP,
                    Envelope(
                        MsgType.SKEL_AFFECT,
                        seq=self._seqs["affect"],
                        sent_at=t_ms,
                        payload={
                            "emotion7": [p / total for p in raw],
                            "face_detected": True,
                        },
                    ),
                )
            )
        return out


class GameRunner:
    """Reference game client: resolves directives, paces attempts through the
    synthetic player, micro-adjusts difficulty between exercises, reports."""

    def __init__(self, player: SimPlayer, catalog=None, start_ms: int = 0):
        self.player = player
        self.session = PlaySession(catalog or load_catalog())
        self.reports: list[PerformanceReport] = []
        self._intra_reports: list[PerformanceReport] = []
        self._pending: list[PerformanceReport] = []
        self._level = 1
        self._next_attempt_ms: Optional[int] = None
        self._last_tick_ms = start_ms

    def _gap_ms(self) -> int:
        pacing = self.session.directive.pacing if self.session.directive else "normal"
        return int(PACING_GAP_S[pacing] * 1000)

    def on_directive(self, d: Directive, now_ms: int) -> None:
        # A rest order lands mid-exercise: close the exercise out first.
        if (
            d.rest
            and self.session.state.phase == PHASE_ACTIVE
            and self.session.state.reps_done > 0
        ):
            report = self.session.report(now_ms)
            self.reports.append(report)
            self._intra_reports.append(report)
            self._pending.append(report)

        was_active = self.session.state.phase == PHASE_ACTIVE
        self.session.resolve_directive(d, now_ms)
        self._level = self.session.state.difficulty
        self._intra_reports = []
        if self.session.state.phase == PHASE_ACTIVE and not was_active:
            self._next_attempt_ms = now_ms + self._gap_ms()
        elif self.session.state.phase == PHASE_ACTIVE:
            self._next_attempt_ms = self._next_attempt_ms or now_ms + self._gap_ms()
        else:
            self._next_attempt_ms = None

    def tick(self, now_ms: int) -> list[PerformanceReport]:
        dt_s = (now_ms - self._last_tick_ms) / 1000.0
        self._last_tick_ms = now_ms
        state = self.session.state
        emitted: list[PerformanceReport] = list(self._pending)
        self._pending.clear()

        if state.phase == PHASE_REST:
            self.player.rest(dt_s)
            if (
                state.rest_until_ms is not None
                and now_ms >= state.rest_until_ms
                and self.session.directive is not None
                and not self.session.directive.rest
            ):
                self.session.begin_next(self._level, now_ms)
                self._next_attempt_ms = now_ms + self._gap_ms()
            return emitted

        if state.phase in (PHASE_IDLE, PHASE_DONE):
            if self.session.directive is not None and not self.session.directive.rest:
                self.session.begin_next(self._level, now_ms)
                self._next_attempt_ms = now_ms + self._gap_ms()
            return emitted

        # ACTIVE
        if self._next_attempt_ms is not None and now_ms >= self._next_attempt_ms:
            success = self.player.attempt(self.session.state.difficulty)
            self.session.record_attempt(success)
            self._next_attempt_ms = now_ms + self._gap_ms()

        if self.session.exercise_finished(now_ms):
            report = self.session.report(now_ms)
            self.reports.append(report)
            self._intra_reports.append(report)
            emitted.append(report)
            cap = (
                self.session.directive.difficulty_target
                if self.session.directive
                else 10
            )
            self._level = dda_step(self._intra_reports[-2:], self._level, cap)
        return emitted


@dataclass
class TickRecord:
    t: int
    fatigue: float
    difficulty_before: int
    difficulty_after: int
    rationale: tuple[str, ...]
    rolling_success: Optional[float]


@dataclass
class SimResult:
    seed: int
    states: list[UserState] = field(default_factory=list)
    directives: list[Directive] = field(default_factory=list)
    reports: list[PerformanceReport] = field(default_factory=list)
    ticks: list[TickRecord] = field(default_factory=list)
    session_dir: Optional[Path] = None

    def in_band_fraction(self, low: float, high: float, burn_in_ticks: int) -> float:
        considered = self.ticks[burn_in_ticks:]
        if not considered:
            return 0.0
        in_band = sum(
            1
            for tr in considered
            if tr.rolling_success is not None and low <= tr.rolling_success <= high
        )
        return in_band / len(considered)

    def safety_violations(self, theta_f: float) -> int:
        return sum(
            1
            for tr in self.ticks
            if tr.fatigue >= theta_f and tr.difficulty_after > tr.difficulty_before
        )

    def non_safety_change_times(self) -> list[int]:
        out = []
        for tr in self.ticks:
            if tr.difficulty_after != tr.difficulty_before and not any(
                r in ("R1", "SESSION_CAP") or r.startswith("OVERRIDE")
                for r in tr.rationale
            ):
                out.append(tr.t)
        return out


def run_closed_loop(
    seed: int,
    duration_s: int = 600,
    skill: float = 5.0,
    plan: Optional[TherapyPlan] = None,
    rules: Optional[RuleConfig] = None,
    scenario: Optional[ScenarioScript] = None,
    record_dir: Optional[Path] = None,
) -> SimResult:
    """Run one deterministic closed-loop session on the logical clock."""
    plan = plan or TherapyPlan()
    rules = rules or RuleConfig()

    recorder = None
    if record_dir is not None:
        record_dir = Path(record_dir)
        recorder = Recorder(record_dir)

    pipeline = Pipeline(plan, rules, session_id=f"sim-{seed}", recorder=recorder, start_ms=0)
    player = SimPlayer(skill=skill, seed=seed)
    runner = GameRunner(player, start_ms=0)

    physio = CoupledPhysio(seed + 1) if scenario is None else None
    scripted: list[Timed] = list(generate_stream(scenario)) if scenario is not None else []
    scripted_idx = 0

    result = SimResult(seed=seed)
    total_ms = duration_s * 1000

    for t in range(0, total_ms, FRAME_STEP_MS):
        # 1. sensor emissions due at t
        if physio is not None:
            for device, env in physio.emit(t, player.fatigue):
                pipeline.on_envelope(device, env, t)
        else:
            while scripted_idx < len(scripted) and scripted[scripted_idx].t_ms <= t:
                timed = scripted[scripted_idx]
                device = {
                    "ecg": DeviceType.ECG_CHEST,
                    "ppg": DeviceType.PPG_WRIST,
                    "affect": DeviceType.MOCAP,
                }[timed.port]
                pipeline.on_envelope(device, timed.envelope, timed.t_ms)
                scripted_idx += 1

        # 2. frame clock
        pipeline.frame_tick(t)

        # 3. decision clock
        if t % DECIDE_STEP_MS == 0:
            before = pipeline.loop.current.difficulty_target
            state, directive = pipeline.decide_tick(t)
            after = pipeline.loop.current.difficulty_target
            result.states.append(state)
            result.ticks.append(
                TickRecord(
                    t=t,
                    fatigue=state.fatigue,
                    difficulty_before=before,
                    difficulty_after=after,
                    rationale=tuple(f.rule for f in pipeline.loop.last_firings),
                    rolling_success=pipeline.loop.recent_success_rate(),
                )
            )
            if directive is not None:
                runner.on_directive(directive, t)

        # 4. game side
        for report in runner.tick(t):
            pipeline.on_report(report.to_payload(), t)

    result.directives = list(pipeline.directives)
    result.reports = list(runner.reports)
    result.session_dir = record_dir

    if recorder is not None:
        import json

        (record_dir / "plan.json").write_text(json.dumps(plan.to_json(), indent=2))
        (record_dir / "rules.json").write_text(json.dumps(rules.to_json(), indent=2))
        (record_dir / "meta.json").write_text(
            json.dumps({"seed": seed, "duration_s": duration_s, "skill": skill}, indent=2)
        )
        recorder.close()
    return result


def run_randomized_decisions(
    seed: int, ticks: int, plan: Optional[TherapyPlan] = None, rules: Optional[RuleConfig] = None
):
    """Fast randomized loop over the decision core alone: random states,
    random reports, occasional overrides. Returns per-tick records for the
    safety, hysteresis, and totality properties."""
    from ..cam import DecisionLoop, TASK_CATEGORIES, validate_directive

    plan = plan or TherapyPlan(session_cap_s=10**9)
    rules = rules or RuleConfig()
    rng = random.Random(seed)
    loop = DecisionLoop(plan, rules, start_ms=0)
    records: list[TickRecord] = []

    t = 0
    for _ in range(ticks):
        t += DECIDE_STEP_MS
        state = UserState(
            workload=rng.random(),
            engagement=rng.random(),
            fatigue=rng.random(),
            confidence=rng.random(),
            t=t,
        )
        if rng.random() < 0.2:
            loop.on_report(
                {
                    "exercise_id": "x",
                    "category": rng.choice(TASK_CATEGORIES),
                    "success_rate": rng.random(),
                    "completion_time_s": rng.uniform(5, 60),
                    "errors": rng.randrange(5),
                    "reps_done": rng.randrange(1, 20),
                    "ended_at": t,
                }
            )
        before = loop.current.difficulty_target
        if rng.random() < 0.02:
            kind = rng.choice(
                ["SET_DIFFICULTY", "FORCE_REST", "SWITCH_CATEGORY", "PAUSE", "RESUME"]
            )
            value = {
                "SET_DIFFICULTY": rng.randrange(1, 11),
                "SWITCH_CATEGORY": rng.choice(TASK_CATEGORIES),
            }.get(kind)
            try:
                if kind == "PAUSE" and loop.paused:
                    raise InvalidOverride("already paused")
                if kind == "RESUME" and not loop.paused:
                    raise InvalidOverride("not paused")
                d = loop.on_override(kind, value, t, fatigue=state.fatigue)
                validate_directive(d, before)
                records.append(
                    TickRecord(
                        t=t,
                        fatigue=state.fatigue,
                        difficulty_before=before,
                        difficulty_after=d.difficulty_target,
                        rationale=d.rationale,
                        rolling_success=None,
                    )
                )
                before = loop.current.difficulty_target
            except InvalidOverride:
                pass
        directive = loop.tick(state, t)
        if directive is not None:
            validate_directive(directive, before)
        after = loop.current.difficulty_target
        records.append(
            TickRecord(
                t=t,
                fatigue=state.fatigue,
                difficulty_before=before,
                difficulty_after=after,
                rationale=tuple(f.rule for f in loop.last_firings),
                rolling_success=None,
            )
        )
    return records
