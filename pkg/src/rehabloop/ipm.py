"""Intelligent play module: the universal actuator on the game side.

Resolves incoming directives into concrete exercises from the catalog, binds
difficulty/pacing to in-game parameters, micro-adjusts difficulty between
exercises (same bands as the decision core, capped by the directive), builds
procedurally shuffled exercise sequences, and reports performance back.

The play module never originates a task-category change on its own; category
switches only happen in response to a directive.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cam import Directive, TherapyPlan
from .errors import EmptyCategory, InfeasibleQuota
from .wire import Envelope, MsgType

PHASE_IDLE = "IDLE"
PHASE_ACTIVE = "ACTIVE"
PHASE_REST = "REST"
PHASE_DONE = "DONE"

REST_DURATION_S = 30.0
PACING_GAP_S = {"slow": 3.0, "normal": 2.0, "fast": 1.0}

# Exercise considered abandoned after twice its expected duration.
ABANDON_FACTOR = 2.0

FEEDBACK_SETTINGS = {
    "low": {"visual_cue_rate_hz": 0.2, "audio_volume": 1, "haptic_pulses": 0},
    "medium": {"visual_cue_rate_hz": 0.5, "audio_volume": 2, "haptic_pulses": 1},
    "high": {"visual_cue_rate_hz": 1.0, "audio_volume": 3, "haptic_pulses": 2},
}


@dataclass(frozen=True)
class ExerciseSpec:
    id: str
    name: str
    category: str
    base_reps: int
    # param curves: name -> (base, per_level); value = base + per_level*(difficulty-1)
    param_map: dict[str, tuple[float, float]] = field(default_factory=dict)

    def bind_params(self, difficulty: int, pacing: str) -> dict[str, float]:
        params = {
            name: round(base + per_level * (difficulty - 1), 4)
            for name, (base, per_level) in self.param_map.items()
        }
        params["inter_rep_gap_s"] = PACING_GAP_S[pacing]
        return params


DEFAULT_CATALOG = [
    ExerciseSpec(
        "alternating_arm_lifts", "Alternating arm lifts", "coordination", 10,
        {"lift_height": (0.4, 0.05), "targets": (2.0, 1.0)},
    ),
    ExerciseSpec(
        "arm_raise_hammering", "Arm raise and hammering motion", "coordination", 10,
        {"hammer_speed": (0.5, 0.1), "targets": (2.0, 1.0)},
    ),
    ExerciseSpec(
        "forward_backward_arms", "Forward-backward arm movements", "reaction_speed", 12,
        {"cue_speed": (0.6, 0.15), "targets": (3.0, 1.0)},
    ),
    ExerciseSpec(
        "body_shifts_left_right", "Left-right body shifts", "reaction_speed", 12,
        {"cue_speed": (0.5, 0.12), "lane_count": (2.0, 0.5)},
    ),
    ExerciseSpec(
        "sequence_recall", "Sequence recall", "memory", 8,
        {"sequence_length": (3.0, 0.5), "display_time_s": (2.0, -0.12)},
    ),
]


def load_catalog(path: str | Path | None = None) -> list[ExerciseSpec]:
    """Load and validate the exercise catalog; without a path, the packaged
    catalog.json is used (built-in set as last resort)."""
    if path is None:
        packaged = Path(__file__).parent / "data" / "catalog.json"
        if not packaged.exists():
            return list(DEFAULT_CATALOG)
        path = packaged
    data = json.loads(Path(path).read_text())
    specs = [
        ExerciseSpec(
            id=e["id"],
            name=e.get("name", e["id"]),
            category=e["category"],
            base_reps=int(e["base_reps"]),
            param_map={k: (float(v[0]), float(v[1])) for k, v in e.get("param_map", {}).items()},
        )
        for e in data["exercises"]
    ]
    ids = [s.id for s in specs]
    if len(ids) != len(set(ids)):
        raise ValueError("catalog ids must be unique")
    for s in specs:
        if s.base_reps < 1:
            raise ValueError(f"{s.id}: base_reps must be positive")
    return specs


def dump_catalog(specs: list[ExerciseSpec], path: str | Path) -> None:
    data = {
        "exercises": [
            {
                "id": s.id,
                "name": s.name,
                "category": s.category,
                "base_reps": s.base_reps,
                "param_map": {k: list(v) for k, v in s.param_map.items()},
            }
            for s in specs
        ]
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


@dataclass(frozen=True)
class PerformanceReport:
    exercise_id: str
    category: str
    success_rate: float
    completion_time_s: float
    errors: int
    reps_done: int
    ended_at: int
    flags: tuple[str, ...] = ()

    def to_payload(self) -> dict[str, Any]:
        return {
            "exercise_id": self.exercise_id,
            "category": self.category,
            "success_rate": self.success_rate,
            "completion_time_s": self.completion_time_s,
            "errors": self.errors,
            "reps_done": self.reps_done,
            "ended_at": self.ended_at,
            "flags": list(self.flags),
        }

    @classmethod
    def from_payload(cls, p: dict[str, Any]) -> "PerformanceReport":
        return cls(
            exercise_id=p["exercise_id"],
            category=p["category"],
            success_rate=p["success_rate"],
            completion_time_s=p["completion_time_s"],
            errors=p["errors"],
            reps_done=p["reps_done"],
            ended_at=p["ended_at"],
            flags=tuple(p.get("flags", ())),
        )

    def to_envelope(self, seq: int, sent_at: int) -> Envelope:
        return Envelope(MsgType.PERF_REPORT, seq=seq, sent_at=sent_at, payload=self.to_payload())


def dda_step(history: list[PerformanceReport], level: int, cap: int = 10) -> int:
    """Micro difficulty adjustment between exercises: same bands as the
    decision core, one step at most, never above the directive cap."""
    if not history:
        return level
    mean_success = sum(r.success_rate for r in history) / len(history)
    if mean_success > 0.8:
        return level + 1 if level < cap else level
    if mean_success < 0.4:
        return max(1, level - 1)
    return level


def apply_feedback_intensity(level: str) -> dict[str, float]:
    """Per-channel feedback magnitudes, monotone in level."""
    return dict(FEEDBACK_SETTINGS[level])


@dataclass(frozen=True)
class SequencePlan:
    slots: tuple[str, ...]  # exercise ids in play order
    difficulty_offsets: tuple[int, ...]  # per-slot offset vs directive target
    seed: int


def _ramp_offsets(n: int) -> tuple[int, ...]:
    if n == 1:
        return (0,)
    if n == 2:
        return (-1, 1)
    return (-1,) + (0,) * (n - 2) + (1,)


def pcg_sequence(plan: TherapyPlan, catalog: list[ExerciseSpec], seed: int) -> SequencePlan:
    """Seeded constrained shuffle of the session's exercise slots.

    Guarantees: per-category slot counts equal the plan quotas; no two
    consecutive identical exercise ids; within a category, members rotate so
    each appears as evenly as possible; identical (plan, catalog, seed) give
    identical output.
    """
    rng = random.Random(seed)
    by_category: dict[str, list[ExerciseSpec]] = {}
    for spec in catalog:
        by_category.setdefault(spec.category, []).append(spec)

    counts: dict[str, int] = {}
    for category, quota in sorted(plan.quotas.items()):
        if quota == 0:
            continue
        members = by_category.get(category)
        if not members:
            raise InfeasibleQuota(f"quota {quota} on empty category {category!r}")
        rotation = sorted(members, key=lambda s: s.id)
        rng.shuffle(rotation)
        for i in range(quota):
            ex = rotation[i % len(rotation)]
            counts[ex.id] = counts.get(ex.id, 0) + 1

    total = sum(counts.values())
    if total == 0:
        return SequencePlan(slots=(), difficulty_offsets=(), seed=seed)
    if max(counts.values()) > (total + 1) // 2:
        raise InfeasibleQuota(
            "an exercise would have to repeat consecutively to satisfy the quotas"
        )

    remaining = dict(counts)
    slots: list[str] = []
    prev: Optional[str] = None
    for _ in range(total):
        candidates = sorted(e for e, c in remaining.items() if c > 0 and e != prev)
        if not candidates:  # unreachable given the count check above
            raise InfeasibleQuota("constrained shuffle ran out of candidates")
        left = total - len(slots)
        # An id holding more than half the remaining slots must be placed now,
        # or the no-consecutive-repeat constraint becomes unsatisfiable.
        forced = [e for e in candidates if remaining[e] * 2 > left]
        pick = forced[0] if forced else rng.choice(candidates)
        slots.append(pick)
        remaining[pick] -= 1
        prev = pick

    return SequencePlan(slots=tuple(slots), difficulty_offsets=_ramp_offsets(total), seed=seed)


@dataclass
class SessionState:
    current_exercise: Optional[str] = None
    category: Optional[str] = None
    difficulty: int = 1
    reps_done: int = 0
    reps_target: int = 0
    successes: int = 0
    errors: int = 0
    phase: str = PHASE_IDLE
    elapsed_s: float = 0.0
    started_at: int = 0
    rest_until_ms: Optional[int] = None
    params: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


class PlaySession:
    """One session state machine per connected game; single owner."""

    def __init__(self, catalog: list[ExerciseSpec], preferences: tuple[str, ...] = ()):
        if not catalog:
            raise ValueError("catalog must not be empty")
        self.catalog = catalog
        self.preferences = preferences or tuple(
            dict.fromkeys(s.category for s in catalog)
        )
        self.state = SessionState()
        self.directive: Optional[Directive] = None
        self._last_played: dict[str, int] = {}  # exercise id -> order stamp
        self._play_counter = 0
        self.category_switches: list[tuple[int, str, str]] = []  # (ts, from, to)

    def resolve_directive(self, d: Directive, now_ms: int) -> SessionState:
        """Apply a directive: rest, adjust the running exercise, or pick/bind
        the next concrete exercise."""
        prev_category = self.state.category
        self.directive = d
        if d.rest:
            # Rest never swaps the exercise; difficulty cap still applies.
            self.state.phase = PHASE_REST
            self.state.rest_until_ms = now_ms + int(REST_DURATION_S * 1000)
            self.state.difficulty = min(self.state.difficulty, d.difficulty_target)
            return self.state

        if (
            self.state.phase == PHASE_ACTIVE
            and self.state.category == d.task_category
            and self.state.current_exercise is not None
        ):
            # Same-category adjustment applies immediately, mid-exercise.
            spec = next(s for s in self.catalog if s.id == self.state.current_exercise)
            self.state.difficulty = max(1, min(10, d.difficulty_target))
            self.state.reps_target = d.repetitions
            self.state.params = spec.bind_params(d.difficulty_target, d.pacing)
            return self.state

        return self._start_exercise(d.task_category, d.difficulty_target, d, now_ms, prev_category)

    def begin_next(self, level: int, now_ms: int) -> SessionState:
        """Start the next exercise under the standing directive at the
        micro-adjusted level (never above the directive's target)."""
        if self.directive is None:
            raise ValueError("no directive to continue")
        level = min(level, self.directive.difficulty_target)
        return self._start_exercise(
            self.directive.task_category, level, self.directive, now_ms, self.state.category
        )

    def _start_exercise(
        self,
        category: str,
        level: int,
        d: Directive,
        now_ms: int,
        prev_category: Optional[str],
    ) -> SessionState:
        spec, fallback = self._pick_exercise(category)
        flags = ["fallback_category"] if fallback else []
        if prev_category is not None and spec.category != prev_category:
            self.category_switches.append((now_ms, prev_category, spec.category))

        level = max(1, min(10, level))
        self._play_counter += 1
        self._last_played[spec.id] = self._play_counter
        self.state = SessionState(
            current_exercise=spec.id,
            category=spec.category,
            difficulty=level,
            reps_done=0,
            reps_target=d.repetitions,
            successes=0,
            errors=0,
            phase=PHASE_ACTIVE,
            started_at=now_ms,
            params=spec.bind_params(level, d.pacing),
            flags=flags,
        )
        return self.state

    def _pick_exercise(self, category: str) -> tuple[ExerciseSpec, bool]:
        candidates = [s for s in self.catalog if s.category == category]
        fallback = False
        if not candidates:
            # Nearest category by preference order, flagged in the report.
            fallback = True
            for cat in self.preferences:
                candidates = [s for s in self.catalog if s.category == cat]
                if candidates:
                    break
            if not candidates:
                raise EmptyCategory(f"no exercise available for {category!r}")
        # Least-recently-played wins; stable on id for never-played ties.
        candidates.sort(key=lambda s: (self._last_played.get(s.id, 0), s.id))
        return candidates[0], fallback

    def record_attempt(self, success: bool) -> None:
        if self.state.phase != PHASE_ACTIVE:
            return
        self.state.reps_done += 1
        if success:
            self.state.successes += 1
        else:
            self.state.errors += 1

    def exercise_finished(self, now_ms: int) -> bool:
        if self.state.phase != PHASE_ACTIVE:
            return False
        if self.state.reps_done >= self.state.reps_target:
            return True
        if self.directive is not None:
            limit_s = self.directive.duration_s * ABANDON_FACTOR
            if (now_ms - self.state.started_at) / 1000.0 > limit_s:
                return True
        return False

    def report(self, now_ms: int) -> PerformanceReport:
        """Close out the current exercise and reset per-exercise counters."""
        s = self.state
        attempted = s.reps_done
        success_rate = (s.successes / attempted) if attempted else 0.0
        flags = list(s.flags)
        if attempted < s.reps_target:
            flags.append("incomplete")
        rep = PerformanceReport(
            exercise_id=s.current_exercise or "",
            category=s.category or "",
            success_rate=success_rate,
            completion_time_s=(now_ms - s.started_at) / 1000.0,
            errors=s.errors,
            reps_done=attempted,
            ended_at=now_ms,
            flags=tuple(flags),
        )
        s.phase = PHASE_DONE
        s.reps_done = 0
        s.successes = 0
        s.errors = 0
        return rep
