"""Context awareness core: stage-1 user-state inference and stage-2 rule-based
decision generation producing structured adaptive directives.

The shipped inference/decision pair is deterministic (weighted heuristics plus
a prioritized rule table); both sides sit behind small interfaces so a learned
temporal model or policy can replace them without touching the loop.

Rule table, strict priority, first match wins for difficulty; others compose:
  R1 safety    : fatigue >= theta_f        -> difficulty-1, rest, slow pacing
  R2 boredom   : engagement < theta_e for >= dwell -> switch task category
  R3 DDA up    : recent success > high band and low fatigue -> difficulty+1
  R4 DDA down  : recent success < low band -> difficulty-1
  R5 default   : hold everything
Non-safety difficulty changes are rate-limited by the dwell time (hysteresis);
R1 is exempt. Operator overrides preempt rule output for one dwell period,
except that R1 still wins (safety over operator).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from .errors import BoundaryViolation, NoUsableData
from .fusion import FeatureWindow
from .ingest import Baseline

TASK_CATEGORIES = ("coordination", "reaction_speed", "memory")
PACING_LEVELS = ("slow", "normal", "fast")
FEEDBACK_LEVELS = ("low", "medium", "high")

DIRECTIVE_FIELDS = (
    "task_category",
    "difficulty_target",
    "repetitions",
    "duration_s",
    "pacing",
    "rest",
    "feedback_intensity",
    "rationale",
    "issued_at",
)

# Per-category baselines that difficulty scales from.
BASE_REPS = {"coordination": 10, "reaction_speed": 12, "memory": 8}
BASE_DURATION_S = {"coordination": 30.0, "reaction_speed": 25.0, "memory": 40.0}

RULES_SCHEMA_VERSION = 1


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


@dataclass(frozen=True)
class UserState:
    workload: float
    engagement: float
    fatigue: float
    confidence: float
    t: int  # ms

    def to_record(self) -> dict:
        return {
            "workload": self.workload,
            "engagement": self.engagement,
            "fatigue": self.fatigue,
            "confidence": self.confidence,
            "t": self.t,
        }


@dataclass(frozen=True)
class Directive:
    task_category: str
    difficulty_target: int
    repetitions: int
    duration_s: float
    pacing: str
    rest: bool
    feedback_intensity: str
    rationale: tuple[str, ...]
    issued_at: int

    def to_payload(self) -> dict[str, Any]:
        return {
            "task_category": self.task_category,
            "difficulty_target": self.difficulty_target,
            "repetitions": self.repetitions,
            "duration_s": self.duration_s,
            "pacing": self.pacing,
            "rest": self.rest,
            "feedback_intensity": self.feedback_intensity,
            "rationale": list(self.rationale),
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_payload(cls, p: dict[str, Any]) -> "Directive":
        return cls(
            task_category=p["task_category"],
            difficulty_target=p["difficulty_target"],
            repetitions=p["repetitions"],
            duration_s=p["duration_s"],
            pacing=p["pacing"],
            rest=p["rest"],
            feedback_intensity=p["feedback_intensity"],
            rationale=tuple(p["rationale"]),
            issued_at=p["issued_at"],
        )


@dataclass
class TherapyPlan:
    quotas: dict[str, int] = field(
        default_factory=lambda: {"coordination": 6, "reaction_speed": 6, "memory": 4}
    )
    fatigue_threshold: float = 0.8  # theta_f
    engagement_threshold: float = 0.3  # theta_e
    max_difficulty: int = 10
    session_cap_s: int = 3600
    start_difficulty: int = 3
    preferences: tuple[str, ...] = TASK_CATEGORIES

    def __post_init__(self) -> None:
        if not (0.0 < self.engagement_threshold < self.fatigue_threshold <= 1.0):
            raise ValueError("require 0 < theta_e < theta_f <= 1")
        if any(q < 0 for q in self.quotas.values()):
            raise ValueError("quotas must be >= 0")

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "quotas": dict(self.quotas),
            "fatigue_threshold": self.fatigue_threshold,
            "engagement_threshold": self.engagement_threshold,
            "max_difficulty": self.max_difficulty,
            "session_cap_s": self.session_cap_s,
            "start_difficulty": self.start_difficulty,
            "preferences": list(self.preferences),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TherapyPlan":
        fields = {k: v for k, v in data.items() if k != "schema_version"}
        if "preferences" in fields:
            fields["preferences"] = tuple(fields["preferences"])
        return cls(**fields)


@dataclass
class RuleConfig:
    success_high: float = 0.8
    success_low: float = 0.4
    dwell_s: float = 30.0
    # fatigue index weights: hr elevation, suppressed HRV, lost smoothness, negative affect
    w_fatigue_hr: float = 0.35
    w_fatigue_hrv: float = 0.25
    w_fatigue_motion: float = 0.25
    w_fatigue_affect: float = 0.15
    # engagement index weights
    w_engage_flatness: float = 0.5
    w_engage_success: float = 0.3
    w_engage_affect: float = 0.2
    # workload index weights
    w_load_hr: float = 0.6
    w_load_difficulty: float = 0.4
    hr_elev_scale: float = 0.5  # fractional HR elevation that saturates the index
    rmssd_norm_ms: float = 50.0
    surprise_engages: bool = True  # count surprise as engagement-positive
    reports_considered: int = 3
    # A safety rest, once entered, holds until fatigue falls back below
    # rest_release * theta_f; releasing right at theta_f would churn.
    rest_release: float = 0.85

    def __post_init__(self) -> None:
        if not self.success_low < self.success_high:
            raise ValueError("require success_low < success_high")
        if self.dwell_s <= 0:
            raise ValueError("dwell must be positive")

    def to_json(self) -> dict:
        data = {"schema_version": RULES_SCHEMA_VERSION}
        data.update({k: getattr(self, k) for k in self.__dataclass_fields__})
        return data

    @classmethod
    def from_json(cls, data: dict) -> "RuleConfig":
        return cls(**{k: v for k, v in data.items() if k != "schema_version"})

    @classmethod
    def load(cls, path: str | Path) -> "RuleConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


@dataclass
class ContextRecord:
    plan: TherapyPlan
    category_counts: dict[str, int] = field(default_factory=dict)
    recent_reports: list[dict] = field(default_factory=list)  # newest last
    time_of_day: str = "morning"  # passthrough metadata, no rule uses it yet
    preferences: tuple[str, ...] = TASK_CATEGORIES


def infer_state(
    features: FeatureWindow,
    baseline: Baseline,
    recent_success_rate: Optional[float],
    current_difficulty: int,
    rules: RuleConfig,
    prev_state: Optional[UserState],
    t: int,
) -> UserState:
    """Weighted multimodal heuristics over the feature window.

    Absent features contribute zero to their index; confidence reflects the
    fraction of streams that were fresh, halved while the resting baseline is
    still calibrating. With nothing fresh at all the previous state carries
    over at confidence zero.
    """
    if not features.fresh_streams:
        if prev_state is not None:
            return replace(prev_state, confidence=0.0, t=t)
        raise NoUsableData("no fresh stream and no previous state")

    hr_elev = 0.0
    if features.hr_mean is not None and baseline.resting_bpm > 0:
        frac = (features.hr_mean - baseline.resting_bpm) / baseline.resting_bpm
        hr_elev = clamp01(frac / rules.hr_elev_scale)

    fatigue = rules.w_fatigue_hr * hr_elev
    if features.hrv_rmssd is not None:
        hrv_norm = clamp01(features.hrv_rmssd / rules.rmssd_norm_ms)
        fatigue += rules.w_fatigue_hrv * (1.0 - hrv_norm)
    if features.motion_smoothness is not None:
        fatigue += rules.w_fatigue_motion * (1.0 - features.motion_smoothness)
    if features.affect_dist is not None:
        fatigue += rules.w_fatigue_affect * features.affect_dist.negative

    engagement = 0.0
    if features.flatness is not None:
        engagement += rules.w_engage_flatness * (1.0 - features.flatness)
    if recent_success_rate is not None:
        engagement += rules.w_engage_success * recent_success_rate
    if features.affect_dist is not None:
        positive = features.affect_dist.positive
        if rules.surprise_engages:
            positive += features.affect_dist.surprise
        engagement += rules.w_engage_affect * positive

    workload = rules.w_load_hr * hr_elev + rules.w_load_difficulty * current_difficulty / 10.0

    confidence = len(features.fresh_streams) / 3.0
    if not baseline.complete:
        confidence *= 0.5

    return UserState(
        workload=clamp01(workload),
        engagement=clamp01(engagement),
        fatigue=clamp01(fatigue),
        confidence=clamp01(confidence),
        t=t,
    )


def scale_repetitions(category: str, difficulty: int) -> int:
    return round(BASE_REPS[category] * (1.0 + 0.1 * (difficulty - 1)))


def scale_duration(category: str, difficulty: int) -> float:
    return round(BASE_DURATION_S[category] * (1.0 + 0.1 * (difficulty - 1)), 1)


def _next_category(ctx: ContextRecord, current: str) -> str:
    """Next preferred category with unmet quota, skipping the current one."""
    prefs = [c for c in ctx.preferences if c in TASK_CATEGORIES] or list(TASK_CATEGORIES)
    unmet = [
        c
        for c in prefs
        if c != current and ctx.category_counts.get(c, 0) < ctx.plan.quotas.get(c, 0)
    ]
    if unmet:
        return unmet[0]
    fallback = [c for c in prefs if c != current]
    return fallback[0] if fallback else current


@dataclass
class RuleFiring:
    rule: str
    detail: str


@dataclass
class DecisionInputs:
    """Everything decide() needs beyond the state itself."""
    engagement_low_for_s: float = 0.0
    last_difficulty_change_ms: Optional[int] = None
    in_rest_episode: bool = False  # an R1 decrement already applied this episode
    hold_rest: bool = False  # resting until the release level, below theta_f


def decide(
    state: UserState,
    ctx: ContextRecord,
    current: Directive,
    rules: RuleConfig,
    now: int,
    inputs: DecisionInputs,
) -> tuple[Directive, list[RuleFiring]]:
    """Evaluate the rule table; always returns a directive (R5 totality).

    Difficulty is set by the first matching difficulty rule (R1 > R3 > R4);
    R2's category switch composes with any of them. Hysteresis: non-safety
    difficulty changes are suppressed within dwell_s of the previous change.
    """
    theta_f = ctx.plan.fatigue_threshold
    theta_e = ctx.plan.engagement_threshold
    firings: list[RuleFiring] = []

    difficulty = current.difficulty_target
    category = current.task_category
    pacing = current.pacing
    rest = False
    feedback = current.feedback_intensity

    dwell_ms = rules.dwell_s * 1000.0
    dwell_ok = (
        inputs.last_difficulty_change_ms is None
        or now - inputs.last_difficulty_change_ms >= dwell_ms
    )

    difficulty_set = False

    # R1 safety: never raise while fatigued; decrement once per rest episode;
    # an entered rest holds until fatigue recovers below the release level.
    if state.fatigue >= theta_f or inputs.hold_rest:
        if state.fatigue >= theta_f and not inputs.in_rest_episode:
            difficulty = max(1, current.difficulty_target - 1)
        rest = True
        pacing = "slow"
        feedback = "low"
        difficulty_set = True
        if state.fatigue >= theta_f:
            detail = f"fatigue {state.fatigue:.2f} >= theta_f {theta_f:.2f}"
        else:
            detail = (
                f"resting until fatigue {state.fatigue:.2f} <= "
                f"{rules.rest_release * theta_f:.2f} (release)"
            )
        firings.append(RuleFiring("R1", detail))

    # R2 boredom: sustained low engagement switches to the next unmet category.
    if state.engagement < theta_e and inputs.engagement_low_for_s >= rules.dwell_s:
        new_cat = _next_category(ctx, category)
        if new_cat != category:
            category = new_cat
            feedback = "low"
            firings.append(
                RuleFiring(
                    "R2",
                    f"engagement {state.engagement:.2f} < theta_e {theta_e:.2f} "
                    f"for >= {rules.dwell_s:.0f} s; switching to {new_cat}",
                )
            )

    reports = ctx.recent_reports[-rules.reports_considered:]
    mean_success = (
        sum(r["success_rate"] for r in reports) / len(reports) if reports else None
    )

    if not difficulty_set and mean_success is not None:
        # R3 DDA up
        if (
            mean_success > rules.success_high
            and state.fatigue < 0.5 * theta_f
            and dwell_ok
            and current.difficulty_target < ctx.plan.max_difficulty
        ):
            difficulty = current.difficulty_target + 1
            difficulty_set = True
            firings.append(
                RuleFiring(
                    "R3",
                    f"mean success {mean_success:.2f} > {rules.success_high:.2f} "
                    f"and fatigue {state.fatigue:.2f} < {0.5 * theta_f:.2f}",
                )
            )
        # R4 DDA down
        elif mean_success < rules.success_low and dwell_ok and current.difficulty_target > 1:
            difficulty = current.difficulty_target - 1
            difficulty_set = True
            firings.append(
                RuleFiring(
                    "R4", f"mean success {mean_success:.2f} < {rules.success_low:.2f}"
                )
            )

    if not firings:
        firings.append(RuleFiring("R5", "no change; all indices within bands"))

    directive = Directive(
        task_category=category,
        difficulty_target=difficulty,
        repetitions=scale_repetitions(category, difficulty),
        duration_s=scale_duration(category, difficulty),
        pacing=pacing,
        rest=rest,
        feedback_intensity=feedback,
        rationale=tuple(f.rule for f in firings),
        issued_at=now,
    )
    return directive, firings


def validate_directive(
    payload: dict[str, Any] | Directive, current_difficulty: Optional[int] = None
) -> None:
    """Enforce the reasoning/execution boundary on an outgoing directive.

    Rejects any field outside the directive vocabulary (mini-game ids and
    in-game parameters belong to the play module) and any invariant breach.
    Raises BoundaryViolation naming the offending field.
    """
    p = payload.to_payload() if isinstance(payload, Directive) else payload
    for key in p:
        if key not in DIRECTIVE_FIELDS:
            raise BoundaryViolation(key, "outside the directive vocabulary")
    for key in DIRECTIVE_FIELDS:
        if key not in p:
            raise BoundaryViolation(key, "missing")
    if p["task_category"] not in TASK_CATEGORIES:
        raise BoundaryViolation("task_category", f"unknown category {p['task_category']!r}")
    if not isinstance(p["difficulty_target"], int) or not (1 <= p["difficulty_target"] <= 10):
        raise BoundaryViolation("difficulty_target", "must be an integer in [1, 10]")
    if not isinstance(p["repetitions"], int) or p["repetitions"] < 1:
        raise BoundaryViolation("repetitions", "must be a positive integer")
    if p["duration_s"] <= 0:
        raise BoundaryViolation("duration_s", "must be positive")
    if p["pacing"] not in PACING_LEVELS:
        raise BoundaryViolation("pacing", "must be slow|normal|fast")
    if p["feedback_intensity"] not in FEEDBACK_LEVELS:
        raise BoundaryViolation("feedback_intensity", "must be low|medium|high")
    if p["rest"] and current_difficulty is not None and p["difficulty_target"] > current_difficulty:
        raise BoundaryViolation("difficulty_target", "rest directive may not raise difficulty")


def explain(directive: Directive, firings: list[RuleFiring]) -> str:
    """Human-readable trace of the fired rules with values and thresholds."""
    lines = [f"{f.rule}: {f.detail}" for f in firings]
    lines.append(
        f"-> category={directive.task_category} difficulty={directive.difficulty_target} "
        f"reps={directive.repetitions} pacing={directive.pacing} rest={directive.rest}"
    )
    return "\n".join(lines)


def _material_change(a: Directive, b: Directive) -> bool:
    return (
        a.task_category != b.task_category
        or a.difficulty_target != b.difficulty_target
        or a.repetitions != b.repetitions
        or a.pacing != b.pacing
        or a.rest != b.rest
        or a.feedback_intensity != b.feedback_intensity
    )


class DecisionLoop:
    """Single owner of decision state, ticking at 1 Hz.

    Consumes user states and performance reports, emits a directive whenever
    the decision materially changes. Operator overrides preempt rule output
    for one dwell period; the safety rule still outranks them. A paused loop
    holds a rest directive until resumed.
    """

    def __init__(self, plan: TherapyPlan, rules: RuleConfig, start_ms: int = 0):
        self.plan = plan
        self.rules = rules
        self.ctx = ContextRecord(plan=plan, preferences=plan.preferences)
        category = plan.preferences[0] if plan.preferences else TASK_CATEGORIES[0]
        difficulty = max(1, min(plan.max_difficulty, plan.start_difficulty))
        self.current = Directive(
            task_category=category,
            difficulty_target=difficulty,
            repetitions=scale_repetitions(category, difficulty),
            duration_s=scale_duration(category, difficulty),
            pacing="normal",
            rest=False,
            feedback_intensity="medium",
            rationale=("INIT",),
            issued_at=start_ms,
        )
        self.started_at = start_ms
        self.paused = False
        self.session_over = False
        self._emitted_initial = False
        self.last_firings: list[RuleFiring] = []
        self._last_difficulty_change: Optional[int] = None
        self._engagement_low_since: Optional[int] = None
        self._rest_episode_until: Optional[int] = None
        self._rest_hold = False
        self._override_until: Optional[int] = None

    # -- inputs --------------------------------------------------------------

    def on_report(self, payload: dict) -> None:
        self.ctx.recent_reports.append(payload)
        if len(self.ctx.recent_reports) > 50:
            del self.ctx.recent_reports[:-50]
        category = payload.get("category")
        if category:
            self.ctx.category_counts[category] = self.ctx.category_counts.get(category, 0) + 1

    def recent_success_rate(self) -> Optional[float]:
        reports = self.ctx.recent_reports[-self.rules.reports_considered:]
        if not reports:
            return None
        return sum(r["success_rate"] for r in reports) / len(reports)

    def on_override(
        self, kind: str, value: Any, now: int, fatigue: Optional[float] = None
    ) -> Directive:
        """Synthesize and adopt an override directive; preempts rules for one
        dwell period (the safety rule still wins)."""
        category = self.current.task_category
        difficulty = self.current.difficulty_target
        rest = self.current.rest
        rationale = [f"OVERRIDE:{kind}"]
        if kind == "SET_DIFFICULTY":
            difficulty = int(value)
            rest = False  # setting a level expresses intent to play at it
        elif kind == "SWITCH_CATEGORY":
            category = str(value)
        elif kind in ("FORCE_REST", "PAUSE"):
            rest = True
        elif kind == "RESUME":
            rest = False

        # Safety outranks the operator: no raise while over the threshold.
        if (
            fatigue is not None
            and fatigue >= self.plan.fatigue_threshold
            and difficulty > self.current.difficulty_target
        ):
            difficulty = self.current.difficulty_target
            rationale.append("R1")

        directive = Directive(
            task_category=category,
            difficulty_target=difficulty,
            repetitions=scale_repetitions(category, difficulty),
            duration_s=scale_duration(category, difficulty),
            pacing=self.current.pacing,
            rest=rest,
            feedback_intensity=self.current.feedback_intensity,
            rationale=tuple(rationale),
            issued_at=now,
        )
        if kind == "PAUSE":
            self.paused = True
        elif kind == "RESUME":
            self.paused = False
        else:
            self._override_until = now + int(self.rules.dwell_s * 1000)
        if directive.difficulty_target != self.current.difficulty_target:
            self._last_difficulty_change = now
        self.current = directive
        self.last_firings = [RuleFiring(f"OVERRIDE:{kind}", f"operator set {kind}={value}")]
        return directive

    # -- tick ----------------------------------------------------------------

    def tick(self, state: UserState, now: int) -> Optional[Directive]:
        """Run one decision tick; returns a directive only when it changes."""
        if self.session_over:
            return None
        if not self._emitted_initial:
            # Bootstrap: the play module needs the opening directive.
            self._emitted_initial = True
            self.current = replace(self.current, issued_at=now)
            self.last_firings = [RuleFiring("INIT", "session start")]
            return self.current
        if (now - self.started_at) / 1000.0 >= self.plan.session_cap_s:
            self.session_over = True
            final = replace(
                self.current, rest=True, pacing="slow",
                rationale=("SESSION_CAP",), issued_at=now,
            )
            self.current = final
            self.last_firings = [RuleFiring("SESSION_CAP", "session duration cap reached")]
            return final

        theta_f = self.plan.fatigue_threshold
        theta_e = self.plan.engagement_threshold

        # engagement dwell tracking
        if state.engagement < theta_e:
            if self._engagement_low_since is None:
                self._engagement_low_since = now
        else:
            self._engagement_low_since = None
        low_for_s = (
            (now - self._engagement_low_since) / 1000.0
            if self._engagement_low_since is not None
            else 0.0
        )

        # rest-episode tracking: one safety decrement per episode; the rest
        # itself holds until fatigue recovers below the release level
        release_level = theta_f * self.rules.rest_release
        if self._rest_hold and state.fatigue <= release_level:
            self._rest_hold = False
            self._rest_episode_until = None
        in_episode = (
            self._rest_episode_until is not None and now < self._rest_episode_until
        )

        if self.paused:
            return None

        override_active = self._override_until is not None and now < self._override_until
        if override_active:
            # Only the safety rule may contradict an operator override.
            if state.fatigue >= theta_f or self._rest_hold:
                decrement = state.fatigue >= theta_f and not in_episode
                difficulty = (
                    max(1, self.current.difficulty_target - 1)
                    if decrement
                    else self.current.difficulty_target
                )
                directive = replace(
                    self.current,
                    difficulty_target=difficulty,
                    repetitions=scale_repetitions(self.current.task_category, difficulty),
                    duration_s=scale_duration(self.current.task_category, difficulty),
                    rest=True,
                    pacing="slow",
                    feedback_intensity="low",
                    rationale=("R1",),
                    issued_at=now,
                )
                firings = [
                    RuleFiring("R1", f"fatigue {state.fatigue:.2f} >= theta_f {theta_f:.2f}")
                ]
            else:
                self.last_firings = []
                return None
        else:
            inputs = DecisionInputs(
                engagement_low_for_s=low_for_s,
                last_difficulty_change_ms=self._last_difficulty_change,
                in_rest_episode=in_episode,
                hold_rest=self._rest_hold,
            )
            directive, firings = decide(state, self.ctx, self.current, self.rules, now, inputs)

        self.last_firings = firings
        fired_r1 = any(f.rule == "R1" for f in firings)
        if fired_r1:
            self._rest_hold = True
            if state.fatigue >= theta_f and not in_episode:
                self._rest_episode_until = now + int(self.rules.dwell_s * 1000)
        if any(f.rule == "R2" for f in firings):
            self._engagement_low_since = None

        if directive.difficulty_target != self.current.difficulty_target:
            self._last_difficulty_change = now

        if _material_change(directive, self.current):
            self.current = directive
            return directive
        return None
