"""Session replay: re-drives the decision pipeline from recorded logs.

Sensor samples, performance reports, and overrides are the loop's inputs;
directives are its output. Replay re-injects the inputs on the logical clock
(arbitrarily accelerated: assertions never touch the wall clock) and the
recomputed directive sequence must hash-equal the recorded one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..cam import RuleConfig, TherapyPlan
from ..errors import CorruptLog
from ..ingest import sample_from_record
from ..pipeline import Pipeline

FRAME_STEP_MS = 100
DECIDE_STEP_MS = 1000


def load_jsonl(path: Path) -> list[dict]:
    """Parse one JSONL file; names the offending line on corruption."""
    if not path.exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise CorruptLog(str(path), line_no, str(e)) from None
    return records


def directive_hash(payloads: list[dict]) -> str:
    h = hashlib.sha256()
    for p in payloads:
        h.update(json.dumps(p, sort_keys=True, separators=(",", ":")).encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class ReplayResult:
    directives: list[dict] = field(default_factory=list)
    states: list[dict] = field(default_factory=list)
    recorded_hash: Optional[str] = None
    replayed_hash: Optional[str] = None

    @property
    def matches(self) -> bool:
        return self.recorded_hash == self.replayed_hash


def replay_session(session_dir: str | Path) -> ReplayResult:
    """Re-inject a recorded session's inputs and recompute the directives."""
    session_dir = Path(session_dir)
    raw = load_jsonl(session_dir / "raw.jsonl")
    reports = load_jsonl(session_dir / "reports.jsonl")
    overrides = load_jsonl(session_dir / "overrides.jsonl")
    recorded = load_jsonl(session_dir / "directives.jsonl")

    plan_path = session_dir / "plan.json"
    rules_path = session_dir / "rules.json"
    plan = TherapyPlan.from_json(json.loads(plan_path.read_text())) if plan_path.exists() else TherapyPlan()
    rules = RuleConfig.from_json(json.loads(rules_path.read_text())) if rules_path.exists() else RuleConfig()

    result = ReplayResult(recorded_hash=directive_hash(recorded))
    if not raw and not reports:
        result.replayed_hash = directive_hash([])
        return result

    samples = sorted((sample_from_record(r) for r in raw), key=lambda s: s.hub_ts)
    loop_inputs = sorted(
        [("report", r.get("ended_at", 0), r) for r in reports]
        + [("override", o.get("t", 0), o) for o in overrides],
        key=lambda item: item[1],
    )

    meta_path = session_dir / "meta.json"
    if meta_path.exists():
        # Recorded runs tick over [0, duration); replay must stop at the same
        # boundary or trailing decide ticks would add directives.
        end_ms = int(json.loads(meta_path.read_text())["duration_s"]) * 1000
    else:
        last_ts = max([s.hub_ts for s in samples] + [t for _, t, _ in loop_inputs] + [0])
        end_ms = (last_ts // DECIDE_STEP_MS + 1) * DECIDE_STEP_MS

    pipeline = Pipeline(plan, rules, session_id="replay", recorder=None, start_ms=0)
    si = 0  # next sample
    li = 0  # next loop input

    for t in range(0, end_ms, FRAME_STEP_MS):
        # Samples land before the frame that includes them (ingest precedes
        # alignment in the live ordering).
        while si < len(samples) and samples[si].hub_ts <= t:
            pipeline.inject_sample(samples[si])
            si += 1

        pipeline.frame_tick(t)

        if t % DECIDE_STEP_MS == 0:
            state, _ = pipeline.decide_tick(t)
            result.states.append(state.to_record())

        # Reports/overrides were produced after the decision tick of their
        # timestamp, so they are delivered after it on replay as well.
        while li < len(loop_inputs) and loop_inputs[li][1] <= t:
            kind, ts, payload = loop_inputs[li]
            if kind == "report":
                pipeline.loop.on_report(payload)
            else:
                injected = pipeline.loop.on_override(
                    payload["kind"], payload.get("value"), ts,
                    fatigue=pipeline.last_state.fatigue if pipeline.last_state else None,
                )
                pipeline._emit_directive(injected)
            li += 1

    result.directives = [d.to_payload() for d in pipeline.directives]
    result.replayed_hash = directive_hash(result.directives)
    return result
