import json
import os

import pytest

from rehabloop.cam import RuleConfig, TherapyPlan, UserState
from rehabloop.errors import InvalidOverride, StorageFull
from rehabloop.iam import AlertEngine, OverrideCommand, Recorder, SessionRecord
from rehabloop.pipeline import Pipeline


def state(fatigue, t):
    return UserState(workload=0.5, engagement=0.5, fatigue=fatigue, confidence=1.0, t=t)


class TestRecorder:
    def test_append_returns_position(self, tmp_path):
        recorder = Recorder(tmp_path / "s1")
        assert recorder.record("states", {"a": 1}, t=0) == 1
        assert recorder.record("states", {"a": 2}, t=10) == 2
        recorder.close()
        lines = (tmp_path / "s1" / "states.jsonl").read_text().strip().split("\n")
        assert [json.loads(x)["a"] for x in lines] == [1, 2]

    def test_thousand_events_in_order(self, tmp_path):
        recorder = Recorder(tmp_path / "s1")
        for i in range(1000):
            recorder.record("reports", {"i": i}, t=i)
        recorder.close()
        lines = (tmp_path / "s1" / "reports.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1000
        assert [json.loads(x)["i"] for x in lines] == list(range(1000))

    def test_unknown_stream_rejected(self, tmp_path):
        recorder = Recorder(tmp_path / "s1")
        with pytest.raises(ValueError):
            recorder.record("nope", {}, t=0)

    def test_write_failure_raises_storage_full_once(self, tmp_path, monkeypatch):
        recorder = Recorder(tmp_path / "s1")
        recorder.record("states", {"ok": 1}, t=0)

        handle = recorder._files["states"]

        def boom(*args, **kwargs):
            raise OSError("disk full")

        monkeypatch.setattr(handle, "write", boom)
        with pytest.raises(StorageFull):
            recorder.record("states", {"ok": 2}, t=1)
        # live operation continues: further records are silently skipped
        assert recorder.record("states", {"ok": 3}, t=2) == -1
        assert recorder.failed


class TestAlertEngine:
    def test_edge_trigger_on_crossing(self):
        engine = AlertEngine(fatigue_threshold=0.8)
        assert engine.evaluate_state(state(0.7, 1000)) == []
        alerts = engine.evaluate_state(state(0.85, 2000))
        assert len(alerts) == 1
        assert alerts[0].kind == "FATIGUE_THRESHOLD"
        assert alerts[0].severity == "warning"

    def test_rearm_caps_alert_rate(self):
        engine = AlertEngine(fatigue_threshold=0.8)
        count = 0
        for t in range(0, 600_000, 1000):  # 10 minutes supra-threshold
            count += len(engine.evaluate_state(state(0.85, t)))
        assert count <= 600 // 60  # at most one per 60 s
        assert count == 10

    def test_no_realarm_before_60s_even_after_dip(self):
        engine = AlertEngine(fatigue_threshold=0.8)
        assert engine.evaluate_state(state(0.85, 0))
        assert engine.evaluate_state(state(0.5, 10_000)) == []
        assert engine.evaluate_state(state(0.9, 20_000)) == []  # re-arm not elapsed
        assert engine.evaluate_state(state(0.9, 61_000))

    def test_disconnect_expected_vs_unexpected(self):
        engine = AlertEngine(fatigue_threshold=0.8)
        assert engine.on_disconnect("ECG_CHEST", 0, expected=True) == []
        alerts = engine.on_disconnect("ECG_CHEST", 0, expected=False)
        assert alerts[0].kind == "DISCONNECT"

    def test_acknowledge(self):
        engine = AlertEngine(fatigue_threshold=0.8)
        alert = engine.evaluate_state(state(0.9, 0))[0]
        assert engine.acknowledge(alert.alert_id)
        assert alert.acknowledged
        assert not engine.acknowledge(999)


class TestOverrideCommand:
    def test_set_difficulty_range(self):
        OverrideCommand("SET_DIFFICULTY", 3, "op", 0).validate(paused=False)
        with pytest.raises(InvalidOverride):
            OverrideCommand("SET_DIFFICULTY", 14, "op", 0).validate(paused=False)
        with pytest.raises(InvalidOverride):
            OverrideCommand("SET_DIFFICULTY", "high", "op", 0).validate(paused=False)

    def test_pause_resume_alternate(self):
        OverrideCommand("PAUSE", None, "op", 0).validate(paused=False)
        with pytest.raises(InvalidOverride):
            OverrideCommand("PAUSE", None, "op", 0).validate(paused=True)
        OverrideCommand("RESUME", None, "op", 0).validate(paused=True)
        with pytest.raises(InvalidOverride):
            OverrideCommand("RESUME", None, "op", 0).validate(paused=False)

    def test_unknown_kind(self):
        with pytest.raises(InvalidOverride):
            OverrideCommand("REBOOT", None, "op", 0).validate(paused=False)


class TestPipelineOverrides:
    def make_pipeline(self, tmp_path=None):
        recorder = Recorder(tmp_path / "s") if tmp_path else None
        return Pipeline(TherapyPlan(start_difficulty=6), RuleConfig(), "t", recorder)

    def test_set_difficulty_injected(self):
        p = self.make_pipeline()
        p.decide_tick(1000)
        directive = p.on_override(OverrideCommand("SET_DIFFICULTY", 3, "op", 2000))
        assert directive.difficulty_target == 3
        assert directive.rationale == ("OVERRIDE:SET_DIFFICULTY",)
        assert p.loop.current.difficulty_target == 3

    def test_out_of_range_rejected(self):
        p = self.make_pipeline()
        with pytest.raises(InvalidOverride):
            p.on_override(OverrideCommand("SET_DIFFICULTY", 14, "op", 0))

    def test_pause_then_resume(self):
        p = self.make_pipeline()
        p.decide_tick(1000)
        d = p.on_override(OverrideCommand("PAUSE", None, "op", 2000))
        assert d.rest is True
        with pytest.raises(InvalidOverride):
            p.on_override(OverrideCommand("PAUSE", None, "op", 3000))
        d = p.on_override(OverrideCommand("RESUME", None, "op", 4000))
        assert d.rest is False

    def test_overrides_logged_with_operator(self, tmp_path):
        p = self.make_pipeline(tmp_path)
        p.decide_tick(1000)
        p.on_override(OverrideCommand("FORCE_REST", None, "dr-alice", 2000))
        p.recorder.close()
        lines = (tmp_path / "s" / "overrides.jsonl").read_text().strip().split("\n")
        assert json.loads(lines[0])["issued_by"] == "dr-alice"

    def test_log_completeness_directives(self, tmp_path):
        """Every directive the play side received appears in the log once."""
        from rehabloop.simkit.closed_loop import run_closed_loop

        session_dir = tmp_path / "sess"
        result = run_closed_loop(seed=2, duration_s=150, record_dir=session_dir)
        lines = (session_dir / "directives.jsonl").read_text().strip().split("\n")
        logged = [json.loads(x) for x in lines]
        emitted = [d.to_payload() for d in result.directives]
        assert logged == emitted


class TestSessionRecord:
    def test_summary_counts(self, tmp_path):
        recorder = Recorder(tmp_path / "s1")
        for i in range(5):
            recorder.record("states", {"i": i}, t=i)
        recorder.record("alerts", {"kind": "DISCONNECT"}, t=9)
        recorder.close()
        record = SessionRecord("s1", started_at=0, path=tmp_path / "s1")
        summary = record.summary()
        assert summary["event_counts"]["states"] == 5
        assert summary["event_counts"]["alerts"] == 1
        assert summary["event_counts"]["reports"] == 0
