"""Deterministic session pipeline: ingest -> fusion -> decision -> alerts.

Pure of any IO or wall clock: every entry point takes explicit hub
timestamps, so the live hub, the headless simulator, and log replay all
drive the identical code path. Given the same timestamped input events the
pipeline produces the same frames, states, directives, and alerts.
"""
from __future__ import annotations

from typing import Any, Callable, Optional

from .cam import DecisionLoop, Directive, RuleConfig, TherapyPlan, UserState, infer_state
from .errors import NoActiveSession, NoUsableData, StorageFull
from .fusion import FeatureExtractor, FrameAssembler, FusedFrame
from .iam import AlertEngine, OverrideCommand, Recorder
from .ingest import Baseline, SensorSession
from .wire import DeviceType, Envelope

EventCallback = Callable[[str, Any], None]

DECIDE_INTERVAL_MS = 1000


class Pipeline:
    """One live therapy session: all sensor streams funnel in, directives
    come out. Single logical owner of all mutable state."""

    def __init__(
        self,
        plan: TherapyPlan,
        rules: RuleConfig,
        session_id: str = "session",
        recorder: Optional[Recorder] = None,
        start_ms: int = 0,
    ):
        self.session_id = session_id
        self.plan = plan
        self.rules = rules
        self.recorder = recorder
        self.start_ms = start_ms
        self.active = True

        self.sessions = {
            DeviceType.ECG_CHEST: SensorSession(DeviceType.ECG_CHEST, start_ms, 1.0),
            DeviceType.PPG_WRIST: SensorSession(DeviceType.PPG_WRIST, start_ms, 1.0),
            DeviceType.MOCAP: SensorSession(DeviceType.MOCAP, start_ms, 5.0),
        }
        self.assembler = FrameAssembler()
        self.extractor = FeatureExtractor()
        self.loop = DecisionLoop(plan, rules, start_ms)
        self.alerts = AlertEngine(plan.fatigue_threshold)

        self.last_state: Optional[UserState] = None
        self.last_frame: Optional[FusedFrame] = None
        self.directives: list[Directive] = []
        self.latency_samples_ms: list[int] = []
        self._pending_receipts: list[int] = []
        self._subscribers: list[EventCallback] = []

        for session in self.sessions.values():
            session.on_sample = self.assembler.on_sample
            session.log = self._raw_logger()

    def subscribe(self, callback: EventCallback) -> None:
        self._subscribers.append(callback)

    def _publish(self, kind: str, obj: Any) -> None:
        for cb in self._subscribers:
            cb(kind, obj)

    def _raw_logger(self) -> Optional[Callable[[dict], None]]:
        if self.recorder is None:
            return None

        def log(record: dict) -> None:
            self._record("raw", record, record.get("hub_ts"))

        return log

    def _record(self, stream: str, obj: dict, t: Optional[int]) -> None:
        if self.recorder is None or self.recorder.failed:
            return
        try:
            self.recorder.record(stream, obj, t)
        except StorageFull as e:
            for alert in self.alerts.on_storage_full(t or 0, str(e)):
                self._publish("alert", alert)

    # -- inputs ---------------------------------------------------------------

    def on_envelope(self, device: DeviceType, envelope: Envelope, hub_ts: int) -> None:
        """Sensor data path; WrongStream propagates (a wiring bug)."""
        session = self.sessions[device]
        accepted = session.accept_packet(envelope, hub_ts)
        if accepted:
            self._pending_receipts.append(hub_ts)

    def inject_sample(self, sample: Any) -> None:
        """Replay path: feed an already-normalized sample (from raw.jsonl)
        straight past packet validation into baseline + fusion."""
        from .ingest import AffectSample, EcgSample, PpgSample

        device = {
            EcgSample: DeviceType.ECG_CHEST,
            PpgSample: DeviceType.PPG_WRIST,
            AffectSample: DeviceType.MOCAP,
        }[type(sample)]
        session = self.sessions[device]
        session.ring.append(sample)
        session.update_baseline(sample, sample.hub_ts)
        self.assembler.on_sample(sample)
        self._pending_receipts.append(sample.hub_ts)

    def on_report(self, payload: dict, hub_ts: int) -> None:
        self.loop.on_report(payload)
        self._record("reports", payload, hub_ts)
        self._publish("report", payload)

    def on_override(self, cmd: OverrideCommand) -> Directive:
        """Inject an operator override; returns the synthesized directive."""
        if not self.active:
            raise NoActiveSession("session is not active")
        cmd.validate(paused=self.loop.paused)
        fatigue = self.last_state.fatigue if self.last_state is not None else None
        directive = self.loop.on_override(cmd.kind, cmd.value, cmd.t, fatigue)
        self._record("overrides", cmd.to_record(), cmd.t)
        self._emit_directive(directive)
        return directive

    def on_disconnect(self, device: str, t: int, expected: bool) -> None:
        for alert in self.alerts.on_disconnect(device, t, expected):
            self._record("alerts", alert.to_record(), t)
            self._publish("alert", alert)

    # -- clock ticks ----------------------------------------------------------

    def frame_tick(self, t: int) -> FusedFrame:
        """10 Hz: align streams into one fused frame."""
        frame = self.assembler.align(t)
        self.extractor.push(frame)
        self.last_frame = frame
        for hub_ts in self._pending_receipts:
            self.latency_samples_ms.append(max(0, t - hub_ts))
        self._pending_receipts.clear()
        self._record("fused", frame.to_record(), t)
        self._publish("frame", frame)
        return frame

    def baseline(self) -> Baseline:
        ecg = self.sessions[DeviceType.ECG_CHEST].baseline
        if ecg.resting_bpm > 0:
            return ecg
        return self.sessions[DeviceType.PPG_WRIST].baseline

    def decide_tick(self, t: int) -> tuple[UserState, Optional[Directive]]:
        """1 Hz: infer user state, evaluate alerts, run the rule engine."""
        try:
            features = self.extractor.extract()
            state = infer_state(
                features,
                self.baseline(),
                self.loop.recent_success_rate(),
                self.loop.current.difficulty_target,
                self.rules,
                self.last_state,
                t,
            )
        except NoUsableData:
            if self.last_state is None:
                state = UserState(0.0, 0.0, 0.0, 0.0, t)
            else:
                state = UserState(
                    self.last_state.workload,
                    self.last_state.engagement,
                    self.last_state.fatigue,
                    0.0,
                    t,
                )
        self.last_state = state
        self._record("states", state.to_record(), t)
        self._publish("state", state)

        for alert in self.alerts.evaluate_state(state):
            self._record("alerts", alert.to_record(), t)
            self._publish("alert", alert)

        directive = self.loop.tick(state, t)
        if directive is not None:
            self._emit_directive(directive)
        return state, directive

    def _emit_directive(self, directive: Directive) -> None:
        self.directives.append(directive)
        self._record("directives", directive.to_payload(), directive.issued_at)
        self._publish("directive", directive)

    def close(self, t: int) -> None:
        self.active = False
        if self.recorder is not None:
            self.recorder.close()
