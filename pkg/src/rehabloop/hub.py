"""Live middleware hub: TCP/UDP listeners, frame/decision clocks, API server.

One hub runs one live therapy session. Sensor connections feed the pipeline;
game connections receive directives and send back performance reports; the
dashboard observes over HTTP/WS. All state mutation happens on the event
loop, so handlers never contend.
"""
from __future__ import annotations

import asyncio
import json
import logging
import time
from pathlib import Path
from typing import Optional

from .api import Broadcaster, create_app
from .cam import Directive, RuleConfig, TherapyPlan
from .config import HubConfig
from .errors import MalformedJson, ProtocolViolation, SchemaViolation, UnknownType, WrongStream
from .iam import Recorder, SessionRecord
from .ipm import load_catalog
from .pipeline import Pipeline
from .wire import (
    ConnState,
    DeviceType,
    Envelope,
    HEARTBEAT_TIMEOUT_MS,
    MsgType,
    Phase,
    check_heartbeat,
    decode,
    encode,
    handshake_step,
)

log = logging.getLogger("rehabloop.hub")

FRAME_INTERVAL_S = 0.1
DECIDE_INTERVAL_S = 1.0

SENSOR_DEVICES = {DeviceType.ECG_CHEST, DeviceType.PPG_WRIST, DeviceType.MOCAP}


class Hub:
    def __init__(
        self,
        config: Optional[HubConfig] = None,
        session_id: Optional[str] = None,
        static_dir: Optional[Path] = None,
    ):
        self.config = config or HubConfig()
        self._static_dir = static_dir
        self.session_id = session_id or time.strftime("%Y%m%d-%H%M%S")
        self.sessions_root = Path(self.config.sessions_root)
        self.session_dir = self.sessions_root / self.session_id

        plan = TherapyPlan()
        if self.config.plan_path and Path(self.config.plan_path).exists():
            plan = TherapyPlan.from_json(json.loads(Path(self.config.plan_path).read_text()))
        rules = RuleConfig()
        if self.config.rules_path and Path(self.config.rules_path).exists():
            rules = RuleConfig.load(self.config.rules_path)
        self._rules_mtime = self._rules_stat()
        if self.config.catalog_path is not None:
            # fail fast on a broken catalog rather than at game attach time
            load_catalog(self.config.catalog_path)

        self._t0 = time.monotonic()
        recorder = Recorder(self.session_dir)
        self.pipeline = Pipeline(plan, rules, self.session_id, recorder, start_ms=0)
        self.record = SessionRecord(
            session_id=self.session_id,
            started_at=int(time.time() * 1000),
            path=self.session_dir,
            plan_snapshot=plan.to_json(),
        )
        (self.session_dir / "plan.json").write_text(json.dumps(plan.to_json(), indent=2))
        (self.session_dir / "rules.json").write_text(json.dumps(rules.to_json(), indent=2))

        self.broadcaster = Broadcaster()
        self.pipeline.subscribe(self.broadcaster.publish)
        self.pipeline.subscribe(self._on_event)

        self.static_dir: Optional[Path] = self._static_dir
        self._game_writers: list[asyncio.StreamWriter] = []
        self._servers: list[asyncio.AbstractServer] = []
        self._tasks: list[asyncio.Task] = []
        self._udp_transport = None
        self._stopping = False
        self.app = create_app(self)

    # -- small surface used by the API ---------------------------------------

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def list_sessions(self) -> list[dict]:
        out = []
        if self.sessions_root.is_dir():
            for d in sorted(p for p in self.sessions_root.iterdir() if p.is_dir()):
                out.append({"session_id": d.name, "live": d.name == self.session_id})
        return out

    def session_summary(self, session_id: str) -> Optional[dict]:
        path = self.sessions_root / session_id
        if not path.is_dir():
            return None
        if session_id == self.session_id:
            return self.record.summary()
        return SessionRecord(session_id=session_id, started_at=0, path=path).summary()

    def update_plan(self, body: dict) -> TherapyPlan:
        merged = self.pipeline.plan.to_json()
        merged.update(body)
        plan = TherapyPlan.from_json(merged)
        self.pipeline.plan = plan
        self.pipeline.loop.plan = plan
        self.pipeline.loop.ctx.plan = plan
        self.pipeline.alerts.fatigue_threshold = plan.fatigue_threshold
        return plan

    def notify_game(self, directive: Directive) -> None:
        """Push one directive to every connected game client."""
        data = encode(
            Envelope(MsgType.DIRECTIVE, seq=len(self.pipeline.directives),
                     sent_at=self.now_ms(), payload=directive.to_payload())
        )
        for writer in list(self._game_writers):
            try:
                writer.write(data)
            except ConnectionError:
                self._drop_game_writer(writer)

    def _drop_game_writer(self, writer: asyncio.StreamWriter) -> None:
        if writer in self._game_writers:
            self._game_writers.remove(writer)

    def _on_event(self, kind: str, obj) -> None:
        if kind == "directive":
            self.notify_game(obj)

    # -- lifecycle ------------------------------------------------------------

    async def start(self) -> None:
        ports = self.config.ports
        host = self.config.host
        for kind in ("ecg", "ppg", "game"):
            server = await asyncio.start_server(
                self._tcp_handler, host, ports[kind], limit=64 * 1024 + 2
            )
            self._servers.append(server)
        loop = asyncio.get_running_loop()
        self._udp_transport, _ = await loop.create_datagram_endpoint(
            lambda: _UdpAffect(self), local_addr=(host, ports["affect"])
        )
        self._tasks.append(asyncio.create_task(self._frame_loop()))
        self._tasks.append(asyncio.create_task(self._decide_loop()))

    async def stop(self) -> None:
        self._stopping = True
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except asyncio.CancelledError:
                pass
        for server in self._servers:
            server.close()
            await server.wait_closed()
        if self._udp_transport is not None:
            self._udp_transport.close()
        for writer in list(self._game_writers):
            writer.close()
        self.record.ended_at = int(time.time() * 1000)
        self.pipeline.close(self.now_ms())

    def bound_ports(self) -> dict[str, int]:
        """Actual listener ports (useful when configured with port 0)."""
        out = {}
        for kind, server in zip(("ecg", "ppg", "game"), self._servers):
            out[kind] = server.sockets[0].getsockname()[1]
        if self._udp_transport is not None:
            out["affect"] = self._udp_transport.get_extra_info("sockname")[1]
        return out

    # -- clocks ---------------------------------------------------------------

    async def _frame_loop(self) -> None:
        next_t = self.now_ms()
        while True:
            next_t += 100
            delay = (next_t - self.now_ms()) / 1000.0
            if delay > 0:
                await asyncio.sleep(delay)
            self.pipeline.frame_tick(self.now_ms())

    async def _decide_loop(self) -> None:
        next_t = self.now_ms()
        while True:
            next_t += 1000
            delay = (next_t - self.now_ms()) / 1000.0
            if delay > 0:
                await asyncio.sleep(delay)
            self._maybe_reload_rules()
            self.pipeline.decide_tick(self.now_ms())

    def _rules_stat(self) -> Optional[float]:
        if self.config.rules_path and Path(self.config.rules_path).exists():
            return Path(self.config.rules_path).stat().st_mtime
        return None

    def _maybe_reload_rules(self) -> None:
        mtime = self._rules_stat()
        if mtime is not None and mtime != self._rules_mtime:
            self._rules_mtime = mtime
            try:
                rules = RuleConfig.load(self.config.rules_path)
            except (ValueError, TypeError, json.JSONDecodeError) as e:
                log.warning("rules reload failed: %s", e)
                return
            self.pipeline.rules = rules
            self.pipeline.loop.rules = rules
            log.info("rule config reloaded")

    # -- connections ----------------------------------------------------------

    async def _tcp_handler(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        state = ConnState()
        peer = writer.get_extra_info("peername")
        device: Optional[DeviceType] = None
        try:
            while True:
                try:
                    line = await asyncio.wait_for(reader.readline(), timeout=HEARTBEAT_TIMEOUT_MS / 1000)
                except asyncio.TimeoutError:
                    state = check_heartbeat(state, self.now_ms())
                    if state.phase is Phase.CLOSED:
                        if device is not None:
                            self.pipeline.on_disconnect(device.value, self.now_ms(), expected=False)
                        break
                    continue
                if not line:
                    if state.phase is Phase.ACTIVE and device is not None:
                        self.pipeline.on_disconnect(device.value, self.now_ms(), expected=False)
                    break
                try:
                    envelope = decode(line.rstrip(b"\n"))
                except (MalformedJson, UnknownType, SchemaViolation) as e:
                    log.warning("bad packet from %s: %s", peer, e)
                    continue
                try:
                    state, reply = handshake_step(state, envelope, self.now_ms())
                except ProtocolViolation as e:
                    log.warning("protocol violation from %s: %s", peer, e)
                    break
                if reply is not None:
                    writer.write(encode(reply))
                    await writer.drain()
                if state.peer is not None and device is None:
                    device = state.peer.device_type
                    if device is DeviceType.GAME:
                        self._game_writers.append(writer)
                        self.notify_game(self.pipeline.loop.current)
                if state.phase is Phase.CLOSED:  # clean BYE
                    break
                self._dispatch(device, envelope)
        except (ConnectionError, asyncio.IncompleteReadError):
            if state.phase is Phase.ACTIVE and device is not None:
                self.pipeline.on_disconnect(device.value, self.now_ms(), expected=False)
        finally:
            self._drop_game_writer(writer)
            writer.close()

    def _dispatch(self, device: Optional[DeviceType], envelope: Envelope) -> None:
        if device is None or envelope.msg_type in (MsgType.HELLO, MsgType.HEARTBEAT, MsgType.BYE):
            return
        if device in SENSOR_DEVICES:
            try:
                self.pipeline.on_envelope(device, envelope, self.now_ms())
            except WrongStream as e:
                log.warning("wrong stream: %s", e)
        elif device is DeviceType.GAME and envelope.msg_type is MsgType.PERF_REPORT:
            self.pipeline.on_report(envelope.payload, self.now_ms())


class _UdpAffect(asyncio.DatagramProtocol):
    """SKEL_AFFECT datagrams: stateless, one envelope per datagram."""

    def __init__(self, hub: Hub):
        self.hub = hub

    def datagram_received(self, data: bytes, addr) -> None:
        try:
            envelope = decode(data)
        except (MalformedJson, UnknownType, SchemaViolation) as e:
            log.warning("bad datagram from %s: %s", addr, e)
            return
        if envelope.msg_type is MsgType.SKEL_AFFECT:
            try:
                self.hub.pipeline.on_envelope(DeviceType.MOCAP, envelope, self.hub.now_ms())
            except WrongStream:
                pass
