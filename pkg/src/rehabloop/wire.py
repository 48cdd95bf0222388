"""Message codecs, framing, and the connection handshake state machine.

Every link speaks the same envelope format: one UTF-8 JSON object per TCP
line (newline framing) or per UDP datagram. Codec functions are pure; each
ConnState is owned by exactly one connection handler.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

from .errors import MalformedJson, ProtocolViolation, SchemaViolation, UnknownType

PROTOCOL_VERSION = 1

# Decoder refuses anything larger to bound allocation on hostile input.
MAX_MESSAGE_BYTES = 64 * 1024

HEARTBEAT_INTERVAL_MS = 1_000
HEARTBEAT_TIMEOUT_MS = 5_000


class MsgType(str, Enum):
    HELLO = "HELLO"
    ACK = "ACK"
    ECG = "ECG"
    PPG = "PPG"
    SKEL_AFFECT = "SKEL_AFFECT"
    GYRO = "GYRO"  # reserved, not consumed anywhere yet
    DIRECTIVE = "DIRECTIVE"
    PERF_REPORT = "PERF_REPORT"
    OVERRIDE = "OVERRIDE"
    ALERT = "ALERT"
    HEARTBEAT = "HEARTBEAT"
    BYE = "BYE"


class DeviceType(str, Enum):
    ECG_CHEST = "ECG_CHEST"
    PPG_WRIST = "PPG_WRIST"
    MOCAP = "MOCAP"
    GAME = "GAME"
    DASHBOARD = "DASHBOARD"


# Which data msg_types a device stream is allowed to carry.
DEVICE_STREAMS = {
    DeviceType.ECG_CHEST: {MsgType.ECG},
    DeviceType.PPG_WRIST: {MsgType.PPG, MsgType.GYRO},
    DeviceType.MOCAP: {MsgType.SKEL_AFFECT},
    DeviceType.GAME: {MsgType.PERF_REPORT},
    DeviceType.DASHBOARD: {MsgType.OVERRIDE},
}

DATA_TYPES = {
    MsgType.ECG,
    MsgType.PPG,
    MsgType.SKEL_AFFECT,
    MsgType.GYRO,
    MsgType.DIRECTIVE,
    MsgType.PERF_REPORT,
    MsgType.OVERRIDE,
    MsgType.ALERT,
}


@dataclass(frozen=True)
class Envelope:
    msg_type: MsgType
    seq: int
    sent_at: int  # ms since Unix epoch (device clock)
    payload: dict[str, Any] = field(default_factory=dict)


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_vec(v: Any, n: int) -> bool:
    return isinstance(v, list) and len(v) == n and all(_is_num(x) for x in v)


def _validate_hello(p: dict, err) -> None:
    if p.get("device_type") not in DeviceType._value2member_map_:
        err("device_type", "unknown device type")
    if not _is_int(p.get("protocol_version")) or p["protocol_version"] < 1:
        err("protocol_version", "must be an integer >= 1")
    caps = p.get("capabilities")
    if not isinstance(caps, list) or not caps or not all(isinstance(c, str) for c in caps):
        err("capabilities", "must be a non-empty list of stream names")


def _validate_ecg(p: dict, err) -> None:
    if not _is_int(p.get("bpm")) or p["bpm"] < 0:
        err("bpm", "must be an integer >= 0")
    rr = p.get("rr_raw")
    if not isinstance(rr, list) or not all(_is_int(x) and x > 0 for x in rr):
        err("rr_raw", "must be a list of positive integers (1/1024 s units)")


def _validate_ppg(p: dict, err) -> None:
    if not _is_num(p.get("bpm")) or p["bpm"] < 0:
        err("bpm", "must be a number >= 0")
    if not _check_vec(p.get("accel"), 3):
        err("accel", "must be [x, y, z] in Gs")
    conf = p.get("confidence")
    if not _is_num(conf) or not (0 <= conf <= 100):
        err("confidence", "must be a number in [0, 100]")


def _validate_skel_affect(p: dict, err) -> None:
    joints = p.get("joints")
    if joints is not None:
        if not isinstance(joints, list) or not all(_check_vec(j, 3) for j in joints):
            err("joints", "must be a list of [x, y, z] triples")
    if not isinstance(p.get("face_detected"), bool):
        err("face_detected", "must be a boolean")
    if p["face_detected"]:
        if not _check_vec(p.get("emotion7"), 7):
            err("emotion7", "must be 7 probabilities when a face is detected")


def _validate_directive(p: dict, err) -> None:
    # Structural check only; the reasoning/execution boundary check lives in cam.
    if not isinstance(p.get("task_category"), str):
        err("task_category", "must be a string")
    if not _is_int(p.get("difficulty_target")) or not (1 <= p["difficulty_target"] <= 10):
        err("difficulty_target", "must be an integer in [1, 10]")
    if not _is_int(p.get("repetitions")) or p["repetitions"] < 1:
        err("repetitions", "must be a positive integer")
    if not _is_num(p.get("duration_s")) or p["duration_s"] <= 0:
        err("duration_s", "must be a positive number of seconds")
    if p.get("pacing") not in ("slow", "normal", "fast"):
        err("pacing", "must be slow|normal|fast")
    if not isinstance(p.get("rest"), bool):
        err("rest", "must be a boolean")
    if p.get("feedback_intensity") not in ("low", "medium", "high"):
        err("feedback_intensity", "must be low|medium|high")
    rationale = p.get("rationale")
    if not isinstance(rationale, list) or not all(isinstance(r, str) for r in rationale):
        err("rationale", "must be a list of rule identifiers")
    if not _is_int(p.get("issued_at")) or p["issued_at"] < 0:
        err("issued_at", "must be a non-negative integer (ms)")


def _validate_perf_report(p: dict, err) -> None:
    if not isinstance(p.get("exercise_id"), str):
        err("exercise_id", "must be a string")
    if not isinstance(p.get("category"), str):
        err("category", "must be a string")
    sr = p.get("success_rate")
    if not _is_num(sr) or not (0.0 <= sr <= 1.0):
        err("success_rate", "must be a number in [0, 1]")
    ct = p.get("completion_time_s")
    if not _is_num(ct) or ct < 0:
        err("completion_time_s", "must be a number >= 0")
    if not _is_int(p.get("errors")) or p["errors"] < 0:
        err("errors", "must be an integer >= 0")
    if not _is_int(p.get("reps_done")) or p["reps_done"] < 0:
        err("reps_done", "must be an integer >= 0")
    if not _is_int(p.get("ended_at")) or p["ended_at"] < 0:
        err("ended_at", "must be a non-negative integer (ms)")


def _validate_override(p: dict, err) -> None:
    if p.get("kind") not in ("SET_DIFFICULTY", "FORCE_REST", "SWITCH_CATEGORY", "PAUSE", "RESUME"):
        err("kind", "unknown override kind")
    if not isinstance(p.get("issued_by"), str):
        err("issued_by", "must be an operator id string")


def _validate_alert(p: dict, err) -> None:
    if p.get("kind") not in ("FATIGUE_THRESHOLD", "DISCONNECT", "DATA_QUALITY"):
        err("kind", "unknown alert kind")
    if p.get("severity") not in ("info", "warning", "critical"):
        err("severity", "must be info|warning|critical")
    if not isinstance(p.get("detail"), str):
        err("detail", "must be a string")


def _validate_empty(p: dict, err) -> None:
    return None


_VALIDATORS = {
    MsgType.HELLO: _validate_hello,
    MsgType.ACK: _validate_empty,
    MsgType.ECG: _validate_ecg,
    MsgType.PPG: _validate_ppg,
    MsgType.SKEL_AFFECT: _validate_skel_affect,
    MsgType.GYRO: _validate_empty,  # reserved: any payload accepted, never consumed
    MsgType.DIRECTIVE: _validate_directive,
    MsgType.PERF_REPORT: _validate_perf_report,
    MsgType.OVERRIDE: _validate_override,
    MsgType.ALERT: _validate_alert,
    MsgType.HEARTBEAT: _validate_empty,
    MsgType.BYE: _validate_empty,
}


def validate_payload(msg_type: MsgType, payload: dict[str, Any]) -> None:
    """Raise SchemaViolation naming the offending field; unknown fields pass."""
    if not isinstance(payload, dict):
        raise SchemaViolation("payload", "must be a JSON object")

    def err(f: str, reason: str) -> None:
        raise SchemaViolation(f, reason)

    _VALIDATORS[msg_type](payload, err)


def encode(msg: Envelope) -> bytes:
    """One UTF-8 JSON text terminated by a newline; also usable as a datagram body."""
    obj = {
        "msg_type": msg.msg_type.value,
        "seq": msg.seq,
        "sent_at": msg.sent_at,
        "payload": msg.payload,
    }
    return (json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def decode(data: bytes) -> Envelope:
    """Parse one envelope; raises MalformedJson / UnknownType / SchemaViolation."""
    if len(data) > MAX_MESSAGE_BYTES:
        raise MalformedJson(f"message exceeds {MAX_MESSAGE_BYTES} bytes")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedJson(f"not UTF-8: {e}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedJson(str(e)) from None
    if not isinstance(obj, dict):
        raise MalformedJson("top level must be a JSON object")

    raw_type = obj.get("msg_type")
    if not isinstance(raw_type, str) or raw_type not in MsgType._value2member_map_:
        raise UnknownType(f"msg_type {raw_type!r}")
    msg_type = MsgType(raw_type)

    seq = obj.get("seq")
    if not _is_int(seq) or seq < 0:
        raise SchemaViolation("seq", "must be a non-negative integer")
    sent_at = obj.get("sent_at")
    if not _is_int(sent_at) or sent_at < 0:
        raise SchemaViolation("sent_at", "must be a non-negative integer (ms)")
    payload = obj.get("payload", {})
    validate_payload(msg_type, payload)
    return Envelope(msg_type=msg_type, seq=seq, sent_at=sent_at, payload=payload)


class Phase(str, Enum):
    AWAIT_HELLO = "AWAIT_HELLO"
    ACTIVE = "ACTIVE"
    CLOSED = "CLOSED"


@dataclass(frozen=True)
class HelloMsg:
    device_type: DeviceType
    protocol_version: int
    capabilities: frozenset[str]

    @classmethod
    def from_payload(cls, p: dict[str, Any]) -> "HelloMsg":
        return cls(
            device_type=DeviceType(p["device_type"]),
            protocol_version=p["protocol_version"],
            capabilities=frozenset(p["capabilities"]),
        )


@dataclass(frozen=True)
class ConnState:
    phase: Phase = Phase.AWAIT_HELLO
    last_heartbeat: int = 0  # hub ms of last life sign
    peer: Optional[HelloMsg] = None
    last_seq: int = -1
    seq_gaps: int = 0  # gap count, detection only; no retransmission


def handshake_step(
    state: ConnState, msg: Envelope, now_ms: int
) -> tuple[ConnState, Optional[Envelope]]:
    """Advance one connection state machine step.

    Accepts exactly the language HELLO (data|HEARTBEAT)* BYE. Returns the new
    state and an optional reply to send. Raises ProtocolViolation on data
    before HELLO, duplicate HELLO, version mismatch, or traffic after CLOSED.
    """
    if state.phase is Phase.CLOSED:
        raise ProtocolViolation("connection is closed")

    if state.phase is Phase.AWAIT_HELLO:
        if msg.msg_type is not MsgType.HELLO:
            raise ProtocolViolation(f"{msg.msg_type.value} before HELLO")
        hello = HelloMsg.from_payload(msg.payload)
        if hello.protocol_version != PROTOCOL_VERSION:
            raise ProtocolViolation(
                f"protocol version {hello.protocol_version} != {PROTOCOL_VERSION}"
            )
        ack = Envelope(MsgType.ACK, seq=0, sent_at=now_ms, payload={})
        return (
            ConnState(Phase.ACTIVE, last_heartbeat=now_ms, peer=hello, last_seq=msg.seq),
            ack,
        )

    # ACTIVE
    if msg.msg_type is MsgType.HELLO:
        raise ProtocolViolation("duplicate HELLO")
    if msg.msg_type is MsgType.BYE:
        return replace(state, phase=Phase.CLOSED, last_heartbeat=now_ms), None

    gaps = state.seq_gaps
    if state.last_seq >= 0 and msg.seq > state.last_seq + 1:
        gaps += 1
    next_state = replace(state, last_heartbeat=now_ms, last_seq=msg.seq, seq_gaps=gaps)
    if msg.msg_type is MsgType.HEARTBEAT:
        return next_state, None
    if msg.msg_type not in DATA_TYPES:
        raise ProtocolViolation(f"{msg.msg_type.value} not valid on an active connection")
    return next_state, None


def check_heartbeat(state: ConnState, now_ms: int, timeout_ms: int = HEARTBEAT_TIMEOUT_MS) -> ConnState:
    """Close the connection after heartbeat silence beyond the timeout."""
    if state.phase is Phase.ACTIVE and now_ms - state.last_heartbeat > timeout_ms:
        return replace(state, phase=Phase.CLOSED)
    return state
