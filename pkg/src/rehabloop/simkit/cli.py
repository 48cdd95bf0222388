"""simkit command line: scripted device emulation against a running hub,
a reference game client, and session replay.

  simkit run --scenario <name|file> --seed <n> --host <addr> [--speed xN]
  simkit replay <session_dir> [--speed xN] [--host <addr>]
  simkit player --skill <s> --seed <n> [--host <addr>]
"""
from __future__ import annotations

import argparse
import asyncio
import json
import socket
import sys
import time
from pathlib import Path

from ..config import HubConfig
from ..errors import CorruptLog
from ..wire import DeviceType, Envelope, MsgType, decode, encode
from .closed_loop import GameRunner
from .player import SimPlayer
from .replay import load_jsonl, replay_session
from .scenarios import SCENARIOS, Phase, ScenarioScript, generate_stream


def parse_speed(text: str) -> float:
    text = text.lower().lstrip("x")
    speed = float(text)
    if speed <= 0:
        raise argparse.ArgumentTypeError("speed must be positive")
    return speed


def load_scenario(name_or_file: str) -> ScenarioScript:
    if name_or_file in SCENARIOS:
        return SCENARIOS[name_or_file]
    path = Path(name_or_file)
    if not path.exists():
        raise SystemExit(
            f"unknown scenario {name_or_file!r}; bundled: {', '.join(sorted(SCENARIOS))}"
        )
    data = json.loads(path.read_text())
    phases = tuple(Phase(**p) for p in data["phases"])
    return ScenarioScript(name=data.get("name", path.stem), phases=phases, seed=data.get("seed", 0))


def _hello(device: DeviceType, capabilities: list[str]) -> Envelope:
    return Envelope(
        MsgType.HELLO,
        seq=0,
        sent_at=int(time.time() * 1000),
        payload={
            "device_type": device.value,
            "protocol_version": 1,
            "capabilities": capabilities,
        },
    )


async def _open_sensor(host: str, port: int, device: DeviceType, caps: list[str]):
    reader, writer = await asyncio.open_connection(host, port)
    writer.write(encode(_hello(device, caps)))
    await writer.drain()
    ack = await reader.readline()  # hub replies ACK
    decode(ack.rstrip(b"\n"))
    return reader, writer


async def _run_scenario(args) -> int:
    scenario = load_scenario(args.scenario)
    config = HubConfig.load()
    ports = dict(config.ports)
    if args.port_ecg:
        ports["ecg"] = args.port_ecg
    if args.port_ppg:
        ports["ppg"] = args.port_ppg
    if args.port_affect:
        ports["affect"] = args.port_affect

    _, ecg_w = await _open_sensor(args.host, ports["ecg"], DeviceType.ECG_CHEST, ["bpm", "rr"])
    _, ppg_w = await _open_sensor(
        args.host, ports["ppg"], DeviceType.PPG_WRIST, ["bpm", "accel", "confidence"]
    )
    udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    start = time.monotonic()
    sent = 0
    hb_seq = 0
    next_hb = 1.0
    for timed in generate_stream(scenario, args.seed):
        due = timed.t_ms / 1000.0 / args.speed
        now = time.monotonic() - start
        if due > now:
            await asyncio.sleep(due - now)
        if timed.port == "ecg":
            ecg_w.write(encode(timed.envelope))
        elif timed.port == "ppg":
            ppg_w.write(encode(timed.envelope))
        else:
            udp.sendto(encode(timed.envelope), (args.host, ports["affect"]))
        sent += 1
        elapsed = time.monotonic() - start
        if elapsed >= next_hb:
            next_hb = elapsed + 1.0
            hb_seq += 1
            hb = Envelope(MsgType.HEARTBEAT, seq=10_000_000 + hb_seq,
                          sent_at=int(time.time() * 1000), payload={})
            ecg_w.write(encode(hb))
            ppg_w.write(encode(hb))
    for w in (ecg_w, ppg_w):
        w.write(encode(Envelope(MsgType.BYE, seq=99_999_999, sent_at=int(time.time() * 1000), payload={})))
        await w.drain()
        w.close()
    print(f"scenario {scenario.name!r}: sent {sent} envelopes at x{args.speed:g}")
    return 0


async def _run_player(args) -> int:
    config = HubConfig.load()
    port = args.port_game or config.ports["game"]
    reader, writer = await asyncio.open_connection(args.host, port)
    writer.write(encode(_hello(DeviceType.GAME, ["directive", "perf_report"])))
    await writer.drain()
    decode((await reader.readline()).rstrip(b"\n"))

    from ..ipm import load_catalog

    player = SimPlayer(skill=args.skill, seed=args.seed)
    runner = GameRunner(player, catalog=load_catalog(args.catalog), start_ms=0)
    start = time.monotonic()
    seq = 0
    next_heartbeat = start + 1.0

    def now_ms() -> int:
        return int((time.monotonic() - start) * 1000 * args.speed)

    deadline = start + (args.duration / args.speed if args.duration else float("inf"))
    print(f"player skill={args.skill:g} seed={args.seed} attached on port {port}")
    while time.monotonic() < deadline:
        if time.monotonic() >= next_heartbeat:
            next_heartbeat += 1.0
            seq += 1
            writer.write(
                encode(Envelope(MsgType.HEARTBEAT, seq=seq, sent_at=int(time.time() * 1000), payload={}))
            )
            await writer.drain()
        try:
            line = await asyncio.wait_for(reader.readline(), timeout=0.1 / args.speed)
            if not line:
                break
            envelope = decode(line.rstrip(b"\n"))
            if envelope.msg_type is MsgType.DIRECTIVE:
                from ..cam import Directive

                runner.on_directive(Directive.from_payload(envelope.payload), now_ms())
        except asyncio.TimeoutError:
            pass
        for report in runner.tick(now_ms()):
            seq += 1
            writer.write(encode(report.to_envelope(seq, int(time.time() * 1000))))
            await writer.drain()
            print(
                f"  report: {report.exercise_id} success={report.success_rate:.2f} "
                f"fatigue={player.fatigue:.2f}"
            )
    writer.write(encode(Envelope(MsgType.BYE, seq=seq + 1, sent_at=int(time.time() * 1000), payload={})))
    await writer.drain()
    writer.close()
    return 0


def _run_replay(args) -> int:
    session_dir = Path(args.session_dir)
    if not session_dir.is_dir():
        print(f"no such session directory: {session_dir}", file=sys.stderr)
        return 2
    try:
        raw = load_jsonl(session_dir / "raw.jsonl")
        if not raw and not load_jsonl(session_dir / "reports.jsonl"):
            print("empty session log: nothing to replay")
            return 0
        result = replay_session(session_dir)
    except CorruptLog as e:
        print(f"corrupt log: {e}", file=sys.stderr)
        return 3
    print(f"recorded directives: hash {result.recorded_hash}")
    print(f"replayed directives: hash {result.replayed_hash} (x{args.speed:g} logical)")
    if result.matches:
        print("MATCH: replay reproduced the directive sequence")
        return 0
    print("MISMATCH: replay diverged from the recorded sequence", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="stream a scenario to the hub")
    run.add_argument("--scenario", required=True, help="bundled name or script file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument("--speed", type=parse_speed, default=1.0, help="xN pace multiplier")
    run.add_argument("--port-ecg", type=int, default=None)
    run.add_argument("--port-ppg", type=int, default=None)
    run.add_argument("--port-affect", type=int, default=None)

    replay = sub.add_parser("replay", help="verify a recorded session deterministically")
    replay.add_argument("session_dir")
    replay.add_argument("--speed", type=parse_speed, default=10.0)

    player = sub.add_parser("player", help="reference game client")
    player.add_argument("--skill", type=float, required=True)
    player.add_argument("--seed", type=int, default=0)
    player.add_argument("--host", default="127.0.0.1")
    player.add_argument("--speed", type=parse_speed, default=1.0)
    player.add_argument("--duration", type=float, default=None, help="seconds of play")
    player.add_argument("--port-game", type=int, default=None)
    player.add_argument("--catalog", default=None, help="exercise catalog JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return asyncio.run(_run_scenario(args))
    if args.command == "player":
        return asyncio.run(_run_player(args))
    return _run_replay(args)


if __name__ == "__main__":
    sys.exit(main())
