import asyncio
import json
import socket

import pytest

from rehabloop.config import HubConfig
from rehabloop.hub import Hub
from rehabloop.wire import DeviceType, Envelope, MsgType, decode, encode


def hello(device):
    return Envelope(
        MsgType.HELLO, seq=0, sent_at=0,
        payload={"device_type": device, "protocol_version": 1, "capabilities": ["x"]},
    )


async def connect(host, port, device):
    reader, writer = await asyncio.open_connection(host, port)
    writer.write(encode(hello(device)))
    await writer.drain()
    ack = decode((await reader.readline()).rstrip(b"\n"))
    assert ack.msg_type is MsgType.ACK
    return reader, writer


async def with_hub(fn, tmp_path):
    config = HubConfig(
        host="127.0.0.1",
        ports={"ecg": 0, "ppg": 0, "game": 0, "affect": 0},
        sessions_root=tmp_path / "sessions",
    )
    hub = Hub(config, session_id="nettest")
    await hub.start()
    try:
        await fn(hub, hub.bound_ports())
    finally:
        await hub.stop()


class TestTcpPath:
    def test_ecg_ingest(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await connect("127.0.0.1", ports["ecg"], "ECG_CHEST")
            writer.write(encode(Envelope(MsgType.ECG, 1, 1000, {"bpm": 72, "rr_raw": [1024]})))
            await writer.drain()
            await asyncio.sleep(0.3)
            session = hub.pipeline.sessions[DeviceType.ECG_CHEST]
            assert len(session.ring) == 1
            assert session.ring[0].rr_ms == (1000.0,)
            writer.write(encode(Envelope(MsgType.BYE, 2, 1001, {})))
            await writer.drain()
            writer.close()

        asyncio.run(with_hub(scenario, tmp_path))

    def test_data_before_hello_rejected(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await asyncio.open_connection("127.0.0.1", ports["ecg"])
            writer.write(encode(Envelope(MsgType.ECG, 1, 0, {"bpm": 72, "rr_raw": []})))
            await writer.drain()
            data = await reader.read()  # server closes the connection
            assert data == b""
            assert len(hub.pipeline.sessions[DeviceType.ECG_CHEST].ring) == 0

        asyncio.run(with_hub(scenario, tmp_path))

    def test_udp_affect(self, tmp_path):
        async def scenario(hub, ports):
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            payload = {"emotion7": [0, 0, 0, 1.0, 0, 0, 0], "face_detected": True}
            sock.sendto(
                encode(Envelope(MsgType.SKEL_AFFECT, 1, 500, payload)),
                ("127.0.0.1", ports["affect"]),
            )
            sock.sendto(b"not json at all", ("127.0.0.1", ports["affect"]))
            await asyncio.sleep(0.3)
            assert len(hub.pipeline.sessions[DeviceType.MOCAP].ring) == 1
            sock.close()

        asyncio.run(with_hub(scenario, tmp_path))

    def test_game_link_directive_and_report(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await connect("127.0.0.1", ports["game"], "GAME")
            # the hub pushes the current directive to a joining game
            env = decode((await asyncio.wait_for(reader.readline(), 2)).rstrip(b"\n"))
            assert env.msg_type is MsgType.DIRECTIVE
            assert env.payload["difficulty_target"] >= 1
            report = {
                "exercise_id": "alternating_arm_lifts",
                "category": "coordination",
                "success_rate": 0.75,
                "completion_time_s": 20.0,
                "errors": 3,
                "reps_done": 12,
                "ended_at": 1234,
            }
            writer.write(encode(Envelope(MsgType.PERF_REPORT, 1, 1234, report)))
            await writer.drain()
            await asyncio.sleep(0.3)
            assert hub.pipeline.loop.ctx.recent_reports[-1]["success_rate"] == 0.75
            writer.close()

        asyncio.run(with_hub(scenario, tmp_path))

    def test_unexpected_drop_raises_disconnect_alert(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await connect("127.0.0.1", ports["ecg"], "ECG_CHEST")
            writer.close()  # vanish without BYE
            await asyncio.sleep(0.3)
            kinds = [a.kind for a in hub.pipeline.alerts.active]
            assert "DISCONNECT" in kinds

        asyncio.run(with_hub(scenario, tmp_path))

    def test_clean_bye_no_alert(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await connect("127.0.0.1", ports["ecg"], "ECG_CHEST")
            writer.write(encode(Envelope(MsgType.BYE, 1, 0, {})))
            await writer.drain()
            writer.close()
            await asyncio.sleep(0.3)
            assert all(a.kind != "DISCONNECT" for a in hub.pipeline.alerts.active)

        asyncio.run(with_hub(scenario, tmp_path))

    def test_malformed_lines_do_not_kill_connection(self, tmp_path):
        async def scenario(hub, ports):
            reader, writer = await connect("127.0.0.1", ports["ecg"], "ECG_CHEST")
            writer.write(b"this is not json\n")
            writer.write(encode(Envelope(MsgType.ECG, 2, 1000, {"bpm": 70, "rr_raw": [1024]})))
            await writer.drain()
            await asyncio.sleep(0.3)
            assert len(hub.pipeline.sessions[DeviceType.ECG_CHEST].ring) == 1

        asyncio.run(with_hub(scenario, tmp_path))


class TestSessionArtifacts:
    def test_plan_and_rules_snapshotted(self, tmp_path):
        async def scenario(hub, ports):
            session_dir = hub.session_dir
            assert json.loads((session_dir / "plan.json").read_text())["fatigue_threshold"] == 0.8
            assert json.loads((session_dir / "rules.json").read_text())["dwell_s"] == 30.0

        asyncio.run(with_hub(scenario, tmp_path))

    def test_frame_and_decide_loops_run(self, tmp_path):
        async def scenario(hub, ports):
            await asyncio.sleep(1.3)
            assert len(hub.pipeline.extractor._frames) >= 8
            assert hub.pipeline.last_state is not None

        asyncio.run(with_hub(scenario, tmp_path))

    def test_rules_hot_reload(self, tmp_path):
        from rehabloop.cam import RuleConfig

        rules_path = tmp_path / "rules.json"
        RuleConfig().save(rules_path)

        async def scenario():
            config = HubConfig(
                host="127.0.0.1",
                ports={"ecg": 0, "ppg": 0, "game": 0, "affect": 0},
                sessions_root=tmp_path / "sessions",
                rules_path=rules_path,
            )
            hub = Hub(config, session_id="reload")
            await hub.start()
            try:
                assert hub.pipeline.rules.success_high == 0.8
                await asyncio.sleep(0.2)
                updated = RuleConfig(success_high=0.9)
                updated.save(rules_path)
                os_utime_bump(rules_path)
                await asyncio.sleep(1.5)  # decide loop picks it up
                assert hub.pipeline.rules.success_high == 0.9
                assert hub.pipeline.loop.rules.success_high == 0.9
            finally:
                await hub.stop()

        asyncio.run(scenario())


def os_utime_bump(path):
    import os

    st = path.stat()
    os.utime(path, (st.st_atime, st.st_mtime + 2))
