"""Acceptance criteria, one test per criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
"""
import asyncio
import json
import math
import random
import statistics
import time

import pytest

from rehabloop.affect import EMOTION7_LABELS, reduce
from rehabloop.errors import MalformedJson, ProtocolViolation, SchemaViolation, UnknownType
from rehabloop.fusion import rmssd, sdnn
from rehabloop.ingest import rr_to_ms
from rehabloop.ipm import load_catalog, pcg_sequence
from rehabloop.cam import TherapyPlan
from rehabloop.simkit.closed_loop import run_closed_loop, run_randomized_decisions
from rehabloop.simkit.replay import replay_session
from rehabloop.simkit.scenarios import SCENARIOS
from rehabloop.wire import ConnState, DeviceType, Envelope, MsgType, decode, encode, handshake_step

THETA_F = 0.8
BAND = (0.4, 0.8)
BURN_IN_TICKS = 100
SEEDS = range(1, 21)


def report_line(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" — {detail}" if detail else ""))
    return ok


@pytest.fixture(scope="module")
def regulation_runs():
    """20 coupled closed-loop runs, shared by criteria 4-6."""
    t0 = time.monotonic()
    runs = [run_closed_loop(seed=seed, duration_s=700, skill=5.0) for seed in SEEDS]
    return runs, time.monotonic() - t0


@pytest.fixture(scope="module")
def ramp_session(tmp_path_factory):
    """A recorded fatigue-ramp session, shared by criteria 6 and 10."""
    session_dir = tmp_path_factory.mktemp("accept") / "ramp"
    result = run_closed_loop(
        seed=11, duration_s=300, skill=5.0,
        scenario=SCENARIOS["fatigue-ramp"], record_dir=session_dir,
    )
    return session_dir, result


def test_rr_unit_conversion():
    t0 = time.monotonic()
    exact = rr_to_ms(1024) == 1000.0
    rng = random.Random(99)
    tolerance = 2.0 ** -20
    worst = 0.0
    for _ in range(1000):
        raw = rng.randint(1, 2**20)
        back = rr_to_ms(raw) * 1024 / 1000
        worst = max(worst, abs(back - raw))
    elapsed = time.monotonic() - t0
    ok = exact and worst < tolerance and elapsed < 1.0
    assert report_line(
        "RR unit conversion: 1024 -> 1000.0 ms exact; 1000 round-trips < 2^-20 ms",
        ok,
        f"worst error {worst:.3g} ms, {elapsed:.3f} s",
    )


def test_emotion_reduction_table():
    t0 = time.monotonic()
    expected = {
        "anger": "negative", "disgust": "negative", "fear": "negative",
        "sadness": "negative", "happiness": "positive",
        "surprise": "surprise", "neutral": "neutral",
    }
    table_ok = True
    for i, label in enumerate(EMOTION7_LABELS):
        one_hot = [0.0] * 7
        one_hot[i] = 1.0
        affect = reduce(one_hot)
        table_ok &= affect.dominant == expected[label]
        table_ok &= getattr(affect, expected[label]) == 1.0

    rng = random.Random(4242)
    worst = 0.0
    for _ in range(10_000):
        weights = [rng.random() for _ in range(7)]
        total = sum(weights)
        probs = [w / total for w in weights]
        affect = reduce(probs)
        worst = max(worst, abs(sum(affect.probs) - sum(probs)))
    ok = table_ok and worst < 1e-12
    assert report_line(
        "Emotion reduction: one-hot mapping table + mass conservation (1e-12, 10k points)",
        ok,
        f"worst mass error {worst:.3g}, {time.monotonic() - t0:.2f} s",
    )


def test_hrv_oracle_equivalence():
    t0 = time.monotonic()

    def rmssd_oracle(rr):
        diffs = [b - a for a, b in zip(rr, rr[1:])]
        return math.sqrt(sum(d * d for d in diffs) / len(diffs))

    rng = random.Random(2718)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(2, 1000)
        rr = [rng.uniform(300.0, 2000.0) for _ in range(n)]
        r_impl, r_ref = rmssd(rr), rmssd_oracle(rr)
        s_impl, s_ref = sdnn(rr), statistics.stdev(rr)
        if r_ref:
            worst = max(worst, abs(r_impl - r_ref) / r_ref)
        if s_ref:
            worst = max(worst, abs(s_impl - s_ref) / s_ref)
    elapsed = time.monotonic() - t0
    ok = worst < 1e-9 and elapsed < 5.0
    assert report_line(
        "HRV oracle equivalence: rmssd/sdnn vs brute force, 1000 sequences, 1e-9 rel",
        ok,
        f"worst rel error {worst:.3g}, {elapsed:.2f} s",
    )


def test_safety_dominance():
    t0 = time.monotonic()
    violations = 0
    checked = 0
    for seed in SEEDS:
        records = run_randomized_decisions(seed, 10_000)
        for record in records:
            if record.fatigue >= THETA_F:
                checked += 1
                if record.difficulty_after > record.difficulty_before:
                    violations += 1
    elapsed = time.monotonic() - t0
    ok = violations == 0 and elapsed < 60.0
    assert report_line(
        "Safety dominance: 20 seeds x 10k randomized ticks, zero raises while fatigued",
        ok,
        f"{checked} fatigued ticks, {violations} violations, {elapsed:.1f} s",
    )


def test_closed_loop_regulation(regulation_runs):
    runs, elapsed = regulation_runs
    passing = 0
    fractions = []
    for run in runs:
        frac = run.in_band_fraction(*BAND, BURN_IN_TICKS)
        fractions.append(frac)
        if frac >= 0.70:
            passing += 1
    ok = passing >= 16 and elapsed < 120.0
    assert report_line(
        "Closed-loop regulation: rolling success in [0.4, 0.8] for >= 70% of ticks "
        "on >= 16/20 seeds (skill 5, default rules)",
        ok,
        f"{passing}/20 seeds, mean in-band {sum(fractions)/len(fractions):.2f}, {elapsed:.1f} s",
    )
    # no coupled run may raise difficulty while fatigued either
    assert all(run.safety_violations(THETA_F) == 0 for run in runs)


def test_hysteresis_on_all_simulation_logs(regulation_runs, ramp_session):
    runs, _ = regulation_runs
    _, ramp_result = ramp_session
    min_gap = math.inf
    for run in list(runs) + [ramp_result]:
        times = run.non_safety_change_times()
        for a, b in zip(times, times[1:]):
            min_gap = min(min_gap, b - a)
    ok = min_gap >= 30_000
    assert report_line(
        "Hysteresis: non-safety difficulty changes >= 30 s apart on all simulation logs",
        ok,
        f"min gap {min_gap if min_gap is not math.inf else 'n/a'} ms",
    )


def test_pcg_constraints():
    t0 = time.monotonic()
    catalog = load_catalog()
    categories = ("coordination", "reaction_speed", "memory")
    rng = random.Random(31337)
    generated = 0
    for _ in range(1000):
        quotas = {c: rng.randint(0, 6) for c in categories}
        seed = rng.getrandbits(63)
        plan = TherapyPlan(quotas=quotas)
        try:
            seq = pcg_sequence(plan, catalog, seed)
        except Exception as e:
            from rehabloop.errors import InfeasibleQuota

            assert isinstance(e, InfeasibleQuota)
            continue
        generated += 1
        assert all(a != b for a, b in zip(seq.slots, seq.slots[1:])), "consecutive repeat"
        by_cat = {c: 0 for c in categories}
        for slot in seq.slots:
            by_cat[next(s for s in catalog if s.id == slot).category] += 1
        assert by_cat == quotas, "quota mismatch"
        again = pcg_sequence(plan, catalog, seed)
        assert again == seq, "non-deterministic per seed"
    ok = generated > 0
    assert report_line(
        "PCG constraints: 1000 random (quota, seed) pairs valid + deterministic",
        ok,
        f"{generated} feasible plans checked, {time.monotonic() - t0:.1f} s",
    )


def test_protocol_robustness():
    t0 = time.monotonic()
    rng = random.Random(777)

    def random_envelope():
        kind = rng.choice([MsgType.ECG, MsgType.PPG, MsgType.SKEL_AFFECT,
                           MsgType.HEARTBEAT, MsgType.BYE])
        if kind is MsgType.ECG:
            payload = {"bpm": rng.randint(0, 220),
                       "rr_raw": [rng.randint(1, 4000) for _ in range(rng.randint(0, 5))]}
        elif kind is MsgType.PPG:
            payload = {"bpm": rng.randint(0, 220),
                       "accel": [round(rng.uniform(-16, 16), 4) for _ in range(3)],
                       "confidence": rng.randint(0, 100)}
        elif kind is MsgType.SKEL_AFFECT:
            weights = [rng.random() for _ in range(7)]
            total = sum(weights)
            payload = {"emotion7": [w / total for w in weights], "face_detected": True}
        else:
            payload = {}
        return Envelope(kind, seq=rng.randint(0, 10**6), sent_at=rng.randint(0, 10**12),
                        payload=payload)

    # 10,000 valid envelopes round-trip identically
    round_trips_ok = all(
        decode(encode(e)) == e for e in (random_envelope() for _ in range(10_000))
    )

    # 10,000-case fuzz never crashes the decoder
    fuzz_ok = True
    for _ in range(10_000):
        choice = rng.random()
        if choice < 0.4:
            blob = bytes(rng.randint(0, 255) for _ in range(rng.randint(0, 200)))
        elif choice < 0.7:
            blob = encode(random_envelope())[: rng.randint(0, 60)]
        else:
            text = encode(random_envelope()).decode()
            pos = rng.randint(0, len(text) - 1)
            blob = (text[:pos] + rng.choice('"{}[],:x') + text[pos + 1:]).encode()
        try:
            decode(blob)
        except (MalformedJson, UnknownType, SchemaViolation):
            pass
        except Exception:
            fuzz_ok = False
            break

    # handshake rejects data before HELLO
    try:
        handshake_step(
            ConnState(), Envelope(MsgType.ECG, 0, 0, {"bpm": 60, "rr_raw": []}), now_ms=0
        )
        handshake_ok = False
    except ProtocolViolation:
        handshake_ok = True

    ok = round_trips_ok and fuzz_ok and handshake_ok
    assert report_line(
        "Protocol robustness: 10k fuzz no crash, 10k round-trips, data-before-HELLO rejected",
        ok,
        f"{time.monotonic() - t0:.1f} s",
    )


def test_end_to_end_latency(tmp_path):
    from rehabloop.config import HubConfig
    from rehabloop.hub import Hub
    from rehabloop.simkit.scenarios import Phase, ScenarioScript, generate_stream
    import socket as socket_mod

    script = ScenarioScript("latency", (Phase(12, bpm_mean=70, rmssd_target_ms=40),))

    async def run() -> list[int]:
        config = HubConfig(
            host="127.0.0.1",
            ports={"ecg": 0, "ppg": 0, "game": 0, "affect": 0},
            sessions_root=tmp_path / "sessions",
        )
        hub = Hub(config, session_id="latency")
        await hub.start()
        ports = hub.bound_ports()

        async def open_sensor(port, device):
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            writer.write(encode(Envelope(MsgType.HELLO, 0, 0, {
                "device_type": device, "protocol_version": 1, "capabilities": ["x"]})))
            await writer.drain()
            await reader.readline()
            return writer

        ecg_w = await open_sensor(ports["ecg"], "ECG_CHEST")
        ppg_w = await open_sensor(ports["ppg"], "PPG_WRIST")
        udp = socket_mod.socket(socket_mod.AF_INET, socket_mod.SOCK_DGRAM)

        start = time.monotonic()
        for timed in generate_stream(script):
            due = timed.t_ms / 1000.0
            now = time.monotonic() - start
            if due > now:
                await asyncio.sleep(due - now)
            if timed.port == "ecg":
                ecg_w.write(encode(timed.envelope))
            elif timed.port == "ppg":
                ppg_w.write(encode(timed.envelope))
            else:
                udp.sendto(encode(timed.envelope), ("127.0.0.1", ports["affect"]))
        await asyncio.sleep(0.3)  # let the last frame tick run
        samples = list(hub.pipeline.latency_samples_ms)
        await hub.stop()
        udp.close()
        return samples

    samples = asyncio.run(run())
    assert len(samples) >= 50
    ordered = sorted(samples)
    p95 = ordered[max(0, math.ceil(0.95 * len(ordered)) - 1)]
    ok = p95 <= 200
    assert report_line(
        "End-to-end latency: packet receipt -> fused frame, p95 <= 200 ms at nominal rates",
        ok,
        f"n={len(samples)} p50={ordered[len(ordered)//2]} ms p95={p95} ms",
    )


def test_replay_determinism(ramp_session):
    session_dir, result = ramp_session
    t0 = time.monotonic()
    replayed = replay_session(session_dir)
    recorded = [
        json.loads(line)
        for line in (session_dir / "directives.jsonl").read_text().strip().split("\n")
    ]
    ok = (
        replayed.matches
        and len(recorded) == len(replayed.directives) > 2
        and recorded == replayed.directives
    )
    assert report_line(
        "Replay determinism: fatigue-ramp session replayed at x10 logical speed, "
        "directive sequence hash-equal",
        ok,
        f"{len(recorded)} directives, hash {replayed.replayed_hash[:12]}, "
        f"{time.monotonic() - t0:.2f} s",
    )
