import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rehabloop.errors import NonPositiveInterval, WrongStream
from rehabloop.ingest import (
    EcgSample,
    PpgSample,
    SensorSession,
    reject_artifacts,
    rr_to_ms,
    sample_from_record,
)
from rehabloop.wire import DeviceType, Envelope, MsgType


class TestRrToMs:
    def test_one_second_unit(self):
        assert rr_to_ms(1024) == 1000.0

    def test_half_scale(self):
        assert rr_to_ms(512) == 500.0

    def test_exact_rational(self):
        assert rr_to_ms(1126) == 1099.609375

    def test_non_positive(self):
        with pytest.raises(NonPositiveInterval):
            rr_to_ms(0)
        with pytest.raises(NonPositiveInterval):
            rr_to_ms(-5)

    @given(st.integers(1, 2**20))
    @settings(max_examples=500, deadline=None)
    def test_exact_inverse(self, raw):
        # raw*125 fits the float mantissa, /128 shifts the exponent: exact.
        assert rr_to_ms(raw) * 1024 / 1000 == raw


class TestRejectArtifacts:
    def test_out_of_range_dropped(self):
        kept, dropped = reject_artifacts([800, 810, 3000, 790])
        assert kept == [800, 810, 790]
        assert dropped == 1

    def test_empty(self):
        assert reject_artifacts([]) == ([], 0)

    def test_jump_rule(self):
        # 1200/800 - 1 = 0.5 > 0.25
        kept, dropped = reject_artifacts([800, 1200])
        assert kept == [800]
        assert dropped == 1

    def test_low_bound(self):
        kept, dropped = reject_artifacts([250, 800])
        assert kept == [800]
        assert dropped == 1

    @given(st.lists(st.floats(100, 3000, allow_nan=False), max_size=50))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, rr):
        kept, _ = reject_artifacts(rr)
        again, dropped = reject_artifacts(kept)
        assert again == kept
        assert dropped == 0


def ecg_session(start=0, **kwargs):
    return SensorSession(DeviceType.ECG_CHEST, start, 1.0, **kwargs)


def ecg_packet(seq=1, bpm=72, rr=(1024, 1024), sent_at=None):
    return Envelope(
        MsgType.ECG,
        seq=seq,
        sent_at=seq * 1000 if sent_at is None else sent_at,
        payload={"bpm": bpm, "rr_raw": list(rr)},
    )


class TestAcceptPacket:
    def test_ecg_converted(self):
        session = ecg_session()
        samples = session.accept_packet(ecg_packet(rr=(1024, 1024)), hub_ts=100)
        assert len(samples) == 1
        assert samples[0].rr_ms == (1000.0, 1000.0)
        assert samples[0].hub_ts == 100

    def test_ppg_passthrough(self):
        session = SensorSession(DeviceType.PPG_WRIST, 0, 1.0)
        env = Envelope(
            MsgType.PPG, seq=1, sent_at=0,
            payload={"bpm": 80, "accel": [0, 0, 1], "confidence": 95},
        )
        sample = session.accept_packet(env, hub_ts=5)[0]
        assert sample.bpm == 80.0
        assert sample.accel == (0.0, 0.0, 1.0)
        assert sample.confidence == 95.0

    def test_wrong_stream(self):
        session = SensorSession(DeviceType.PPG_WRIST, 0, 1.0)
        with pytest.raises(WrongStream):
            session.accept_packet(ecg_packet(), hub_ts=0)

    def test_accel_clamped(self):
        session = SensorSession(DeviceType.PPG_WRIST, 0, 1.0)
        env = Envelope(
            MsgType.PPG, seq=1, sent_at=0,
            payload={"bpm": 80, "accel": [40, -40, 1], "confidence": 50},
        )
        sample = session.accept_packet(env, hub_ts=0)[0]
        assert sample.accel == (16.0, -16.0, 1.0)

    def test_device_ts_regression_dropped(self):
        session = ecg_session()
        assert session.accept_packet(ecg_packet(seq=1, sent_at=60_000), hub_ts=0)
        dropped = session.accept_packet(ecg_packet(seq=2, sent_at=45_000), hub_ts=1)
        assert dropped == []
        assert session.stale_dropped == 1
        # small regressions (< 10 s) are tolerated
        assert session.accept_packet(ecg_packet(seq=3, sent_at=55_000), hub_ts=2)

    def test_ring_capacity_evicts_oldest(self):
        session = ecg_session()
        capacity = session.ring.maxlen
        for i in range(capacity + 10):
            session.accept_packet(ecg_packet(seq=i, sent_at=i), hub_ts=i)
        assert len(session.ring) == capacity
        assert session.ring[0].device_ts == 10  # oldest evicted first

    def test_every_sample_logged_once(self):
        lines = []
        session = ecg_session(log=lines.append)
        for i in range(50):
            session.accept_packet(ecg_packet(seq=i, sent_at=i * 1000), hub_ts=i * 1000)
        assert len(lines) == 50
        assert len({(r["device_ts"], r["hub_ts"]) for r in lines}) == 50

    def test_record_round_trip(self):
        session = ecg_session()
        sample = session.accept_packet(ecg_packet(), hub_ts=42)[0]
        assert sample_from_record(sample.to_record()) == sample


class TestBaseline:
    def test_constant_bpm(self):
        session = ecg_session()
        for second in range(61):
            session.accept_packet(
                ecg_packet(seq=second, bpm=70, sent_at=second * 1000),
                hub_ts=second * 1000,
            )
        assert session.baseline.complete
        assert session.baseline.resting_bpm == 70
        assert session.baseline.calib_duration >= 60

    def test_mean_of_two_values(self):
        session = ecg_session()
        for second in range(61):
            bpm = 60 if second % 2 == 0 else 80
            session.accept_packet(
                ecg_packet(seq=second, bpm=bpm, sent_at=second * 1000),
                hub_ts=second * 1000,
            )
        # 31 samples at 60, 30 at 80 over [0, 60]: mean close to 70
        assert abs(session.baseline.resting_bpm - 70) < 0.5
        assert session.baseline.complete

    def test_frozen_after_completion(self):
        session = ecg_session()
        for second in range(61):
            session.accept_packet(
                ecg_packet(seq=second, bpm=70, sent_at=second * 1000),
                hub_ts=second * 1000,
            )
        before = session.baseline.resting_bpm
        session.accept_packet(ecg_packet(seq=99, bpm=180, sent_at=99_000), hub_ts=99_000)
        assert session.baseline.resting_bpm == before
        assert session.baseline.complete
