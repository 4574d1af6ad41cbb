from __future__ import annotations

import math

import numpy as np
import pytest

from mindkit import streamkit as sk


# --- variance -> quality mapping -----------------------------------------

def test_quality_from_variance_anchors():
    assert sk.quality_from_variance(0.0) == 1.0
    assert sk.quality_from_variance(150.0) == 1.0  # criterion boundary
    assert sk.quality_from_variance(300.0) == 0.5
    assert sk.quality_from_variance(600.0) == 0.25
    assert sk.quality_from_variance(75.0) == 1.0  # clamped above


def test_quality_from_variance_monotone_above_threshold():
    grid = np.linspace(150.0, 5000.0, 50)
    qs = [sk.quality_from_variance(v) for v in grid]
    assert all(a >= b for a, b in zip(qs, qs[1:]))
    assert all(0.0 <= q <= 1.0 for q in qs)


def test_quality_custom_threshold():
    assert sk.quality_from_variance(600.0, threshold=300.0) == 0.5


def test_env_quality_anchors():
    assert sk.env_quality_from_log_power(-1.0) == 1.0
    assert sk.env_quality_from_log_power(3.0) == 0.0
    assert sk.env_quality_from_log_power(1.0) == 0.5
    assert sk.env_quality_from_log_power(0.0) == 0.75
    assert sk.env_quality_from_log_power(-5.0) == 1.0  # clamped
    assert sk.env_quality_from_log_power(7.0) == 0.0  # clamped
    assert sk.env_quality_from_log_power(float("-inf")) == 1.0


# --- per-sample adaptive filter -------------------------------------------

def test_ingest_sample_contract_triples():
    # x_f = avg_quality * raw + (1 - avg_quality) * prev_filtered
    tracker = sk.ChannelQualityTracker()
    tracker.prev_filtered = 3.0
    tracker.avg_quality = 1.0
    tracker.ingest_sample(10.0)
    assert tracker.prev_filtered == 10.0

    tracker = sk.ChannelQualityTracker()
    tracker.prev_filtered = 3.0
    tracker.avg_quality = 0.0
    tracker.ingest_sample(10.0)
    assert tracker.prev_filtered == 3.0

    tracker = sk.ChannelQualityTracker()
    tracker.prev_filtered = 4.0
    tracker.avg_quality = 0.5
    tracker.ingest_sample(10.0)
    assert tracker.prev_filtered == 7.0


def test_first_sample_passes_unfiltered():
    tracker = sk.ChannelQualityTracker()
    tracker.ingest_sample(42.5)
    assert tracker.prev_filtered == 42.5
    assert tracker.window_buffer == [42.5]


def test_initial_avg_quality_is_half():
    tracker = sk.ChannelQualityTracker()
    assert tracker.avg_quality == 0.5


def test_nonfinite_samples_rejected_without_state_change():
    tracker = sk.ChannelQualityTracker()
    tracker.ingest_sample(1.0)
    before = (tracker.prev_filtered, list(tracker.window_buffer))
    assert tracker.ingest_sample(float("nan")) is None
    assert tracker.ingest_sample(float("inf")) is None
    assert tracker.rejected_samples == 2
    assert (tracker.prev_filtered, tracker.window_buffer) == before


def test_window_fires_every_128_samples():
    tracker = sk.ChannelQualityTracker()
    fired = [tracker.ingest_sample(0.0) for _ in range(300)]
    hits = [i for i, q in enumerate(fired) if q is not None]
    assert hits == [127, 255]
    assert tracker.windows_evaluated == 2
    assert len(tracker.window_buffer) == 300 - 256


def test_window_quality_from_known_variance():
    # alternating +-a has ddof=1 variance a^2 * n/(n-1); solve for 600
    a = math.sqrt(600.0 * 127.0 / 128.0)
    tracker = sk.ChannelQualityTracker()
    tracker.avg_quality = 1.0  # pass-through filter
    tracker.quality_history = [1.0]
    samples = [a if i % 2 == 0 else -a for i in range(128)]
    tracker.prev_filtered = samples[0]
    qualities = [q for q in (tracker.ingest_sample(x) for x in samples)
                 if q is not None]
    assert len(qualities) == 1
    assert qualities[0] == pytest.approx(0.25, abs=1e-12)
    assert tracker.last_filtered_variance == pytest.approx(600.0, abs=1e-9)


def test_flat_window_scores_perfect():
    tracker = sk.ChannelQualityTracker()
    q = [tracker.ingest_sample(5.0) for _ in range(128)][-1]
    assert q == 1.0
    assert tracker.avg_quality == 1.0


def test_quality_history_ring_holds_four():
    tracker = sk.ChannelQualityTracker()
    rng = np.random.default_rng(0)
    for _ in range(6 * 128):
        tracker.ingest_sample(float(rng.normal(0, 30)))
    assert tracker.windows_evaluated == 6
    assert len(tracker.quality_history) == 4
    assert tracker.avg_quality == pytest.approx(
        float(np.mean(tracker.quality_history)), abs=1e-15)


def test_block_ingest_matches_scalar_ingest():
    rng = np.random.default_rng(11)
    samples = rng.normal(0.0, 25.0, 1000)
    scalar = sk.ChannelQualityTracker()
    qs_scalar = [q for q in (scalar.ingest_sample(float(x)) for x in samples)
                 if q is not None]
    block = sk.ChannelQualityTracker()
    qs_block = []
    pos = 0
    for size in (1, 7, 128, 300, 64, 500):
        qs_block.extend(block.ingest_block(samples[pos:pos + size]))
        pos += size
    assert pos == samples.size
    assert qs_block == pytest.approx(qs_scalar, abs=1e-12)
    assert block.prev_filtered == pytest.approx(scalar.prev_filtered, abs=1e-12)
    assert block.avg_quality == pytest.approx(scalar.avg_quality, abs=1e-12)
    assert block.windows_evaluated == scalar.windows_evaluated


def test_block_ingest_rejects_2d():
    tracker = sk.ChannelQualityTracker()
    with pytest.raises(ValueError):
        tracker.ingest_block(np.zeros((2, 2)))


# --- multi-channel estimator ----------------------------------------------

def test_eeg_frame_needs_four_channels():
    with pytest.raises(ValueError):
        sk.EegFrame(sample_index=0, channels=(1.0, 2.0), sample_rate=256)


def test_estimator_report_timestamps():
    est = sk.QualityEstimator()
    reports = est.ingest_array(np.zeros((256, 4)), start_index=0)
    assert [r.timestamp for r in reports] == [127, 255]
    reports = est.ingest_array(np.zeros((128, 4)), start_index=1000)
    assert [r.timestamp for r in reports] == [1127]
    assert est.last_report is reports[-1]


def test_estimator_shape_validation():
    est = sk.QualityEstimator()
    with pytest.raises(ValueError):
        est.ingest_array(np.zeros((10, 3)))


def test_estimator_frame_path_matches_array_path():
    rng = np.random.default_rng(3)
    block = rng.normal(0, 20, (256, 4))
    by_array = sk.QualityEstimator()
    reports_a = by_array.ingest_array(block)
    by_frame = sk.QualityEstimator()
    reports_f = []
    for i in range(256):
        frame = sk.EegFrame(sample_index=i, channels=tuple(block[i]), sample_rate=256)
        rep = by_frame.ingest_frame(frame)
        if rep is not None:
            reports_f.append(rep)
    assert len(reports_a) == len(reports_f) == 2
    for ra, rf in zip(reports_a, reports_f):
        assert ra.per_channel == pytest.approx(rf.per_channel, abs=1e-12)
        assert ra.timestamp == rf.timestamp


def test_report_min_quality():
    rep = sk.QualityReport(per_channel=(0.9, 0.4, 1.0, 0.7), timestamp=0)
    assert rep.min_quality() == 0.4


# --- fitting gate -----------------------------------------------------------

def test_fitting_gate_examples():
    perfect = sk.QualityReport(per_channel=(1.0, 1.0, 1.0, 1.0), timestamp=0)
    one_low = sk.QualityReport(per_channel=(1.0, 0.9, 1.0, 1.0), timestamp=0)
    late = sk.QualityReport(per_channel=(0.8, 0.76, 0.9, 1.0), timestamp=0)

    d = sk.fitting_gate(60.0, perfect)
    assert d.target == 1.0 and d.met

    d = sk.fitting_gate(60.0, one_low)
    assert d.target == 1.0 and not d.met

    d = sk.fitting_gate(200.0, late)
    assert d.target == 0.75 and d.met


def test_fitting_gate_relaxes_at_exactly_180s():
    report = sk.QualityReport(per_channel=(0.8, 0.8, 0.8, 0.8), timestamp=0)
    assert sk.fitting_gate(179.999, report).target == 1.0
    assert not sk.fitting_gate(179.999, report).met
    assert sk.fitting_gate(180.0, report).target == 0.75
    assert sk.fitting_gate(180.0, report).met
    # never times out entirely
    assert sk.fitting_gate(1e9, report).target == 0.75


def test_fitting_gate_custom_config():
    cfg = sk.FittingGateConfig(initial_target=0.9, relaxed_target=0.5, relax_after_s=10.0)
    report = sk.QualityReport(per_channel=(0.6, 0.6, 0.6, 0.6), timestamp=0)
    assert not sk.fitting_gate(5.0, report, cfg).met
    assert sk.fitting_gate(10.0, report, cfg).met


# --- line-noise detector ----------------------------------------------------

def _sine_window(amp: float, freq: float = 50.0, n: int = 256,
                 fs: int = 256) -> np.ndarray:
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq * t)


def test_line_noise_log_power_anchor():
    # Hann periodogram of a 50 Hz tone: mean 49..51 Hz density = amp^2 / 6,
    # so amp = sqrt(0.6) lands exactly on the -1 log-power anchor.
    p = sk.line_noise_log_power(_sine_window(math.sqrt(0.6)), 256)
    assert p == pytest.approx(-1.0, abs=1e-9)
    assert sk.env_quality_from_log_power(p) == pytest.approx(1.0, abs=1e-9)


def test_line_noise_requires_one_second():
    with pytest.raises(ValueError):
        sk.line_noise_log_power(np.zeros(255), 256)


def test_line_noise_silent_window_is_minus_inf():
    assert sk.line_noise_log_power(np.zeros(256), 256) == float("-inf")


def test_em_quality_amplitude_sweep():
    # env(A) = (3 - log10(A^2 / 6)) / 4, computed independently
    expected = {1.0: 0.9445378125959109, 5.0: 0.5950528104279015,
                20.0: 0.2940228147639203, 60.0: 0.05546218740408899}
    got = []
    for amp, env in expected.items():
        window = np.tile(_sine_window(amp), (4, 1))
        report = sk.em_noise_quality(window, 256)
        assert report.per_channel == pytest.approx((env,) * 4, abs=1e-12)
        got.append(report.per_channel[0])
    assert all(a > b for a, b in zip(got, got[1:]))


def test_em_quality_60hz_band():
    window = np.tile(_sine_window(2.0, freq=60.0), (4, 1))
    at_50 = sk.em_noise_quality(window, 256, line_freq=50.0)
    at_60 = sk.em_noise_quality(window, 256, line_freq=60.0)
    assert at_60.line_freq == 60.0
    assert at_60.per_channel[0] < at_50.per_channel[0]
    assert at_60.per_channel[0] == pytest.approx(
        (3.0 - math.log10(4.0 / 6.0)) / 4.0, abs=1e-12)


def test_em_quality_is_per_channel():
    window = np.vstack([_sine_window(1.0), _sine_window(60.0), np.zeros(256)])
    report = sk.em_noise_quality(window, 256)
    assert len(report.per_channel) == 3
    assert report.per_channel[0] > report.per_channel[1]
    assert report.per_channel[2] == 1.0  # silent channel: no interference
    with pytest.raises(ValueError):
        sk.em_noise_quality(np.zeros((4, 255)), 256)  # needs one full second


# --- steady-state behaviour over streams ------------------------------------

def equilibrium_quality(sigma: float) -> float:
    # fixed point of the feedback loop under stationary white noise: the
    # filter passes variance q^2 sigma^2 / (1 - (1-q)^2), which meets the
    # 150 criterion exactly when q^2 sigma^2 = 150 (2 - q)
    root = (-150.0 + math.sqrt(150.0 ** 2 + 1200.0 * sigma * sigma)) / (2 * sigma * sigma)
    return min(root, 1.0)


def test_steady_state_quality_tracks_noise_level():
    measured = []
    for sigma in (5.0, 15.0, 50.0, 150.0):
        rng = np.random.default_rng(42)
        tracker = sk.ChannelQualityTracker()
        tracker.ingest_block(rng.normal(0.0, sigma, 60 * 256))
        measured.append(tracker.avg_quality)
    assert all(a > b for a, b in zip(measured, measured[1:]))
    assert measured[0] >= 0.99
    for sigma, got in zip((15.0, 50.0, 150.0), measured[1:]):
        assert got == pytest.approx(equilibrium_quality(sigma), abs=0.08)


def test_clean_signal_scores_near_perfect():
    t = np.arange(60 * 256) / 256.0
    tracker = sk.ChannelQualityTracker()
    tracker.ingest_block(10.0 * np.sin(2 * np.pi * 10.0 * t))
    assert tracker.avg_quality >= 0.99
