"""Streaming per-channel signal quality and line-noise estimation.

Raw EEG arrives sample by sample from a 4-channel headband (AF7, AF8,
TP9, TP10 at 256 Hz).  Each channel is smoothed with an adaptive
single-pole filter whose coefficient is the channel's own smoothed
quality: clean channels pass almost unfiltered, noisy channels are
damped until the electrode is re-seated.  Quality itself is derived
from the variance of consecutive 500 ms windows of the filtered
signal against a fixed variance threshold.

A separate, non-adaptive check estimates mains interference from the
log band power around the line frequency of a one-second window and
maps it onto a 0..1 environment score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, periodogram

logger = logging.getLogger(__name__)

SAMPLE_RATE = 256  # headband sampling rate, Hz
N_CHANNELS = 4
CHANNEL_LABELS = ("AF7", "AF8", "TP9", "TP10")

WINDOW_SAMPLES = 128  # 500 ms at 256 Hz; quality is re-evaluated per window
QUALITY_HISTORY = 4  # windows averaged into the smoothed quality
VARIANCE_THRESHOLD_UV2 = 150.0  # filtered-window variance treated as fully clean
VARIANCE_FLOOR_UV2 = 1e-6  # guards the division for near-constant windows
INITIAL_AVG_QUALITY = 0.5

# Line-noise calibration: log10 band power (uV^2) at the line frequency
# mapping linearly onto environment quality, 1.0 at or below the good
# anchor and 0.0 at or above the bad one.
EM_LOG_POWER_GOOD = -1.0
EM_LOG_POWER_BAD = 3.0
EM_BAND_HALF_WIDTH_HZ = 1.0
DEFAULT_LINE_FREQ = 50.0

# Fitting target: start from a perfect-quality requirement and relax it
# after three minutes so a session cannot stall on a hard-to-fit subject.
# There is deliberately no upper bound on the fitting duration.
FITTING_INITIAL_TARGET = 1.0
FITTING_RELAXED_TARGET = 0.75
FITTING_RELAX_AFTER_S = 180.0


def quality_from_variance(variance: float, threshold: float = VARIANCE_THRESHOLD_UV2) -> float:
    """Map a filtered-window variance (uV^2) onto a 0..1 quality score.

    Windows at or below the threshold count as fully clean (1.0); above
    it the score decays as threshold / variance.
    """
    v = max(float(variance), VARIANCE_FLOOR_UV2)
    return min(max(threshold / v, 0.0), 1.0)


def env_quality_from_log_power(log_band_power: float) -> float:
    """Map log10 line-band power onto the 0..1 environment score."""
    span = EM_LOG_POWER_BAD - EM_LOG_POWER_GOOD
    return min(max((EM_LOG_POWER_BAD - log_band_power) / span, 0.0), 1.0)


@dataclass(frozen=True)
class EegFrame:
    """One multiplexed sample: the value of every channel at one instant."""

    sample_index: int
    channels: tuple[float, ...]
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        if len(self.channels) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(self.channels)}")


@dataclass(frozen=True)
class QualityReport:
    """Smoothed per-channel quality, emitted once per completed window."""

    per_channel: tuple[float, ...]
    timestamp: int  # sample index of the last sample in the window

    def min_quality(self) -> float:
        return min(self.per_channel)


@dataclass(frozen=True)
class NoiseReport:
    """Per-channel line-noise environment quality from one 1 s window."""

    per_channel: tuple[float, ...]
    log_band_power: tuple[float, ...]
    line_freq: float


@dataclass(frozen=True)
class FittingGateConfig:
    variance_threshold: float = VARIANCE_THRESHOLD_UV2
    initial_target: float = FITTING_INITIAL_TARGET
    relaxed_target: float = FITTING_RELAXED_TARGET
    relax_after_s: float = FITTING_RELAX_AFTER_S


@dataclass(frozen=True)
class GateDecision:
    target: float
    met: bool


class ChannelQualityTracker:
    """Adaptive filter plus windowed quality estimate for one channel.

    Each incoming sample is blended with the previous filtered value,
    weighted by the current smoothed quality.  When 128 filtered samples
    have accumulated, their sample variance is mapped onto a window
    quality, pushed into a short history, and the smoothed quality is
    recomputed as the history mean.  The raw-window variance is kept as
    a diagnostic so the effect of the feedback filter stays observable.
    """

    def __init__(self, variance_threshold: float = VARIANCE_THRESHOLD_UV2) -> None:
        self.variance_threshold = variance_threshold
        self.prev_filtered: float | None = None
        self.window_buffer: list[float] = []
        self.raw_buffer: list[float] = []
        self.quality_history: list[float] = []
        self.avg_quality = INITIAL_AVG_QUALITY
        self.windows_evaluated = 0
        self.rejected_samples = 0
        self.last_filtered_variance: float | None = None
        self.last_raw_variance: float | None = None

    def ingest_sample(self, raw: float) -> float | None:
        """Filter one raw sample into the window buffer.

        Returns the fresh window quality whenever a window completes,
        otherwise None.  Non-finite samples are rejected without
        touching the filter state; the rejection counter is the
        diagnostic flag.
        """
        if not math.isfinite(raw):
            self.rejected_samples += 1
            return None
        q = self.avg_quality
        if self.prev_filtered is None:
            filtered = float(raw)
        else:
            filtered = q * raw + (1.0 - q) * self.prev_filtered
        self.prev_filtered = filtered
        self.window_buffer.append(filtered)
        self.raw_buffer.append(float(raw))
        return self.evaluate_window()

    def ingest_block(self, raw: np.ndarray) -> list[float]:
        """Vectorized equivalent of calling ingest_sample per element.

        The filter coefficient only changes at window boundaries, so each
        partial window is run through a first-order IIR in one shot.
        Returns the window qualities that completed inside the block.
        """
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 1:
            raise ValueError("ingest_block expects a 1-D sample array")
        finite = np.isfinite(raw)
        if not finite.all():
            self.rejected_samples += int((~finite).sum())
            raw = raw[finite]
        out: list[float] = []
        pos = 0
        while pos < raw.size:
            if self.prev_filtered is None:
                first = float(raw[pos])
                self.prev_filtered = first
                self.window_buffer.append(first)
                self.raw_buffer.append(first)
                pos += 1
                q_done = self.evaluate_window()
                if q_done is not None:
                    out.append(q_done)
                continue
            take = min(WINDOW_SAMPLES - len(self.window_buffer), raw.size - pos)
            chunk = raw[pos:pos + take]
            q = self.avg_quality
            filtered, _ = lfilter([q], [1.0, -(1.0 - q)], chunk,
                                  zi=[(1.0 - q) * self.prev_filtered])
            self.prev_filtered = float(filtered[-1])
            self.window_buffer.extend(filtered.tolist())
            self.raw_buffer.extend(chunk.tolist())
            pos += take
            q_done = self.evaluate_window()
            if q_done is not None:
                out.append(q_done)
        return out

    def evaluate_window(self) -> float | None:
        """Score the current window; fires only once 128 samples are in."""
        if len(self.window_buffer) < WINDOW_SAMPLES:
            return None
        variance = float(np.var(self.window_buffer, ddof=1))
        self.last_filtered_variance = variance
        self.last_raw_variance = float(np.var(self.raw_buffer, ddof=1))
        quality = quality_from_variance(variance, self.variance_threshold)
        self.quality_history.append(quality)
        if len(self.quality_history) > QUALITY_HISTORY:
            self.quality_history.pop(0)
        self.avg_quality = float(np.mean(self.quality_history))
        self.window_buffer.clear()
        self.raw_buffer.clear()
        self.windows_evaluated += 1
        return quality


class QualityEstimator:
    """Bundle of per-channel trackers fed from multiplexed frames."""

    def __init__(self, variance_threshold: float = VARIANCE_THRESHOLD_UV2) -> None:
        self.trackers = [ChannelQualityTracker(variance_threshold) for _ in range(N_CHANNELS)]
        self.last_report: QualityReport | None = None

    def ingest_frame(self, frame: EegFrame) -> QualityReport | None:
        fired = False
        for tracker, value in zip(self.trackers, frame.channels):
            if tracker.ingest_sample(value) is not None:
                fired = True
        if not fired:
            return None
        report = QualityReport(
            per_channel=tuple(t.avg_quality for t in self.trackers),
            timestamp=frame.sample_index,
        )
        self.last_report = report
        return report

    def ingest_array(self, samples: np.ndarray, start_index: int = 0) -> list[QualityReport]:
        """Feed a (n_samples, n_channels) block; returns completed reports."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != len(self.trackers):
            raise ValueError(f"expected shape (n, {len(self.trackers)}), got {samples.shape}")
        reports: list[QualityReport] = []
        pos = 0
        while pos < samples.shape[0]:
            pending = WINDOW_SAMPLES - len(self.trackers[0].window_buffer)
            take = min(pending, samples.shape[0] - pos)
            fired = False
            for ch, tracker in enumerate(self.trackers):
                if tracker.ingest_block(samples[pos:pos + take, ch]):
                    fired = True
            pos += take
            if fired:
                report = QualityReport(
                    per_channel=tuple(t.avg_quality for t in self.trackers),
                    timestamp=start_index + pos - 1,
                )
                self.last_report = report
                reports.append(report)
        return reports


def fitting_gate(elapsed_s: float, report: QualityReport,
                 config: FittingGateConfig | None = None) -> GateDecision:
    """Decide whether the current fit is good enough to start recording.

    The target starts at a perfect-quality requirement and relaxes once
    the subject has spent three minutes adjusting the headband; it never
    times out entirely.
    """
    cfg = config or FittingGateConfig()
    target = cfg.initial_target if elapsed_s < cfg.relax_after_s else cfg.relaxed_target
    met = all(q >= target for q in report.per_channel)
    return GateDecision(target=target, met=met)


def line_noise_log_power(window: np.ndarray, sample_rate: int = SAMPLE_RATE,
                         line_freq: float = DEFAULT_LINE_FREQ) -> float:
    """log10 mean power spectral density in a +/-1 Hz band at line_freq.

    Expects exactly one second of data so the periodogram grid has 1 Hz
    resolution and the band covers three bins.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D window")
    if x.size != sample_rate:
        raise ValueError(f"line-noise check needs exactly {sample_rate} samples "
                         f"(1 s), got {x.size}")
    freqs, psd = periodogram(x, fs=sample_rate, window="hann", scaling="density")
    band = (freqs >= line_freq - EM_BAND_HALF_WIDTH_HZ) & (freqs <= line_freq + EM_BAND_HALF_WIDTH_HZ)
    power = float(np.mean(psd[band]))
    if power <= 0.0:
        return -np.inf
    return float(np.log10(power))


def em_noise_quality(window: np.ndarray, sample_rate: int = SAMPLE_RATE,
                     line_freq: float = DEFAULT_LINE_FREQ) -> NoiseReport:
    """Environment quality per channel from one second of raw data.

    `window` is channel-major, shape (n_channels, sample_rate).  Grids
    with 60 Hz mains are handled by passing line_freq=60.
    """
    data = np.atleast_2d(np.asarray(window, dtype=np.float64))
    log_powers = tuple(line_noise_log_power(ch, sample_rate, line_freq) for ch in data)
    env = tuple(env_quality_from_log_power(p) for p in log_powers)
    return NoiseReport(per_channel=env, log_band_power=log_powers, line_freq=line_freq)
