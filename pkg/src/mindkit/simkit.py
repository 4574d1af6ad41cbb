"""Deterministic synthetic EEG for exercising the pipeline end to end.

A synthetic subject is a small parametric model: pink background noise
(inverse-FFT spectral shaping), an alpha-band sinusoid whose amplitude
is modulated multiplicatively per task on selected channels, a mains
sinusoid, and occasional raised-cosine artifact bursts at ten times
the baseline amplitude.  Everything is driven by numpy Generators
seeded explicitly, so identical seeds reproduce identical microvolts.
"""

from __future__ import annotations

import json
import logging
import time as _time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import features as feat
from .datastore import RecordingDataset
from .decoder import TaskDataset, augment_bias
from .features import FeatureVector, TrialWindow, extract_trial_features, normalize_features
from .streamkit import EegFrame, N_CHANNELS, SAMPLE_RATE

logger = logging.getLogger(__name__)

ARTIFACT_DURATION_S = 0.5
ARTIFACT_GAIN = 10.0  # burst amplitude relative to baseline sigma

LAB_SUBJECTS_MEMORIES = 11
LAB_TRIALS_MEMORIES = 40
LAB_SUBJECTS_IMAGERY = 10
LAB_TRIALS_IMAGERY = 20
LAB_TRIAL_DURATION_S = 30.0

PACING_ACCELERATED = "accelerated"
PACING_REALTIME = "realtime"


class SimulatorError(ValueError):
    pass


@dataclass(frozen=True)
class FittingBehavior:
    """How quickly a simulated subject converges while adjusting the fit."""

    sigma_initial: float = 45.0
    sigma_final: float = 7.0
    time_constant_s: float = 20.0

    def sigma_at(self, elapsed_s: float) -> float:
        decay = np.exp(-elapsed_s / self.time_constant_s)
        return self.sigma_final + (self.sigma_initial - self.sigma_final) * decay


@dataclass(frozen=True)
class SyntheticSubjectProfile:
    """Generative parameters for one synthetic subject."""

    baseline_sigma: float = 12.0  # pink-noise std, uV
    alpha_amp: float = 8.0  # resting alpha amplitude, uV
    alpha_freq: float = 10.0  # Hz
    task_modulation: dict = field(default_factory=dict)  # task -> amplitude multiplier
    alpha_channels: tuple[int, ...] = (0, 1, 2, 3)  # channels carrying the modulation
    line_noise_amp: float = 1.0  # uV
    line_freq: float = 50.0
    artifact_rate_per_min: float = 1.0
    fitting: FittingBehavior = field(default_factory=FittingBehavior)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.baseline_sigma <= 0:
            raise SimulatorError("baseline_sigma must be positive")
        if self.alpha_amp < 0 or self.line_noise_amp < 0:
            raise SimulatorError("amplitudes must be non-negative")
        if not 7.0 <= self.alpha_freq <= 14.0:
            raise SimulatorError("alpha_freq must lie in 7..14 Hz")
        if any(not 0 <= ch < N_CHANNELS for ch in self.alpha_channels):
            raise SimulatorError("alpha_channels outside the channel range")
        for task, mult in self.task_modulation.items():
            if mult < 0:
                raise SimulatorError(f"negative modulation for task {task!r}")

    def multiplier(self, task: str) -> float:
        return float(self.task_modulation.get(task, 1.0))


def save_profile(profile: SyntheticSubjectProfile, path: str | Path) -> None:
    doc = asdict(profile)
    doc["alpha_channels"] = list(profile.alpha_channels)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_profile(path: str | Path) -> SyntheticSubjectProfile:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SimulatorError(f"cannot read profile: {exc}") from exc
    fitting = FittingBehavior(**doc.pop("fitting", {}))
    doc["alpha_channels"] = tuple(doc.get("alpha_channels", (0, 1, 2, 3)))
    try:
        return SyntheticSubjectProfile(fitting=fitting, **doc)
    except TypeError as exc:
        raise SimulatorError(f"malformed profile: {exc}") from exc


# Stock profiles for simulations: modulation depths above/below 1 make the
# two tasks of each strategy separable; 1.0 everywhere removes the signal.
def strong_profile(seed: int = 0) -> SyntheticSubjectProfile:
    return SyntheticSubjectProfile(
        task_modulation={"eyes_open": 0.25, "eyes_closed": 2.2,
                         "memory": 2.0, "subtraction": 0.35, "song": 1.9},
        seed=seed)


def weak_profile(seed: int = 0) -> SyntheticSubjectProfile:
    return SyntheticSubjectProfile(
        task_modulation={"eyes_open": 0.8, "eyes_closed": 1.25,
                         "memory": 1.2, "subtraction": 0.85, "song": 1.15},
        seed=seed)


def zero_profile(seed: int = 0) -> SyntheticSubjectProfile:
    return SyntheticSubjectProfile(task_modulation={}, seed=seed)


STOCK_PROFILES = {"strong": strong_profile, "weak": weak_profile, "zero": zero_profile}


def pink_noise(n_samples: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """1/f-shaped Gaussian noise scaled to the requested std."""
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])  # drop DC entirely
    shaped = np.fft.irfft(spectrum * scale, n_samples)
    std = shaped.std()
    if std == 0:
        raise SimulatorError("degenerate noise draw")
    return shaped * (sigma / std)


def _raised_cosine(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / max(n - 1, 1)))


def gen_noise_block(profile: SyntheticSubjectProfile, duration_s: float,
                    sigma: float, rng: np.random.Generator,
                    sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Background-only block (pink noise + mains), shape (channels, samples)."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    data = np.stack([pink_noise(n, sigma, rng) for _ in range(N_CHANNELS)])
    if profile.line_noise_amp > 0:
        phase = rng.uniform(0, 2 * np.pi)
        data += profile.line_noise_amp * np.sin(2 * np.pi * profile.line_freq * t + phase)
    return data


def gen_trial(profile: SyntheticSubjectProfile, task: str, duration_s: float,
              sample_rate: int = SAMPLE_RATE,
              seed: int | Sequence[int] | None = None) -> TrialWindow:
    """One synthetic trial for `task`, deterministic in (profile, seed)."""
    if duration_s <= 0:
        raise SimulatorError("duration must be positive")
    # a profile with an explicit task vocabulary rejects tasks outside it;
    # an empty table means the profile is task-agnostic on purpose
    if profile.task_modulation and task not in profile.task_modulation:
        raise SimulatorError(f"unknown task {task!r} for this profile")
    rng = np.random.default_rng([profile.seed] + _seed_list(seed))
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    data = np.stack([pink_noise(n, profile.baseline_sigma, rng)
                     for _ in range(N_CHANNELS)])

    alpha_amp = profile.alpha_amp * profile.multiplier(task)
    for ch in range(N_CHANNELS):
        amp = alpha_amp if ch in profile.alpha_channels else profile.alpha_amp
        phase = rng.uniform(0, 2 * np.pi)
        data[ch] += amp * np.sin(2 * np.pi * profile.alpha_freq * t + phase)

    if profile.line_noise_amp > 0:
        phase = rng.uniform(0, 2 * np.pi)
        data += profile.line_noise_amp * np.sin(2 * np.pi * profile.line_freq * t + phase)

    burst_len = int(ARTIFACT_DURATION_S * sample_rate)
    n_bursts = rng.poisson(profile.artifact_rate_per_min * duration_s / 60.0)
    envelope = _raised_cosine(burst_len) * ARTIFACT_GAIN * profile.baseline_sigma
    for _ in range(n_bursts):
        start = int(rng.integers(0, max(n - burst_len, 1)))
        span = min(burst_len, n - start)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        data[:, start:start + span] += sign * envelope[:span]

    return TrialWindow(samples=data, sample_rate=sample_rate, task=task)


def _seed_list(seed: int | Sequence[int] | None) -> list[int]:
    if seed is None:
        return [0]
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


# --- corpora ---------------------------------------------------------------

@dataclass(frozen=True)
class ProfileDistribution:
    """Uniform ranges the per-subject profiles are drawn from."""

    tasks: tuple[str, str] = ("memory", "subtraction")
    baseline_sigma: tuple[float, float] = (9.0, 15.0)
    alpha_amp: tuple[float, float] = (2.0, 3.5)
    alpha_freq: tuple[float, float] = (9.0, 11.0)
    modulation_pos: tuple[float, float] = (1.03, 1.22)  # first task of the pair
    modulation_neg: tuple[float, float] = (0.80, 0.97)  # second task
    line_noise_amp: tuple[float, float] = (0.5, 2.0)
    artifact_rate_per_min: tuple[float, float] = (0.5, 2.0)

    def draw(self, rng: np.random.Generator, seed: int) -> SyntheticSubjectProfile:
        u = lambda lohi: float(rng.uniform(*lohi))
        return SyntheticSubjectProfile(
            baseline_sigma=u(self.baseline_sigma),
            alpha_amp=u(self.alpha_amp),
            alpha_freq=u(self.alpha_freq),
            task_modulation={self.tasks[0]: u(self.modulation_pos),
                             self.tasks[1]: u(self.modulation_neg)},
            line_noise_amp=u(self.line_noise_amp),
            artifact_rate_per_min=u(self.artifact_rate_per_min),
            seed=seed)


def gen_subject_feature_vectors(profile: SyntheticSubjectProfile,
                                tasks: tuple[str, str], n_trials: int,
                                subject: str, seed: int,
                                trial_duration_s: float = LAB_TRIAL_DURATION_S,
                                day: int = 0, strategy: str = "") -> list[FeatureVector]:
    """Balanced, shuffled, featurized trials for one subject (unnormalized)."""
    if n_trials % 2 != 0:
        raise SimulatorError("trial count must split evenly between the two tasks")
    rng = np.random.default_rng([seed, profile.seed])
    order = [tasks[0]] * (n_trials // 2) + [tasks[1]] * (n_trials // 2)
    order = [order[i] for i in rng.permutation(n_trials)]
    vectors: list[FeatureVector] = []
    for idx, task in enumerate(order):
        trial = gen_trial(profile, task, trial_duration_s,
                          seed=[seed, profile.seed, idx])
        label = 1 if task == tasks[0] else -1
        vectors.append(extract_trial_features(TrialWindow(
            samples=trial.samples, sample_rate=trial.sample_rate, task=task,
            label=label, subject=subject, day=day, strategy=strategy,
            trial_index=idx)))
    return vectors


def gen_task_dataset(profile: SyntheticSubjectProfile, tasks: tuple[str, str],
                     n_trials: int, subject: str, seed: int,
                     trial_duration_s: float = LAB_TRIAL_DURATION_S,
                     day: int = 0, strategy: str = "") -> TaskDataset:
    """One subject's trials as a normalized, bias-augmented task dataset."""
    vectors = gen_subject_feature_vectors(profile, tasks, n_trials, subject, seed,
                                          trial_duration_s, day, strategy)
    return tasks_from_feature_vectors(vectors, feat.GROUPING_LAB_SESSION)[0]


def gen_lab_feature_vectors(n_subjects: int, trials_per_subject: int, seed: int,
                            distribution: ProfileDistribution | None = None,
                            strategy: str = "positive_memories") -> list[FeatureVector]:
    """Laboratory-style corpus as raw (unnormalized) feature rows."""
    if n_subjects < 2:
        raise SimulatorError("a corpus needs at least two subjects")
    dist = distribution or ProfileDistribution()
    rng = np.random.default_rng([seed, 101])
    vectors: list[FeatureVector] = []
    for s in range(n_subjects):
        profile = dist.draw(rng, seed=int(rng.integers(2 ** 31)))
        vectors.extend(gen_subject_feature_vectors(
            profile, dist.tasks, trials_per_subject, subject=f"lab{s:02d}",
            seed=seed + s, strategy=strategy))
    return vectors


def gen_lab_corpus(n_subjects: int, trials_per_subject: int, seed: int,
                   distribution: ProfileDistribution | None = None,
                   strategy: str = "positive_memories") -> list[TaskDataset]:
    """Laboratory-style corpus: one balanced task dataset per subject.

    The stock shapes are 11 subjects x 40 trials for the memories
    strategy and 10 subjects x 20 trials for music imagery.
    """
    vectors = gen_lab_feature_vectors(n_subjects, trials_per_subject, seed,
                                      distribution, strategy)
    return tasks_from_feature_vectors(vectors, feat.GROUPING_LAB_SESSION)


def tasks_from_feature_vectors(vectors: Sequence[FeatureVector],
                               grouping: str = feat.GROUPING_LAB_SESSION) -> list[TaskDataset]:
    """Normalize rows and regroup them into per-task datasets."""
    normed = normalize_features(vectors, grouping)
    keys: list[tuple] = []
    groups: dict[tuple, list[FeatureVector]] = {}
    for v in normed:
        key = (v.subject, v.day, v.strategy) if grouping == feat.GROUPING_HOME_DAY \
            else (v.subject, v.strategy)
        if key not in groups:
            keys.append(key)
        groups.setdefault(key, []).append(v)
    out = []
    for key in keys:
        vs = groups[key]
        X = augment_bias(np.stack([v.values for v in vs]))
        y = np.array([v.label for v in vs], dtype=np.float64)
        out.append(TaskDataset(X=X, y=y, subject=vs[0].subject,
                               day=vs[0].day, strategy=vs[0].strategy))
    return out


# --- replay ------------------------------------------------------------------

class StreamHandle:
    """Iterates a recorded dataset as EegFrames, optionally at real time."""

    def __init__(self, dataset: RecordingDataset, pacing: str = PACING_ACCELERATED) -> None:
        if pacing not in (PACING_ACCELERATED, PACING_REALTIME):
            raise SimulatorError(f"unknown pacing {pacing!r}")
        self.dataset = dataset
        self.pacing = pacing
        self.frames_emitted = 0

    def __iter__(self) -> Iterator[EegFrame]:
        period = 1.0 / self.dataset.sample_rate
        for idx in range(self.dataset.n_frames):
            if self.pacing == PACING_REALTIME:
                _time.sleep(period)
            self.frames_emitted += 1
            yield EegFrame(sample_index=idx,
                           channels=tuple(float(v) for v in self.dataset.samples[idx]),
                           sample_rate=self.dataset.sample_rate)


def replay_stream(dataset: RecordingDataset,
                  pacing: str = PACING_ACCELERATED) -> StreamHandle:
    """Feed a stored recording back through streaming consumers."""
    return StreamHandle(dataset, pacing)
