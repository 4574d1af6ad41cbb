"""
Spectral features and task contrast
===================================

Welch band powers and the dominant frequency turn raw channels into the
16-dimensional feature vector the decoder consumes; the R^2 map shows
which features a task pair actually modulates.
"""

import numpy as np

from mindkit import features as feat
from mindkit import simkit as sim

# Calibration: a 20 uV sinusoid carries amp^2/2 = 200 uV^2 of power, and
# the alpha band estimate recovers it.
t = np.arange(30 * 256) / 256.0
x = 20.0 * np.sin(2 * np.pi * 10.0 * t)
est = feat.psd_welch(x, 256)
print(f"20 uV @ 10 Hz: alpha band power {feat.band_power(est, feat.ALPHA_BAND):.1f} uV^2, "
      f"dominant frequency {feat.dominant_frequency(est):.1f} Hz")

# Scaling the signal by c shifts log-band-power by exactly 2*log10(c).
for c in (0.25, 3.0):
    shift = (feat.log_band_power(feat.psd_welch(c * x, 256), feat.ALPHA_BAND)
             - feat.log_band_power(est, feat.ALPHA_BAND))
    print(f"  scale x{c:<5} log-power shift {shift:+.6f} (2*log10(c) = "
          f"{2 * np.log10(c):+.6f})")

# One synthetic trial -> one feature vector (4 channels x 4 features).
profile = sim.strong_profile(seed=5)
trial = sim.gen_trial(profile, "memory", 30.0, seed=1)
vec = feat.extract_trial_features(feat.TrialWindow(
    samples=trial.samples, sample_rate=trial.sample_rate, task="memory",
    label=1, subject="demo", day=1, strategy="positive_memories", trial_index=0))
print("\nfeature vector for one memory trial")
for name, value in zip(feat.FEATURE_NAMES, vec.values):
    print(f"  {name:12s} {value:8.3f}")

# R^2 between features and labels over a balanced set of trials: the
# alpha columns light up because that is what the profile modulates.
vectors = sim.gen_subject_feature_vectors(profile, ("memory", "subtraction"),
                                          20, "demo", seed=9)
matrix = np.stack([v.values for v in vectors])
labels = np.array([float(v.label) for v in vectors])
r2 = feat.r2_map(matrix, labels)
print("\nR^2 map (feature vs task label)")
for name, value in sorted(zip(feat.FEATURE_NAMES, r2), key=lambda p: -p[1]):
    bar = "#" * int(round(40 * value))
    print(f"  {name:12s} {value:.3f} {bar}")
