"""
Mains interference detection
============================

The environment check rates each channel by its 50 Hz log-band-power:
-1 log-uV^2 scores 100%, 3 log-uV^2 scores 0%, linear in between.
"""

import numpy as np

from mindkit import streamkit as sk

t = np.arange(sk.SAMPLE_RATE) / sk.SAMPLE_RATE  # exactly one second


def one_second_window(amp: float, freq: float = 50.0) -> np.ndarray:
    return np.tile(amp * np.sin(2 * np.pi * freq * t), (4, 1))


# For an integer-bin sinusoid under the Hann periodogram, the mean power
# density over the 49-51 Hz band works out to amp^2 / 6, so an amplitude
# of sqrt(0.6) uV lands exactly on the -1 log-power anchor.
window = one_second_window(np.sqrt(0.6))
report = sk.em_noise_quality(window)
print(f"amp sqrt(0.6) uV -> 50 Hz log-power {sk.line_noise_log_power(window[0]):+.3f}"
      f" -> env quality {report.per_channel[0]:.3f}")

print("\namplitude sweep at 50 Hz")
for amp in (0.5, 1.0, 5.0, 20.0, 60.0):
    rep = sk.em_noise_quality(one_second_window(amp))
    print(f"  {amp:5.1f} uV  ->  {rep.per_channel[0]:.3f}")

# Regions on 60 Hz mains pass the line frequency explicitly.
print("\nsame sweep scored against 60 Hz mains")
for amp in (0.5, 1.0, 5.0, 20.0, 60.0):
    rep = sk.em_noise_quality(one_second_window(amp, freq=60.0), line_freq=60.0)
    print(f"  {amp:5.1f} uV  ->  {rep.per_channel[0]:.3f}")

# A quiet channel has no measurable 50 Hz component at all.
silent = np.zeros((4, sk.SAMPLE_RATE))
print(f"\nsilent window -> env quality {sk.em_noise_quality(silent).per_channel[0]:.3f}")

# Realistic check: pink background noise plus a mains component, as the
# session runs it before every recording.
from mindkit import simkit as sim

profile = sim.SyntheticSubjectProfile(baseline_sigma=10.0, line_noise_amp=4.0, seed=3)
rng = np.random.default_rng(11)
block = sim.gen_noise_block(profile, 1.0, profile.baseline_sigma, rng)
rep = sk.em_noise_quality(block)
print("\npink noise + 4 uV mains, per channel:",
      ", ".join(f"{q:.3f}" for q in rep.per_channel))
