"""
Why the visibility stays low
============================

The early and late pair amplitudes overlap almost perfectly at each detection
time, yet their relative phase drifts during the strong second pulse, which
light-shifts |m>.  Integrating over the detection window averages the drifting
cross term down.
"""

import math

import numpy as np

from qdtimebin.analysis import coherence_profile
from qdtimebin.model import PulsePair, SystemParams

pulses = PulsePair()
for gamma_d in (0.0, 0.01):
    prof = coherence_profile(SystemParams(gamma_d=gamma_d), pulses, T=14 * math.pi)
    w = prof.weight / prof.weight.sum()
    rate = np.gradient(np.unwrap(prof.phase), prof.s)
    print(f"gamma_d = {gamma_d}: weighted coherence {np.sum(w * prof.coherence):.4f}, "
          f"phase rate from {rate.min():.2f} to {rate.max():.2f} per unit time")
    print(f"  |sum of unit phasors| = {abs(np.sum(w * np.exp(1j * prof.phase))):.4f}")

prof = coherence_profile(SystemParams(gamma_d=0.0), pulses, T=14 * math.pi)
print("\n  s/pi   coherence   phase")
for k in range(0, len(prof.s), max(1, len(prof.s) // 16)):
    print(f"{prof.s[k] / math.pi:6.2f}  {prof.coherence[k]:9.4f}  {prof.phase[k]:7.3f}")
