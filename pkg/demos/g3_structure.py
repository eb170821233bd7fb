"""
Triple coincidences behind the interferometer
=============================================

G3(tau) has one peak per pairing of arms.  The central one, at tau = T, is
the only place where early and late pairs can overlap, so that is where the
phase dependence shows up.
"""

import math

import numpy as np

from qdtimebin.analysis import integrate_central_peak, peak_positions
from qdtimebin.model import PulsePair, SystemParams
from qdtimebin.regression import CorrelatorEngine, G3Request, g3

params = SystemParams()
pulses = PulsePair()
T = 14 * math.pi
T_bin = 3 * pulses.tau_p

engine = CorrelatorEngine(params, pulses)
grid = g3(G3Request.default(pulses, T=T, phi=0.0, T_bin=T_bin), params, pulses, engine=engine)
grid.to_csv("g3.csv")

print("peaks at tau/pi =", ", ".join(f"{p / math.pi:.3g}" for p in peak_positions(grid)))
scale = grid.values.max()
for tau, v in zip(grid.tau[::4], grid.values[::4]):
    print(f"{tau / math.pi:7.2f}  {'#' * int(50 * v / scale)}")

# the grid stores the phase-free pieces, so other phases cost nothing
for phi in (0.0, math.pi / 4, math.pi / 2):
    p_c = integrate_central_peak(grid.at_phase(phi), T, T_bin)
    print(f"phi = {phi:.3f}  P_c = {p_c:.5f}")
