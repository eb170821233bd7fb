"""
Choosing the interferometer delay
=================================

The pumps are 15 pi apart, yet the central peak at phi = 0 is largest for a
slightly shorter delay.
"""

import math

from qdtimebin.analysis import find_optimal_T

res = find_optimal_T()
for T, p in zip(res.T_values, res.p_c):
    mark = "  <-" if T == res.T_star else ""
    print(f"T = {T / math.pi:5.2f} pi  P_c = {p:.5f}{mark}")
res.to_csv("optimal_t.csv")
