"""
Visibility against pure dephasing
=================================

Dephasing randomises the phase of |m> during the gap between the pulses,
which washes out the cross term between the early and late pairs.  Pass a
worker count as the first argument to spread the sweep over processes.
"""

import sys
import warnings

from qdtimebin.analysis import default_gamma_d_grid, sweep_dephasing

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # fast mode warns about its coarse grid
    sweep = sweep_dephasing(default_gamma_d_grid(), fast="--full" not in sys.argv, workers=workers)

for gd, v in zip(sweep.values, sweep.visibilities):
    print(f"gamma_d = {gd:.3f}  V = {v:.4f}  {'#' * int(100 * v)}")
print("non-increasing:", sweep.is_non_increasing())
sweep.to_csv("dephasing_sweep.csv")
