import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdtimebin.analysis import (
    BELL_THRESHOLD,
    SweepResult,
    VisibilityResult,
    coherence_profile,
    cosine_fit,
    default_gamma_d_grid,
    default_phi_grid,
    default_T_grid,
    find_optimal_T,
    integrate_central_peak,
    peak_positions,
    phase_sweep,
    pulse_probabilities,
    sweep_dephasing,
    two_pulse_run,
    visibility,
)
from qdtimebin.model import PulsePair, SystemParams, enumerate_basis
from qdtimebin.propagator import Trajectory

T, TB = 14 * math.pi, 6 * math.pi


def flat_grid(value, lo=T - TB - 1.0, hi=T + TB + 1.0, n=101):
    tau = np.linspace(lo, hi, n)
    return SimpleNamespace(tau=tau, values=np.full(n, float(value)))


def test_central_peak_of_zero_is_zero():
    assert integrate_central_peak(flat_grid(0.0), T, TB) == 0.0


def test_central_peak_of_constant_is_rectangle():
    assert integrate_central_peak(flat_grid(2.5), T, TB) == pytest.approx(2 * 2.5 * TB, rel=1e-12)


def test_central_peak_interpolates_window_edges():
    tau = np.linspace(0, 100, 11)
    grid = SimpleNamespace(tau=tau, values=tau.copy())
    # integral of tau over [33, 57] with exact linear interpolation
    assert integrate_central_peak(grid, 45.0, 12.0) == pytest.approx((57 ** 2 - 33 ** 2) / 2)


def test_central_peak_requires_window_coverage():
    with pytest.raises(ValueError, match="does not cover"):
        integrate_central_peak(flat_grid(1.0, lo=T - 1.0), T, TB)


def test_visibility_trivial_patterns():
    phi = default_phi_grid()
    assert visibility(phi, 1 + np.cos(2 * phi)) == pytest.approx(1.0)
    assert visibility(phi, np.full(len(phi), 3.0)) == 0.0
    with pytest.raises(ValueError, match="degenerate"):
        visibility(phi, np.zeros(len(phi)))
    with pytest.raises(ValueError):
        visibility(phi[:3], np.ones(3))
    with pytest.raises(ValueError, match="span"):
        visibility(np.linspace(0, 1, 5), np.ones(5))


def test_cosine_fit_recovers_coefficients():
    phi = default_phi_grid()
    fit = cosine_fit(phi, 2.0 + 0.5 * np.cos(2 * phi))
    assert (fit.A, fit.B) == (pytest.approx(2.0), pytest.approx(0.5))
    assert fit.visibility == pytest.approx(0.25)
    assert fit.relative_residual < 1e-14


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 10), c=st.floats(-0.99, 0.99), scale=st.floats(1e-6, 1e6))
def test_visibility_is_scale_invariant_and_matches_fit(a, c, scale):
    phi = default_phi_grid()
    p = a * (1 + c * np.cos(2 * phi))
    v = visibility(phi, p)
    assert visibility(phi, scale * p) == pytest.approx(v, abs=1e-12)
    assert abs(v - cosine_fit(phi, p).visibility) < 0.02


def test_visibility_result_invariants():
    phi = default_phi_grid()
    with pytest.raises(ValueError):
        VisibilityResult(phi, np.ones(len(phi)), 1.5, 0.0, T)
    with pytest.raises(ValueError):
        VisibilityResult(phi, -np.ones(len(phi)), 0.5, 0.0, T)
    assert VisibilityResult(phi, np.ones(len(phi)), 0.8, 0.0, T).exceeds_bell
    assert BELL_THRESHOLD == pytest.approx(0.70710678)


def test_sweep_result_checks():
    r = VisibilityResult(default_phi_grid(), np.ones(13), 0.0, 0.0, T)
    with pytest.raises(ValueError):
        SweepResult("gamma_d", np.array([0.0, 0.1]), (r,))
    with pytest.raises(ValueError):
        SweepResult("gamma_d", np.array([0.1, 0.0]), (r, r))


def test_default_grids():
    assert len(default_phi_grid()) == 13 and default_phi_grid()[-1] == pytest.approx(math.pi)
    g = default_gamma_d_grid()
    assert g[0] == 0 and g[-1] == pytest.approx(0.05) and len(g) == 11
    t = default_T_grid()
    assert t[0] == pytest.approx(12 * math.pi) and t[-1] == pytest.approx(16 * math.pi) and len(t) == 9


def test_phase_sweep_interference(params, pulses, engine):
    res = phase_sweep(params, pulses, engine=engine)
    assert res.p_c[0] > res.p_c[3]  # phi = 0 against phi = pi/4
    assert res.p_c[0] > res.p_c[6]  # phi = pi/2 is the minimum
    assert res.fit.relative_residual < 0.03
    assert abs(res.visibility - res.fit.visibility) < 0.02
    # even and pi-periodic
    assert np.allclose(res.p_c, res.p_c[::-1], rtol=1e-12)


@pytest.mark.filterwarnings("ignore:G3 grid has only")
def test_dephasing_sweep_is_ordered_and_serial_equals_parallel(params, pulses):
    values = [0.0, 0.02]
    serial = sweep_dephasing(values, params, pulses, fast=True)
    parallel = sweep_dephasing(values, params, pulses, fast=True, workers=2)
    assert np.array_equal(serial.visibilities, parallel.visibilities)
    assert serial.visibilities[0] > serial.visibilities[1]
    assert serial.is_non_increasing()
    with pytest.raises(ValueError):
        sweep_dephasing([0.02, 0.0], params, pulses)
    with pytest.raises(ValueError):
        sweep_dephasing([-0.01], params, pulses)


def test_optimal_delay_is_below_pump_separation(params, pulses):
    res = find_optimal_T(math.pi * np.array([13.0, 14.0, 15.0]), params, pulses)
    assert res.T_star < pulses.separation
    assert res.T_star == pytest.approx(14 * math.pi)


def test_far_delay_loses_the_interference_and_the_late_pair(params, pulses):
    near = find_optimal_T([14 * math.pi], params, pulses).p_c[0]
    far = find_optimal_T([25 * math.pi], params, pulses).p_c[0]
    # only the early pair through the long arms remains inside the window
    assert far < 0.5 * near


def test_pulse_probabilities_standard_run(run1, pulses):
    p1, p2 = pulse_probabilities(run1, pulses)
    assert p1 == pytest.approx(0.5, abs=0.05)
    assert p1 + p2 <= 1 + 1e-6


def test_pulse_probabilities_zero_pump(params):
    pulses = PulsePair(amp1=0.0, amp2=0.0)
    assert pulse_probabilities(two_pulse_run(params, pulses), pulses) == (0.0, 0.0)


def test_stronger_first_pulse_transfers_more(params, pulses):
    strong = pulses.replace(amp1=2 * pulses.amp1)
    p1, _ = pulse_probabilities(two_pulse_run(params, strong), strong)
    assert p1 > 0.5


def test_missing_plateau_is_reported(pulses):
    t = np.linspace(0, 70, 701)
    traj = Trajectory(t, enumerate_basis(), elements={("m", "m"): np.cos(t).astype(complex)})
    with pytest.raises(ValueError, match="plateau"):
        pulse_probabilities(traj, pulses)


def test_peak_positions(g3_full):
    peaks = peak_positions(g3_full)
    assert len(peaks) == 3
    for peak, target in zip(peaks, (0.0, T, 2 * T)):
        assert abs(peak - target) <= TB / 4


def test_coherence_profile_is_bounded(params, pulses):
    prof = coherence_profile(params.replace(gamma_d=0.0), pulses)
    strong = prof.weight > 0.2 * prof.weight.max()
    assert np.all(prof.coherence <= 1 + 1e-9)
    # pointwise the two pair amplitudes stay almost fully coherent without dephasing
    assert np.min(prof.coherence[strong]) > 0.99


def test_exports(tmp_path):
    from qdtimebin.io import read_csv
    phi = default_phi_grid()
    r = VisibilityResult(phi, 1 + 0.5 * np.cos(2 * phi), 0.5, 0.01, T, cosine_fit(phi, 1 + 0.5 * np.cos(2 * phi)))
    r.to_csv(tmp_path / "p.csv", header={"k": 1})
    header, names, data = read_csv(tmp_path / "p.csv")
    assert names == ["phi", "P_c"] and header["visibility"] == "0.5"
    SweepResult("gamma_d", np.array([0.01]), (r,)).to_csv(tmp_path / "s.csv")
    assert read_csv(tmp_path / "s.csv")[1] == ["gamma_d", "V", "V_fit"]
