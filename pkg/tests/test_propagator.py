import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import qdtimebin.propagator as prop
from qdtimebin.io import read_csv
from qdtimebin.model import PulsePair, SystemParams, enumerate_basis, hamiltonian_parts, lindblad_set
from qdtimebin.propagator import (
    DensityMatrix,
    IntegrationError,
    Liouvillian,
    StepperConfig,
    Trajectory,
    evolve,
    initial_state,
    lindblad_rhs,
    n_steps,
    populations,
    propagate,
    superoperator,
    trajectory_diagnostics,
)

from conftest import random_density

QUIET = dict(g1=0.0, g2=0.0, kappa=0.0, gamma1=0.0, gamma2=0.0, gamma_d=0.0,
             delta_p=0.0, delta1=0.0, delta2=0.0)
NO_PUMP = PulsePair(amp1=0.0, amp2=0.0)
SPACE = enumerate_basis()
FINE = StepperConfig(dt=0.005)


def superposition_mu():
    v = (SPACE.ket("m", 0) + SPACE.ket("u", 0)) / math.sqrt(2)
    return np.outer(v, v.conj())


def test_gaussian_pulse_area_sets_rabi_population():
    # resonant two-level drive: rho_uu = sin^2(area); the run starts 2 tau_p
    # before the pulse centre, so the area is amp tau_p sqrt(pi) (erf(5) + erf(2)) / 2
    tau_p = 2 * math.pi
    amp = (math.pi / 4) / (tau_p * math.sqrt(math.pi))
    pulses = PulsePair(amp1=amp, amp2=0.0)
    area = amp * tau_p * math.sqrt(math.pi) * (math.erf(5) + math.erf(2)) / 2
    traj = evolve(initial_state(SPACE), 0.0, pulses.center1 + 5 * tau_p, SystemParams(**QUIET), pulses)
    assert traj.element("u", "u")[-1].real == pytest.approx(math.sin(area) ** 2, abs=1e-9)


def test_free_precession_phase():
    params = SystemParams(**{**QUIET, "delta_p": -1.5})
    t1 = 7.3
    traj = evolve(superposition_mu(), 0.0, t1, params, NO_PUMP, FINE)
    assert traj.element("u", "m")[-1] == pytest.approx(0.5 * np.exp(1j * params.delta_p * t1), abs=1e-9)


def test_pure_dephasing_decays_um_coherence_at_one_and_a_half_gamma_d():
    gd = 0.2
    params = SystemParams(**{**QUIET, "gamma_d": gd})
    t1 = 5.0
    traj = evolve(superposition_mu(), 0.0, t1, params, NO_PUMP)
    assert abs(traj.element("u", "m")[-1]) == pytest.approx(0.5 * math.exp(-1.5 * gd * t1), rel=1e-9)
    assert traj.element("u", "u")[-1].real == pytest.approx(0.5, abs=1e-12)


def test_cavity_photon_decays_at_kappa():
    params = SystemParams(**{**QUIET, "kappa": 2.5})
    traj = evolve(DensityMatrix.pure(SPACE, "G"), 0.0, 1.0, params, NO_PUMP, FINE)
    assert traj.element("G", "G")[-1].real == pytest.approx(math.exp(-2.5), rel=1e-7)
    assert traj.element("g", "g")[-1].real == pytest.approx(1 - math.exp(-2.5), rel=1e-7)


def test_superoperator_matches_commutator_form(params, pulses, rng):
    h0, hp = hamiltonian_parts(params, SPACE)
    H = h0 + 0.7 * hp
    Ls = lindblad_set(params, SPACE)
    x = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    direct = lindblad_rhs(x, H, Ls)
    vec = superoperator(H, Ls) @ x.ravel()
    assert np.allclose(vec.reshape(12, 12), direct, atol=1e-13)


def test_lindblad_rhs_shape_errors():
    with pytest.raises(ValueError):
        lindblad_rhs(np.eye(3), np.eye(4), [])
    with pytest.raises(ValueError):
        lindblad_rhs(np.eye(3), np.eye(3), [np.eye(2)])


rates = st.floats(min_value=0.0, max_value=3.0, allow_nan=False)
detunings = st.floats(min_value=-4.0, max_value=4.0, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(kappa=rates, gd=rates, g1=rates, dp=detunings, d1=detunings, t=st.floats(0, 70))
def test_generator_is_trace_preserving_and_hermiticity_preserving(kappa, gd, g1, dp, d1, t):
    params = SystemParams(kappa=kappa, gamma_d=gd, g1=g1, delta_p=dp, delta1=d1)
    liou = Liouvillian.build(params, PulsePair(), SPACE)
    L = liou.at(t)
    assert np.max(np.abs(np.eye(12).ravel() @ L)) < 1e-12
    rho = random_density(np.random.default_rng(1), 12)
    d = (L @ rho.ravel()).reshape(12, 12)
    assert np.max(np.abs(d - d.conj().T)) < 1e-12


def test_reachable_operator_subspace_is_invariant(params, pulses):
    liou = Liouvillian.build(params, pulses, SPACE)
    idx = SPACE.reachable_indices()
    inside = np.zeros((12, 12), bool)
    inside[np.ix_(idx, idx)] = True
    L = liou.at(pulses.center1)
    leak = L[np.ix_(~inside.ravel(), inside.ravel())]
    assert np.max(np.abs(leak)) == 0


def test_rk4_and_adaptive_agree(params, pulses):
    liou = Liouvillian.build(params, pulses, SPACE)
    y0 = initial_state(SPACE).ravel()
    t1 = pulses.center1 + pulses.tau_p
    a = propagate(liou, y0, 0.0, t1, StepperConfig())
    b = propagate(liou, y0, 0.0, t1, StepperConfig(method="adaptive", rel_tol=1e-10, abs_tol=1e-12))
    assert np.max(np.abs(a - b)) < 1e-7


def test_adaptive_failure_is_reported_with_time(monkeypatch, params, pulses):
    class Failed:
        status, message = -1, "step size too small"
        t = np.array([0.0, 3.25])

    monkeypatch.setattr(prop, "solve_ivp", lambda *a, **k: Failed())
    liou = Liouvillian.build(params, pulses, SPACE)
    with pytest.raises(IntegrationError, match="t = 3.25"):
        propagate(liou, initial_state(SPACE).ravel(), 0.0, 5.0, StepperConfig(method="adaptive"))


def test_record_stride_keeps_both_endpoints(params, pulses):
    liou = Liouvillian.build(params, pulses, SPACE)
    times, samples = propagate(liou, initial_state(SPACE).ravel(), 0.0, 1.0,
                               StepperConfig(dt=0.1, record_stride=3), record=True)
    assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
    assert len(times) == len(samples) == 5  # 0, 0.3, 0.6, 0.9, 1.0


def test_propagate_rejects_backwards_interval(params, pulses):
    liou = Liouvillian.build(params, pulses, SPACE)
    with pytest.raises(ValueError):
        propagate(liou, initial_state(SPACE).ravel(), 1.0, 0.0, StepperConfig())


def test_n_steps():
    assert n_steps(0.0, 1.0, 0.1) == 10
    assert n_steps(0.0, 1.0, 0.3) == 4
    assert n_steps(1.0, 1.0, 0.1) == 0
    assert n_steps(0.0, 1e-6, 5.0) == 1


def test_stepper_validation():
    for bad in (dict(method="euler"), dict(dt=0), dict(rel_tol=0), dict(record_stride=0)):
        with pytest.raises(ValueError):
            StepperConfig(**bad)
    assert StepperConfig().replace(dt=0.5).dt == 0.5


def test_density_matrix_checks():
    good = DensityMatrix.pure(SPACE, "m")
    good.check()
    assert good.trace == 1
    bad = np.diag([1.5, -0.5] + [0] * 10)
    with pytest.raises(ValueError, match="eigenvalue"):
        DensityMatrix(bad, SPACE).check()
    skew = good.data.copy()
    skew[0, 1] = 0.3
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(skew, SPACE).check()
    DensityMatrix(skew, SPACE, hermitian_expected=False).check()
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(3), SPACE)


def test_run1_invariants(run1):
    diag = trajectory_diagnostics(run1)
    assert diag["trace_error"] < 1e-10
    assert diag["hermiticity_error"] < 1e-12
    assert diag["min_eigenvalue"] > -1e-9


def test_population_series_and_csv_roundtrip(run1, tmp_path):
    pops = populations(run1)
    assert set(pops) == {"time", "m", "u", "g", "Y", "Gp"}
    path = tmp_path / "traj.csv"
    run1.to_csv(path, elements=[("m", "m"), ("u", "m")], header={"note": "x"})
    header, names, data = read_csv(path)
    assert header["note"] == "x"
    assert names == ["time", "rho_mm", "re_rho_um", "im_rho_um"]
    assert np.array_equal(data[:, 1], pops["m"])
    assert np.array_equal(data[:, 3], run1.element("u", "m").imag)


def test_element_recording_mode(params, pulses):
    traj = evolve(initial_state(SPACE), 0.0, 2.0, params, pulses, elements=[("m", "m")])
    assert traj.states is None
    with pytest.raises(KeyError):
        traj.element("u", "u")
    with pytest.raises(ValueError):
        traj.final


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), SPACE)
