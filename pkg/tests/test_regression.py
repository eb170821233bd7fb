import math
import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from qdtimebin.model import PulsePair, SystemParams, enumerate_basis
from qdtimebin.propagator import DensityMatrix, Liouvillian, StepperConfig
from qdtimebin.regression import (
    CorrelationGrid,
    CorrelatorEngine,
    G3Request,
    apply_left,
    apply_right,
    four_time_cross,
    g3,
    interferometer_outputs,
    mode_operator,
    ordered_correlator,
    quadrature_weights,
    sandwich,
    two_time_G2,
)

SPACE = enumerate_basis()
NO_PUMP = PulsePair(amp1=0.0, amp2=0.0)
A1, A2 = mode_operator("a1", SPACE), mode_operator("a2", SPACE)


def expm_chain(params, rho0, events):
    """Time-independent oracle: exact exponentials between the operator events."""
    L = Liouvillian.build(params, NO_PUMP, SPACE).static
    x, t_now = rho0.ravel().astype(complex), 0.0
    for t, op, side in sorted(events, key=lambda e: e[0]):
        x = expm(L * (t - t_now)) @ x
        t_now = t
        m = x.reshape(SPACE.dim, SPACE.dim)
        x = (op.matrix @ m if side == "left" else m @ op.dag).ravel()
    return complex(np.trace(x.reshape(SPACE.dim, SPACE.dim)))


FINE = StepperConfig(dt=0.002)


def test_mode_operators():
    assert A1.matrix[SPACE.index("y", 0), SPACE.index("y", 1)] == 1
    assert A2.matrix[SPACE.index("g", 0), SPACE.index("g", 1)] == 1
    assert np.count_nonzero(A1.matrix) == np.count_nonzero(A2.matrix) == 1
    assert np.array_equal(A1.dag, A1.matrix.T)
    with pytest.raises(ValueError):
        mode_operator("a3", SPACE)


def test_operand_helpers(rng):
    rho = DensityMatrix.pure(SPACE, "Y")
    left = apply_left(A1, rho)
    assert not left.hermitian_expected
    assert left.data[SPACE.index("y"), SPACE.index("Y")] == 1
    right = apply_right(rho, A1)
    assert right.data[SPACE.index("Y"), SPACE.index("y")] == 1
    s = sandwich(A1, rho)
    assert s.hermitian_expected and s.trace == 1
    with pytest.raises(ValueError):
        apply_left(np.eye(3), rho)


def test_g2_against_exponential_oracle():
    params = SystemParams()
    rho0 = SPACE.projector("Y")
    t, tau = 0.4, 0.9
    ref = expm_chain(params, rho0, [(t, A1, "left"), (t, A1, "right"), (t + tau, A2, "left"),
                                    (t + tau, A2, "right")])
    got = ordered_correlator([(A1, t), (A2, t + tau)], [(A1, t), (A2, t + tau)], params, NO_PUMP,
                             FINE, SPACE, rho0=rho0)
    assert got == pytest.approx(ref, abs=1e-10)
    assert ref.real > 1e-3


def test_cross_against_exponential_oracle():
    params = SystemParams()
    v = (SPACE.ket("Y") + SPACE.ket("Gp")) / math.sqrt(2)
    rho0 = np.outer(v, v.conj())
    t, tau, T = 1.1, 0.3, 0.7
    events = [(t - T, A1, "left"), (t - T + tau, A2, "left"), (t, A1, "right"), (t + tau, A2, "right")]
    ref = expm_chain(params, rho0, events)
    got = ordered_correlator([(A1, t - T), (A2, t - T + tau)], [(A1, t), (A2, t + tau)], params, NO_PUMP,
                             FINE, SPACE, rho0=rho0)
    assert got == pytest.approx(ref, abs=1e-10)


def test_single_photon_flux_decays_at_kappa():
    params = SystemParams(g1=0, g2=0, gamma1=0, gamma2=0, gamma_d=0)
    for t in (0.0, 0.5, 1.3):
        flux = ordered_correlator([(A1, t)], [(A1, t)], params, NO_PUMP, FINE, SPACE,
                                  rho0=SPACE.projector("Y"))
        assert flux.real == pytest.approx(math.exp(-params.kappa * t), rel=1e-9)


def test_reference_argument_checks(params, pulses):
    with pytest.raises(ValueError):
        two_time_G2(1.0, -0.1, params, pulses)
    with pytest.raises(ValueError):
        four_time_cross(1.0, 0.1, 2.0, params, pulses)
    with pytest.raises(ValueError):
        four_time_cross(3.0, -0.1, 2.0, params, pulses)


def test_cross_at_zero_delay_is_g2(params, pulses):
    t, tau = pulses.center1, 0.7
    assert four_time_cross(t, tau, 0.0, params, pulses) == pytest.approx(two_time_G2(t, tau, params, pulses),
                                                                        abs=1e-14)


def test_engine_matches_reference_chains(params, pulses, engine):
    h, Ti = engine.h, engine.index(14 * math.pi)
    for s, d in ((engine.index(18 * math.pi), 2), (engine.index(17 * math.pi), 5)):
        assert engine.g2([s], [d])[0] == pytest.approx(two_time_G2(s * h, d * h, params, pulses), rel=1e-9)
        assert engine.cross([s], [d], Ti)[0] == pytest.approx(
            four_time_cross(s * h, d * h, Ti * h, params, pulses), rel=1e-9)


def test_engine_negative_delay_is_time_reordered(params, pulses, engine):
    h = engine.h
    s, d = engine.index(5 * math.pi), -3
    ref = ordered_correlator([(A1, s * h), (A2, (s + d) * h)], [(A1, s * h), (A2, (s + d) * h)],
                             params, pulses)
    assert engine.g2([s], [d])[0] == pytest.approx(ref, abs=1e-14)
    # the second photon never precedes the first in this cascade
    assert abs(ref) < 1e-12


def test_engine_without_cache_agrees(params, pulses, engine):
    cold = CorrelatorEngine(params, pulses, cache=False)
    s = np.array([engine.index(4 * math.pi), engine.index(5 * math.pi)])
    d = np.array([1, 4])
    assert np.allclose(cold.g2(s, d), engine.g2(s, d), rtol=0, atol=1e-16)
    assert np.allclose(cold.cross(s + 56, d, 56), engine.cross(s + 56, d, 56), rtol=0, atol=1e-16)


def test_cauchy_schwarz_on_cross_term(engine):
    Ti = engine.index(14 * math.pi)
    s = np.arange(engine.index(14 * math.pi), engine.index(24 * math.pi))
    for d in (1, 4, 10):
        c = engine.cross(s, d, Ti)
        late, early = engine.g2(s, d).real, engine.g2(s - Ti, d).real
        assert np.all(np.abs(c) ** 2 <= late * early * (1 + 1e-9) + 1e-30)


def test_engine_input_checks(engine):
    with pytest.raises(ValueError, match="lattice"):
        engine.index(0.1)
    with pytest.raises(ValueError):
        engine.run_chains(np.array([[3, 2]]), ["a1_sandwich", "a2_sandwich"])
    with pytest.raises(ValueError):
        engine.run_chains(np.array([[3, 4]]), ["a1_sandwich"])
    with pytest.raises(ValueError):
        engine.cross([100], [60], 56)
    with pytest.raises(ValueError):
        CorrelatorEngine(SystemParams(), PulsePair(), StepperConfig(method="adaptive"))


def test_interferometer_expansion_bookkeeping():
    exp = interferometer_outputs(0.3, 14 * math.pi)
    assert exp.n_products == 16
    assert {k: len(v) for k, v in exp.retained.items()} == {"early": 1, "late": 1, "cross": 2}
    assert len(exp.dropped) == 12
    assert exp.weights["cross"] == pytest.approx(2 * math.cos(0.6))
    assert exp.weights["early"] == exp.weights["late"] == 1


@pytest.mark.parametrize("rule, degree", [("trapezoid", 1), ("simpson", 3)])
def test_quadrature_is_exact_for_low_polynomials(rule, degree):
    x = np.linspace(-1.0, 2.0, 13)
    w = quadrature_weights(x, rule)
    for k in range(degree + 1):
        assert w @ x ** k == pytest.approx((2.0 ** (k + 1) - (-1.0) ** (k + 1)) / (k + 1), rel=1e-12)
    with pytest.raises(ValueError):
        quadrature_weights(x, "gauss")
    assert quadrature_weights([1.0], "trapezoid").tolist() == [0.0]


def test_request_validation(pulses):
    with pytest.raises(ValueError):
        G3Request(tau_grid=())
    with pytest.raises(ValueError):
        G3Request(tau_grid=(1.0, 0.5))
    with pytest.raises(ValueError):
        G3Request(tau_grid=(0.0,), T_bin=50.0)
    with pytest.raises(ValueError):
        G3Request(tau_grid=(0.0,), quadrature="boole")
    with pytest.raises(ValueError):
        G3Request(tau_grid=(0.0,), tprime_window=(3.0, 1.0))
    req = G3Request.default(pulses)
    assert req.tau_grid[0] == pytest.approx(-6 * math.pi)
    assert req.tau_grid[-1] == pytest.approx(34 * math.pi)
    assert req.resolved_window(pulses) == (0.0, pytest.approx(10 * math.pi))


def test_assemble_rejects_complex_result():
    with pytest.raises(RuntimeError, match="not real"):
        CorrelationGrid.assemble(np.array([1.0 + 0.1j]), np.array([0.0]), 0.0, 0.0)


def test_g3_brute_force_sum(params, pulses):
    """G3 at one tau against an explicit double sum over reference chains."""
    h, T, T_bin = math.pi, 14 * math.pi, 2 * math.pi
    phi, tau = 0.3, 14 * math.pi
    req = G3Request(tau_grid=(tau,), phi=phi, T=T, T_bin=T_bin, tprime_window=(3 * math.pi, 5 * math.pi),
                    lattice_step=h)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = g3(req, params, pulses).values[0]
    tps = np.array([3, 4, 5]) * h
    taups = np.arange(-2, 3) * h
    w_tp = np.array([0.5, 1, 0.5]) * h * pulses.first(tps) ** 2
    w_taup = np.array([0.5, 1, 1, 1, 0.5]) * h

    def pair(s, d):
        return ordered_correlator([(A1, s), (A2, s + d)], [(A1, s), (A2, s + d)], params, pulses).real

    def cross(s, d):
        return ordered_correlator([(A1, s - T), (A2, s - T + d)], [(A1, s), (A2, s + d)], params, pulses)

    total = 0.0
    for wt, tp in zip(w_tp, tps):
        s = tp + tau
        for wd, d in zip(w_taup, taups):
            total += wt * wd * (pair(s, d) + pair(s - T, d) + 2 * math.cos(2 * phi) * cross(s, d).real)
    assert got == pytest.approx(total, rel=1e-9)


def test_g3_values_are_real_nonnegative_and_three_peaked(g3_full):
    assert np.all(g3_full.values > -1e-12)
    v = g3_full.values
    interior = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    assert interior.sum() == 3


def test_g3_negative_tau_prime_half_vanishes(g3_full):
    assert np.allclose(g3_full.values_half, g3_full.values, rtol=1e-12, atol=1e-15)


def test_phase_reassembly_matches_recomputation(params, pulses, engine):
    base = G3Request.default(pulses, tau_range=(12 * math.pi, 16 * math.pi))
    grid = g3(base, params, pulses, engine=engine)
    again = g3(G3Request.default(pulses, phi=0.7, tau_range=(12 * math.pi, 16 * math.pi)), params, pulses,
               engine=engine)
    assert np.allclose(grid.at_phase(0.7).values, again.values, rtol=0, atol=1e-15)
    for phi in (0.4, 1.1):
        assert np.allclose(grid.at_phase(phi).values, grid.at_phase(-phi).values, atol=1e-15)
        assert np.allclose(grid.at_phase(phi).values, grid.at_phase(phi + math.pi).values, atol=1e-15)


def test_calibrated_phase_offset_makes_phi_zero_constructive(params, pulses, engine):
    req = G3Request.default(pulses, tau_range=(8 * math.pi, 20 * math.pi), phase_offset=None)
    grid = g3(req, params, pulses, engine=engine)
    assert grid.phase_offset != 0.0
    cross = np.trapezoid(np.exp(-1j * grid.phase_offset) * grid.cross, grid.tau)
    assert abs(cross.imag) < 1e-12 and cross.real > 0


def test_engine_step_must_match_request(params, pulses, engine):
    with pytest.raises(ValueError):
        g3(G3Request.default(pulses, fast=True), params, pulses, engine=engine)


def test_coarse_lattice_warns(params, pulses):
    with pytest.warns(UserWarning, match="per tau_p"):
        g3(G3Request.default(pulses, fast=True, tau_range=(0, 1)), params, pulses)


def test_g3_csv(g3_full, tmp_path):
    from qdtimebin.io import read_csv
    g3_full.to_csv(tmp_path / "g.csv", header={"config_hash": "abc"})
    header, names, data = read_csv(tmp_path / "g.csv")
    assert header["config_hash"] == "abc" and "g3.T" in header
    assert names == ["tau", "g3_value", "g3_value_half_range"]
    assert np.array_equal(data[:, 1], g3_full.values)
