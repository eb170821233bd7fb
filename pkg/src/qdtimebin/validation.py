"""Cross-checks between independent evaluation paths, and integrator sanity checks.

Each check returns a :class:`Check`; :func:`run_all` runs the suite used by
``qdtimebin validate``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import two_pulse_run
from .bloch import (
    BLOCH_ELEMENTS,
    SHIFTED_ELEMENTS,
    bloch_rhs_truncated,
    elements_from_matrix,
    evolve_elements,
    matrix_from_elements,
    shifted_rhs,
)
from .model import PulsePair, SystemParams, enumerate_basis
from .propagator import (
    POPULATION_LABELS,
    Liouvillian,
    StepperConfig,
    populations,
    propagate,
    trajectory_diagnostics,
)
from .regression import G3Request, four_time_cross, g3, mode_operator, ordered_correlator, two_time_G2

EQUIVALENCE_TOL = 1e-7
TRACE_TOL = 1e-6
HERMITICITY_TOL = 1e-9
EIGENVALUE_TOL = 1e-7
SLOPE_TARGET, SLOPE_TOL = 4.0, 0.3
PHASE_TOL = 1e-9
CUTOFF_TOL = 1e-7


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3g} vs tolerance {self.tolerance:.3g}{extra}"


# ---------------------------------------------------------------------------
# element paths
# ---------------------------------------------------------------------------

def bloch_run(params: SystemParams, pulses: PulsePair, t_end: float,
              stepper: StepperConfig | None = None):
    """The populations-and-coherences path from ``|m,0>``; returns ``(times, series)``."""
    rho0 = {lbl: 0j for lbl in BLOCH_ELEMENTS}
    rho0["m", "m"] = 1.0 + 0j
    return evolve_elements(bloch_rhs_truncated, rho0, 0.0, t_end, params, pulses, stepper, record=True)


def _bloch_state(params, pulses, t, stepper, space):
    rho0 = {lbl: 0j for lbl in BLOCH_ELEMENTS}
    rho0["m", "m"] = 1.0 + 0j
    if t <= 0:
        return matrix_from_elements(rho0, space)
    return matrix_from_elements(
        evolve_elements(bloch_rhs_truncated, rho0, 0.0, t, params, pulses, stepper), space)


def element_g2(t: float, tau: float, params: SystemParams, pulses: PulsePair,
               stepper: StepperConfig | None = None) -> float:
    """Pair correlator through the element equations alone."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    space = enumerate_basis(2)
    a1, a2 = mode_operator("a1", space), mode_operator("a2", space)
    rho = _bloch_state(params, pulses, t, stepper, space)
    x = a1.matrix @ rho @ a1.dag
    x = evolve_elements(bloch_rhs_truncated, elements_from_matrix(x, space, BLOCH_ELEMENTS),
                        t, t + tau, params, pulses, stepper)
    return float(np.real(x["G", "G"]))


def element_cross(t: float, tau: float, T: float, params: SystemParams, pulses: PulsePair,
                  stepper: StepperConfig | None = None) -> complex:
    """Early/late cross correlator through the shifted element equations.

    The conjugate chain is run (creators at the early times act first), which
    keeps every operand inside the shifted element set; the result is
    conjugated back at the end.
    """
    if tau < 0 or T < 0 or t - T < 0:
        raise ValueError("need tau >= 0, T >= 0 and t >= T")
    space = enumerate_basis(2)
    a1, a2 = mode_operator("a1", space), mode_operator("a2", space)
    events = sorted([(t - T, "a1_dag"), (t - T + tau, "a2_dag"), (t, "a1"), (t + tau, "a2")],
                    key=lambda e: e[0])
    x = _bloch_state(params, pulses, events[0][0], stepper, space)
    t_now = events[0][0]
    for t_ev, kind in events:
        if t_ev > t_now:
            x = matrix_from_elements(
                evolve_elements(shifted_rhs, elements_from_matrix(x, space, SHIFTED_ELEMENTS),
                                t_now, t_ev, params, pulses, stepper), space)
            t_now = t_ev
        if kind == "a1_dag":
            x = x @ a1.dag
        elif kind == "a2_dag":
            x = x @ a2.dag
        elif kind == "a1":
            x = a1.matrix @ x
        else:
            x = a2.matrix @ x
    return complex(np.conj(np.trace(x)))


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_bloch_equivalence(params, pulses, stepper=None, t_end=None) -> Check:
    traj = two_pulse_run(params, pulses, stepper, t_end=t_end)
    times, series = bloch_run(params, pulses, traj.times[-1], stepper)
    if len(times) != len(traj.times):
        raise RuntimeError("element and matrix paths sampled different times")
    err = max(float(np.max(np.abs(series[lbl] - traj.element(*lbl)))) for lbl in BLOCH_ELEMENTS)
    return Check("bloch path vs generic propagation", err < EQUIVALENCE_TOL, err, EQUIVALENCE_TOL,
                 f"{len(BLOCH_ELEMENTS)} elements, {len(times)} samples")


def peak_triples(pulses: PulsePair, T: float) -> list[tuple]:
    """One (t', tau, tau') per G3 peak: near the first pulse, offsets 0, T, 2T."""
    tp = pulses.center1
    tau_prime = pulses.tau_p / 4
    return [(tp, k * T, tau_prime) for k in range(3)]


def check_shifted_equivalence(params, pulses, T, stepper=None) -> Check:
    space = enumerate_basis(2)
    a1, a2 = mode_operator("a1", space), mode_operator("a2", space)
    worst, count = 0.0, 0
    for tp, tau, taup in peak_triples(pulses, T):
        s = tp + tau
        for start in (s, s - T):
            if start < 0:
                continue
            ref = ordered_correlator([(a1, start), (a2, start + taup)], [(a1, start), (a2, start + taup)],
                                     params, pulses, stepper, space).real
            worst = max(worst, abs(element_g2(start, taup, params, pulses, stepper) - ref))
            count += 1
        if s - T >= 0:
            ref = four_time_cross(s, taup, T, params, pulses, stepper, space)
            worst = max(worst, abs(element_cross(s, taup, T, params, pulses, stepper) - ref))
            count += 1
    return Check("shifted element path vs generic regression", worst < EQUIVALENCE_TOL, worst,
                 EQUIVALENCE_TOL, f"{count} correlators at one triple per peak")


def check_state_properties(params, pulses, stepper=None, t_end=None) -> list[Check]:
    diag = trajectory_diagnostics(two_pulse_run(params, pulses, stepper, t_end=t_end))
    return [
        Check("trace preservation", diag["trace_error"] < TRACE_TOL, diag["trace_error"], TRACE_TOL),
        Check("hermiticity", diag["hermiticity_error"] < HERMITICITY_TOL, diag["hermiticity_error"],
              HERMITICITY_TOL),
        Check("positivity", diag["min_eigenvalue"] > -EIGENVALUE_TOL, diag["min_eigenvalue"],
              -EIGENVALUE_TOL, "most negative eigenvalue"),
    ]


def convergence_slope(stepper: StepperConfig | None = None, kappa: float = 2.5,
                      horizon: float = 2.0) -> tuple[float, list]:
    """Observed RK4 order on pure cavity decay of ``|g,1>``.

    ``rho_GG(t) = exp(-kappa t)`` exactly; the error is measured at ``dt``,
    ``dt/2`` and ``dt/4`` and the slope of log(error) against log(dt) returned.
    """
    stepper = stepper or StepperConfig()
    space = enumerate_basis(2)
    params = SystemParams(g1=0, g2=0, kappa=kappa, gamma1=0, gamma2=0, gamma_d=0,
                          delta_p=0, delta1=0, delta2=0)
    liou = Liouvillian.build(params, PulsePair(amp1=0, amp2=0), space)
    i = space.index("G")
    rho0 = np.zeros((space.dim, space.dim), dtype=complex)
    rho0[i, i] = 1.0
    exact = math.exp(-kappa * horizon)
    steps, errors = [], []
    for k in range(3):
        st = stepper.replace(method="rk4", dt=stepper.dt / 2 ** k)
        y = propagate(liou, rho0.ravel(), 0.0, horizon, st).reshape(space.dim, space.dim)
        steps.append(horizon / math.ceil(horizon / st.dt - 1e-9))
        errors.append(max(abs(y[i, i].real - exact), 1e-300))
    slope = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    return slope, errors


def check_convergence(stepper=None, kappa: float = 2.5) -> Check:
    slope, errors = convergence_slope(stepper, kappa)
    ok = abs(slope - SLOPE_TARGET) <= SLOPE_TOL
    return Check("RK4 convergence order", ok, slope, SLOPE_TOL,
                 f"target {SLOPE_TARGET}, errors {', '.join(f'{e:.2e}' for e in errors)}")


def check_cross_reduces_to_g2(params, pulses, stepper=None) -> Check:
    worst = 0.0
    for t, tau in ((pulses.center1, 0.5), (pulses.center2, 1.0)):
        c = four_time_cross(t, tau, 0.0, params, pulses, stepper)
        worst = max(worst, abs(c - two_time_G2(t, tau, params, pulses, stepper)))
    return Check("four_time_cross(T=0) equals two_time_G2", worst < EQUIVALENCE_TOL, worst, EQUIVALENCE_TOL)


def check_phase_symmetry(params, pulses, T, stepper=None, phi: float = 0.3) -> Check:
    T_bin = 3 * pulses.tau_p
    base = G3Request.default(pulses, T=T, fast=True, T_bin=T_bin)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the coarse grid is deliberate here
        values = [g3(G3Request.default(pulses, T=T, phi=f, fast=True, T_bin=T_bin), params, pulses,
                     stepper).values for f in (phi, -phi, phi + math.pi)]
    scale = max(1.0, float(np.max(np.abs(values[0]))))
    err = max(float(np.max(np.abs(values[1] - values[0]))), float(np.max(np.abs(values[2] - values[0])))) / scale
    return Check("G3 symmetry under phi -> -phi and phi -> phi + pi", err < PHASE_TOL, err, PHASE_TOL,
                 f"{len(base.tau_grid)} tau points")


def check_cutoff(params, pulses, stepper=None, t_end=None) -> Check:
    small = populations(two_pulse_run(params, pulses, stepper, max_photons=2, t_end=t_end))
    large = populations(two_pulse_run(params, pulses, stepper, max_photons=3, t_end=t_end))
    err = max(float(np.max(np.abs(small[k] - large[k]))) for k in POPULATION_LABELS)
    return Check("photon cutoff 2 -> 3", err < CUTOFF_TOL, err, CUTOFF_TOL)


def _guarded(name, fn, *args):
    try:
        out = fn(*args)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return [Check(name, False, float("nan"), float("nan"), f"raised {type(exc).__name__}: {exc}")]
    return out if isinstance(out, list) else [out]


def run_all(params: SystemParams, pulses: PulsePair, stepper: StepperConfig | None = None,
            T: float = 14 * math.pi, t_end: float | None = None) -> list[Check]:
    """Every check; a check that raises is reported as failed, not propagated."""
    stepper = stepper or StepperConfig()
    suite = [
        ("bloch path vs generic propagation", check_bloch_equivalence, params, pulses, stepper, t_end),
        ("shifted element path vs generic regression", check_shifted_equivalence, params, pulses, T, stepper),
        ("state properties", check_state_properties, params, pulses, stepper, t_end),
        ("RK4 convergence order", check_convergence, stepper, params.kappa or 2.5),
        ("four_time_cross(T=0) equals two_time_G2", check_cross_reduces_to_g2, params, pulses, stepper),
        ("G3 phase symmetry", check_phase_symmetry, params, pulses, T, stepper),
        ("photon cutoff 2 -> 3", check_cutoff, params, pulses, stepper, t_end),
    ]
    checks = []
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fn, *args in suite:
            checks += _guarded(name, fn, *args)
    return checks
