"""Generic master-equation propagation.

The Liouvillian is assembled once in vectorised (row-major) form as
``L(t) = L_static + Omega_p(t) * L_pump`` and integrated either with a
fixed-step classical RK4 or an adaptive embedded Runge--Kutta scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .io import write_csv
from .model import (
    HilbertSpace,
    PulsePair,
    SystemParams,
    enumerate_basis,
    hamiltonian_parts,
    lindblad_set,
    pump_envelope,
)

METHODS = ("rk4", "adaptive")


@dataclass(frozen=True)
class StepperConfig:
    """Integrator settings.

    The default ``dt`` is ``tau_p / 200`` for the default pulse width
    ``tau_p = 2 pi``.  ``rel_tol`` and ``abs_tol`` apply to the adaptive
    method only; the observed RK4 order is checked by
    :func:`qdtimebin.validation.convergence_slope`.
    """

    method: str = "rk4"
    dt: float = 2 * math.pi / 200
    rel_tol: float = 1e-8
    abs_tol: float = 1e-9
    record_stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")

    def replace(self, **changes) -> "StepperConfig":
        values = dict(
            method=self.method,
            dt=self.dt,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            record_stride=self.record_stride,
        )
        values.update(changes)
        return StepperConfig(**values)


class IntegrationError(RuntimeError):
    """Adaptive stepping gave up (step size underflow)."""


@dataclass(frozen=True)
class DensityMatrix:
    """A state, or a non-Hermitian regression operand when ``hermitian_expected`` is False."""

    data: np.ndarray
    space: HilbertSpace
    hermitian_expected: bool = True

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"expected shape {(self.space.dim,) * 2}, got {data.shape}")
        object.__setattr__(self, "data", data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.data + self.data.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check(self, trace_tol=1e-9, herm_tol=1e-9, eig_tol=1e-8) -> None:
        """Raise ``ValueError`` if a physical state violates its invariants."""
        if not self.hermitian_expected:
            return
        tr = self.trace
        if abs(tr.imag) > trace_tol or not (-trace_tol <= tr.real <= 1 + trace_tol):
            raise ValueError(f"trace {tr} outside [0, 1]")
        if self.hermiticity_error() > herm_tol:
            raise ValueError(f"not Hermitian: max|rho - rho^H| = {self.hermiticity_error():.3g}")
        if self.min_eigenvalue() < -eig_tol:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3g}")

    @classmethod
    def pure(cls, space: HilbertSpace, level: str, n: int | None = None) -> "DensityMatrix":
        return cls(space.projector(level, n), space)


def initial_state(space: HilbertSpace) -> np.ndarray:
    """``|m,0><m,0|``: metastable exciton, empty cavity."""
    return space.projector("m", 0)


def lindblad_rhs(rho, H, L_set) -> np.ndarray:
    """``-i[H, rho] - 1/2 sum (L^H L rho - 2 L rho L^H + rho L^H L)`` with hbar = 1."""
    rho = np.asarray(rho)
    H = np.asarray(H)
    if rho.shape != H.shape or rho.ndim != 2:
        raise ValueError(f"shape mismatch: rho {rho.shape}, H {H.shape}")
    out = -1j * (H @ rho - rho @ H)
    for L in L_set:
        L = np.asarray(L)
        if L.shape != rho.shape:
            raise ValueError(f"collapse operator shape {L.shape} != {rho.shape}")
        LdL = L.conj().T @ L
        out -= 0.5 * (LdL @ rho - 2 * L @ rho @ L.conj().T + rho @ LdL)
    return out


def superoperator(H, L_set=()) -> np.ndarray:
    """Matrix of the Lindblad generator acting on row-major ``rho.ravel()``."""
    H = np.asarray(H)
    d = H.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for L in L_set:
        L = np.asarray(L)
        LdL = L.conj().T @ L
        out += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return out


def left_superop(A) -> np.ndarray:
    """Matrix of ``X -> A X`` on row-major vectorised ``X``."""
    A = np.asarray(A)
    return np.kron(A, np.eye(A.shape[1]))


def right_superop(B) -> np.ndarray:
    """Matrix of ``X -> X B`` on row-major vectorised ``X``."""
    B = np.asarray(B)
    return np.kron(np.eye(B.shape[0]), B.T)


@dataclass(frozen=True)
class Liouvillian:
    """``L(t) = static + Omega_p(t) * pump`` as dense matrices."""

    static: np.ndarray
    pump: np.ndarray
    pulses: PulsePair
    dim: int

    @classmethod
    def build(cls, params: SystemParams, pulses: PulsePair, space: HilbertSpace) -> "Liouvillian":
        h0, hp = hamiltonian_parts(params, space)
        return cls(
            static=superoperator(h0, lindblad_set(params, space)),
            pump=superoperator(hp),
            pulses=pulses,
            dim=space.dim,
        )

    def at(self, t: float) -> np.ndarray:
        return self.static + pump_envelope(self.pulses, t) * self.pump

    def restrict(self, indices) -> "Liouvillian":
        """Restriction to operators supported on ``indices x indices``.

        Only meaningful when that operator subspace is invariant, which holds
        for the seven states reachable from ``|m,0>``.
        """
        indices = np.asarray(indices)
        pairs = (indices[:, None] * self.dim + indices[None, :]).ravel()
        sel = np.ix_(pairs, pairs)
        return Liouvillian(self.static[sel], self.pump[sel], self.pulses, len(indices))


def rk4_step(liou: Liouvillian, t: float, h: float, y: np.ndarray) -> np.ndarray:
    """One classical RK4 step for ``dy/dt = L(t) y``; ``y`` may hold several columns."""
    la = liou.at(t)
    lb = liou.at(t + 0.5 * h)
    lc = liou.at(t + h)
    k1 = la @ y
    k2 = lb @ (y + 0.5 * h * k1)
    k3 = lb @ (y + 0.5 * h * k2)
    k4 = lc @ (y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_steps(t0: float, t1: float, dt: float) -> int:
    span = t1 - t0
    if span <= 0:
        return 0
    return max(1, math.ceil(span / dt - 1e-9))


def propagate(liou: Liouvillian, y0: np.ndarray, t0: float, t1: float, stepper: StepperConfig,
              record: bool = False):
    """Integrate ``dy/dt = L(t) y`` from ``t0`` to ``t1``.

    Returns the final vector, or ``(times, samples)`` when ``record`` is set
    (samples every ``record_stride`` steps plus both endpoints).
    """
    if t1 < t0:
        raise ValueError(f"t1 = {t1} precedes t0 = {t0}")
    y = np.array(y0, dtype=complex)
    if stepper.method == "adaptive":
        return _propagate_adaptive(liou, y, t0, t1, stepper, record)

    n = n_steps(t0, t1, stepper.dt)
    h = (t1 - t0) / n if n else 0.0
    times, samples = [t0], [y.copy()]
    for i in range(n):
        y = rk4_step(liou, t0 + i * h, h, y)
        if record and ((i + 1) % stepper.record_stride == 0 or i == n - 1):
            times.append(t0 + (i + 1) * h)
            samples.append(y.copy())
    if record:
        return np.array(times), np.array(samples)
    return y


def _propagate_adaptive(liou, y, t0, t1, stepper, record):
    if t1 == t0:
        return (np.array([t0]), y[None].copy()) if record else y
    shape = y.shape
    t_eval = None
    if record:
        n = n_steps(t0, t1, stepper.dt * stepper.record_stride)
        t_eval = np.linspace(t0, t1, n + 1)
    sol = solve_ivp(
        lambda t, v: (liou.at(t) @ v.reshape(shape)).ravel(),
        (t0, t1),
        y.ravel(),
        method="DOP853",
        rtol=stepper.rel_tol,
        atol=stepper.abs_tol,
        t_eval=t_eval,
    )
    if sol.status != 0:
        reached = sol.t[-1] if len(sol.t) else t0
        raise IntegrationError(f"adaptive integration failed at t = {reached:.6g}: {sol.message}")
    if record:
        return sol.t, sol.y.T.reshape((-1,) + shape)
    return sol.y[:, -1].reshape(shape)


@dataclass
class Trajectory:
    """Sampled evolution.  ``states`` is None in element-recording mode."""

    times: np.ndarray
    space: HilbertSpace
    states: np.ndarray | None = None
    elements: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.states is not None and len(self.states) != len(self.times):
            raise ValueError("states and times differ in length")
        for key, series in self.elements.items():
            if len(series) != len(self.times):
                raise ValueError(f"element {key} has the wrong number of samples")

    def element(self, a: str, b: str) -> np.ndarray:
        """Time series of ``<a|rho|b>`` using short state labels (``"m"``, ``"Y"``, ``"Gp"``...)."""
        if (a, b) in self.elements:
            return self.elements[(a, b)]
        if self.states is None:
            raise KeyError(f"element ({a}, {b}) was not recorded")
        return self.states[:, self.space.index(a), self.space.index(b)]

    @property
    def final(self) -> DensityMatrix:
        if self.states is None:
            raise ValueError("final state not available in element-recording mode")
        return DensityMatrix(self.states[-1], self.space)

    def to_csv(self, path, elements=None, header=None) -> None:
        """Write ``time`` plus one column per element; coherences as re/im pairs."""
        if elements is None:
            elements = list(self.elements) or [(s, s) for s in ("m", "u", "Y", "Gp", "y", "G", "g")]
        names, cols = ["time"], [self.times]
        for a, b in elements:
            series = self.element(a, b)
            if a == b:
                names.append(f"rho_{a}{a}")
                cols.append(series.real)
            else:
                names += [f"re_rho_{a}{b}", f"im_rho_{a}{b}"]
                cols += [series.real, series.imag]
        write_csv(path, names, np.column_stack(cols), header=header)


def evolve(rho0, t0: float, t1: float, params: SystemParams, pulses: PulsePair,
           stepper: StepperConfig | None = None, space: HilbertSpace | None = None,
           elements=None) -> Trajectory:
    """Evolve ``rho0`` from ``t0`` to ``t1`` and record the trajectory.

    With ``elements`` (a list of ``(a, b)`` label pairs) only those matrix
    elements are kept, which keeps long runs memory-bounded.
    """
    stepper = stepper or StepperConfig()
    if space is None:
        space = rho0.space if isinstance(rho0, DensityMatrix) else enumerate_basis(
            int(round(math.sqrt(np.asarray(rho0).size))) // 4 - 1)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (space.dim, space.dim):
        raise ValueError(f"rho0 has shape {rho0.shape}, space has dim {space.dim}")
    liou = Liouvillian.build(params, pulses, space)
    times, samples = propagate(liou, rho0.ravel(), t0, t1, stepper, record=True)
    states = samples.reshape(-1, space.dim, space.dim)
    if elements is None:
        return Trajectory(times, space, states=states)
    rec = {(a, b): states[:, space.index(a), space.index(b)].copy() for a, b in elements}
    return Trajectory(times, space, elements=rec)


POPULATION_LABELS = ("m", "u", "g", "Y", "Gp")


def populations(traj: Trajectory) -> dict:
    """Real time series of rho_mm, rho_uu, rho_gg, rho_YY and rho_G'G'."""
    out = {"time": traj.times}
    for lbl in POPULATION_LABELS:
        series = traj.element(lbl, lbl)
        out[lbl] = np.real(series).copy()
    return out


def trajectory_diagnostics(traj: Trajectory) -> dict:
    """Worst trace drift, Hermiticity error and most negative eigenvalue over a run."""
    if traj.states is None:
        raise ValueError("diagnostics need full states")
    states = traj.states
    traces = np.trace(states, axis1=1, axis2=2)
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))), axis=(1, 2))
    eigs = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, 1, 2))))[:, 0]
    return {
        "trace_error": float(np.max(np.abs(traces - 1))),
        "hermiticity_error": float(np.max(herm)),
        "min_eigenvalue": float(np.min(eigs)),
    }
