"""Multi-time photon correlators by quantum regression, and the triple-coincidence G3.

Mode operators: ``a1 = |y,0><y,1|`` (first, biexciton-exciton photon) and
``a2 = |g,0><g,1|`` (second, exciton-ground photon).

A normally ordered correlator ``<A1^H(s1)...Am^H(sm) Bn(un)...B1(u1)>`` of
output-mode operators is evaluated by sorting all operator times and
stepping the operand through them: annihilators multiply from the left,
creators (the daggered operators) from the right, and the operand is
propagated with the full Liouvillian in between.  Output-field operators at
different times commute, so any such product can be brought into this time
ordered form; this is how the ``tau' < 0`` half of the coincidence window is
handled (the second photon is then detected first).

Before ``t = 0`` the system is frozen in ``|m,0><m,0|``.

Two evaluators exist:

* :func:`ordered_correlator` / :func:`two_time_G2` / :func:`four_time_cross`
  integrate each chain directly in the full Hilbert space.  Slow, used as
  the reference.
* :class:`CorrelatorEngine` evaluates thousands of chains at once on a
  uniform time lattice, restricted to the seven reachable states, with
  checkpointed baseline states and cached per-interval propagators.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

from .io import write_csv
from .model import REACHABLE, HilbertSpace, PulsePair, SystemParams, enumerate_basis
from .propagator import (
    DensityMatrix,
    Liouvillian,
    StepperConfig,
    initial_state,
    left_superop,
    n_steps,
    propagate,
    right_superop,
    rk4_step,
)

log = logging.getLogger(__name__)

MODES = ("a1", "a2")


@dataclass(frozen=True)
class ModeOperator:
    which: str
    matrix: np.ndarray

    @property
    def dag(self) -> np.ndarray:
        return self.matrix.conj().T


def mode_operator(which: str, space: HilbertSpace) -> ModeOperator:
    if which == "a1":
        m = np.outer(space.ket("y", 0), space.ket("y", 1))
    elif which == "a2":
        m = np.outer(space.ket("g", 0), space.ket("g", 1))
    else:
        raise ValueError(f"unknown mode {which!r}; expected one of {MODES}")
    return ModeOperator(which, m.real.astype(complex))


def _as_operand(rho):
    if isinstance(rho, DensityMatrix):
        return rho.data, rho.space
    return np.asarray(rho, dtype=complex), None


def apply_left(op, rho) -> DensityMatrix | np.ndarray:
    """``op @ rho``; the result is a non-Hermitian operand."""
    data, space = _as_operand(rho)
    m = op.matrix if isinstance(op, ModeOperator) else np.asarray(op)
    if m.shape[1] != data.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {data.shape}")
    out = m @ data
    return DensityMatrix(out, space, hermitian_expected=False) if space else out


def apply_right(rho, op_dag) -> DensityMatrix | np.ndarray:
    """``rho @ op_dag`` where ``op_dag`` is already the daggered operator."""
    data, space = _as_operand(rho)
    m = op_dag.dag if isinstance(op_dag, ModeOperator) else np.asarray(op_dag)
    if data.shape[1] != m.shape[0]:
        raise ValueError(f"dimension mismatch: {data.shape} @ {m.shape}")
    out = data @ m
    return DensityMatrix(out, space, hermitian_expected=False) if space else out


def sandwich(op: ModeOperator, rho) -> DensityMatrix | np.ndarray:
    """``op rho op^H``; Hermitian input gives Hermitian output."""
    data, space = _as_operand(rho)
    out = op.matrix @ data @ op.dag
    return DensityMatrix(out, space, hermitian_expected=True) if space else out


# ---------------------------------------------------------------------------
# reference evaluators
# ---------------------------------------------------------------------------

def _chain_events(annihilators, creators):
    events = [(t, 0, i, op, "left") for i, (op, t) in enumerate(annihilators)]
    events += [(t, 1, i, op, "right") for i, (op, t) in enumerate(creators)]
    # stable order at equal times: annihilators by listing order, then creators
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return events


def ordered_correlator(annihilators, creators, params: SystemParams, pulses: PulsePair,
                       stepper: StepperConfig | None = None, space: HilbertSpace | None = None,
                       rho0=None) -> complex:
    """``<prod_k c_k^H(s_k) prod_j a_j(u_j)>`` for ``a_j, c_k`` in ``(ModeOperator, time)`` pairs."""
    stepper = stepper or StepperConfig()
    space = space or enumerate_basis()
    liou = Liouvillian.build(params, pulses, space)
    x = np.asarray(initial_state(space) if rho0 is None else rho0, dtype=complex)
    t_now = 0.0
    for t, _, _, op, side in _chain_events(annihilators, creators):
        if t > t_now:
            x = propagate(liou, x.ravel(), t_now, t, stepper).reshape(x.shape)
            t_now = t
        x = op.matrix @ x if side == "left" else x @ op.dag
    return complex(np.trace(x))


def two_time_G2(t: float, tau: float, params: SystemParams, pulses: PulsePair,
                stepper: StepperConfig | None = None, space: HilbertSpace | None = None) -> float:
    """``<a1^H(t) a2^H(t+tau) a2(t+tau) a1(t)>`` for ``tau >= 0``."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    space = space or enumerate_basis()
    a1, a2 = mode_operator("a1", space), mode_operator("a2", space)
    value = ordered_correlator([(a1, t), (a2, t + tau)], [(a1, t), (a2, t + tau)],
                               params, pulses, stepper, space)
    return value.real


def four_time_cross(t: float, tau: float, T: float, params: SystemParams, pulses: PulsePair,
                    stepper: StepperConfig | None = None, space: HilbertSpace | None = None) -> complex:
    """``<a1^H(t) a2^H(t+tau) a2(t-T+tau) a1(t-T)>``: late pair against early pair."""
    if t - T < 0:
        raise ValueError(f"need t - T >= 0, got t = {t}, T = {T}")
    if tau < 0:
        raise ValueError(f"need tau >= 0, got {tau}")
    if T < 0:
        raise ValueError(f"need T >= 0, got {T}")
    space = space or enumerate_basis()
    a1, a2 = mode_operator("a1", space), mode_operator("a2", space)
    return ordered_correlator([(a1, t - T), (a2, t - T + tau)], [(a1, t), (a2, t + tau)],
                              params, pulses, stepper, space)


# ---------------------------------------------------------------------------
# interferometer bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterferometerExpansion:
    """Expansion of ``<a3^H(t) a4^H(t') a4(t') a3(t)>`` into a1/a2 correlators.

    Products are labelled by the arm delays ``(c3, c4, a4, a3)`` in units of
    ``T`` picked for each of the four operators.
    """

    phi: float
    T: float
    weights: dict
    retained: dict
    dropped: tuple

    @property
    def n_products(self) -> int:
        return sum(len(v) for v in self.retained.values()) + len(self.dropped)


def interferometer_outputs(phi: float, T: float) -> InterferometerExpansion:
    retained = {"early": [], "late": [], "cross": []}
    dropped = []
    for c3 in (0, 1):
        for c4 in (0, 1):
            for n4 in (0, 1):
                for n3 in (0, 1):
                    key = (c3, c4, n4, n3)
                    if c3 != c4 or n3 != n4:
                        # both photons of a pair leave in the same time bin
                        dropped.append(key)
                    elif c3 == n3 == 0:
                        retained["early"].append(key)
                    elif c3 == n3 == 1:
                        retained["late"].append(key)
                    else:
                        retained["cross"].append(key)
    weights = {"early": 1.0, "late": 1.0, "cross": 2.0 * math.cos(2.0 * phi)}
    return InterferometerExpansion(phi, T, weights,
                                   {k: tuple(v) for k, v in retained.items()}, tuple(dropped))


# ---------------------------------------------------------------------------
# lattice engine
# ---------------------------------------------------------------------------

class CorrelatorEngine:
    """Batched regression chains on the lattice ``t_j = j * lattice_step``.

    Every operator time of a chain must be a lattice point.  Propagation
    between lattice points uses ``ceil(lattice_step / dt)`` RK4 substeps, i.e.
    the same rule as :func:`qdtimebin.propagator.propagate`.

    With ``cache=True`` the per-interval propagators and the baseline
    trajectory ``rho(t_j)`` are stored after first use and shared by all
    chains; with ``cache=False`` they are recomputed on every request (used to
    check that caching does not change results).
    """

    # operator codes for run_chains
    OPS = ("a1_left", "a2_left", "a1_right", "a2_right", "a1_sandwich", "a2_sandwich")

    def __init__(self, params: SystemParams, pulses: PulsePair, stepper: StepperConfig | None = None,
                 lattice_step: float | None = None, cache: bool = True):
        self.params = params
        self.pulses = pulses
        self.stepper = stepper or StepperConfig()
        if self.stepper.method != "rk4":
            raise ValueError("the lattice engine uses fixed-step RK4")
        self.h = float(lattice_step or pulses.tau_p / 8)
        self.cache = cache
        space = enumerate_basis(2)
        idx = space.reachable_indices()
        self.liou = Liouvillian.build(params, pulses, space).restrict(idx)
        self.n = len(idx)
        self.D = self.n * self.n
        self.substeps = n_steps(0.0, self.h, self.stepper.dt)
        sub = np.ix_(idx, idx)
        a1 = mode_operator("a1", space).matrix[sub]
        a2 = mode_operator("a2", space).matrix[sub]
        self.superops = np.array([
            left_superop(a1), left_superop(a2),
            right_superop(a1.conj().T), right_superop(a2.conj().T),
            left_superop(a1) @ right_superop(a1.conj().T),
            left_superop(a2) @ right_superop(a2.conj().T),
        ])
        self.trace_vec = np.eye(self.n).ravel()
        rho0 = np.zeros((self.n, self.n), dtype=complex)
        rho0[REACHABLE.index("m"), REACHABLE.index("m")] = 1.0
        self.rho0 = rho0.ravel()
        self._intervals: dict[int, np.ndarray] = {}
        self._baseline: list[np.ndarray] = [self.rho0]

    def time(self, j) -> float:
        return j * self.h

    def index(self, t: float) -> int:
        """Lattice index of ``t``; raises if ``t`` is not a lattice point."""
        j = round(t / self.h)
        if abs(j * self.h - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} is not on the lattice of step {self.h!r}")
        return int(j)

    def _make_interval(self, j: int) -> np.ndarray:
        m = np.eye(self.D, dtype=complex)
        if j < 0:
            return m
        dt = self.h / self.substeps
        t0 = j * self.h
        for i in range(self.substeps):
            m = rk4_step(self.liou, t0 + i * dt, dt, m)
        return m

    def interval(self, j: int) -> np.ndarray:
        """Propagator from ``t_j`` to ``t_{j+1}`` (identity before t = 0)."""
        if not self.cache:
            return self._make_interval(j)
        m = self._intervals.get(j)
        if m is None:
            m = self._intervals[j] = self._make_interval(j)
        return m

    def baseline(self, j: int) -> np.ndarray:
        """Vectorised ``rho(t_j)`` on the reduced space."""
        if j <= 0:
            return self.rho0
        if not self.cache:
            v = self.rho0
            for i in range(j):
                v = self.interval(i) @ v
            return v
        while len(self._baseline) <= j:
            k = len(self._baseline) - 1
            self._baseline.append(self.interval(k) @ self._baseline[k])
        return self._baseline[j]

    def warm_up(self, j_max: int) -> None:
        """Fill the checkpoint store sequentially up to ``t_{j_max}``."""
        if self.cache:
            self.baseline(j_max)

    def run_chains(self, times: np.ndarray, ops) -> np.ndarray:
        """Evaluate a family of chains sharing one operator pattern.

        ``times`` is an integer array ``(n_chains, k)`` of lattice indices,
        non-decreasing along each row; ``ops`` lists the ``k`` operator codes
        applied at those times.  Returns the trace of each final operand.
        """
        times = np.asarray(times, dtype=int)
        if times.ndim != 2 or times.shape[1] != len(ops):
            raise ValueError("times must have shape (n_chains, len(ops))")
        if np.any(np.diff(times, axis=1) < 0):
            raise ValueError("chain times must be non-decreasing")
        codes = [self.OPS.index(op) for op in ops]
        nc, k = times.shape
        if nc == 0:
            return np.zeros(0, dtype=complex)
        first, last = times[:, 0], times[:, -1]
        j_lo, j_hi = int(first.min()), int(last.max())
        self.warm_up(int(first.max()))
        V = np.zeros((self.D, nc), dtype=complex)
        # bucket (chain, position) by time
        order = [np.argsort(times[:, e], kind="stable") for e in range(k)]
        sorted_t = [times[order[e], e] for e in range(k)]
        for j in range(j_lo, j_hi + 1):
            for e in range(k):
                lo, hi = np.searchsorted(sorted_t[e], [j, j + 1])
                if lo == hi:
                    continue
                rows = order[e][lo:hi]
                S = self.superops[codes[e]]
                if e == 0:
                    V[:, rows] = (S @ self.baseline(j))[:, None]
                else:
                    V[:, rows] = S @ V[:, rows]
            active = np.nonzero((first <= j) & (last > j))[0]
            if len(active):
                V[:, active] = self.interval(j) @ V[:, active]
        return self.trace_vec @ V

    # convenience wrappers -------------------------------------------------

    def g2(self, s, d) -> np.ndarray:
        """``<a1^H(s) a2^H(s+d) a2(s+d) a1(s)>`` for lattice index arrays ``s`` and ``d``.

        For ``d < 0`` the second photon is registered first and the chain is
        evaluated in that time order.
        """
        s, d = np.broadcast_arrays(np.asarray(s, int), np.asarray(d, int))
        s, d = s.ravel(), d.ravel()
        out = np.zeros(len(s), dtype=complex)
        pos = d >= 0
        out[pos] = self.run_chains(np.column_stack([s[pos], s[pos] + d[pos]]),
                                   ["a1_sandwich", "a2_sandwich"])
        neg = ~pos
        out[neg] = self.run_chains(np.column_stack([s[neg] + d[neg], s[neg]]),
                                   ["a2_sandwich", "a1_sandwich"])
        return out

    def cross(self, s, d, T: int) -> np.ndarray:
        """``<a1^H(s) a2^H(s+d) a2(s-T+d) a1(s-T)>`` on lattice indices, ``|d| <= T``."""
        s, d = np.broadcast_arrays(np.asarray(s, int), np.asarray(d, int))
        s, d = s.ravel(), d.ravel()
        if np.any(np.abs(d) > T):
            raise ValueError("cross chains need |d| <= T")
        out = np.zeros(len(s), dtype=complex)
        pos = d >= 0
        sp_, dp = s[pos], d[pos]
        out[pos] = self.run_chains(
            np.column_stack([sp_ - T, sp_ - T + dp, sp_, sp_ + dp]),
            ["a1_left", "a2_left", "a1_right", "a2_right"])
        neg = ~pos
        sn, dn = s[neg], d[neg]
        out[neg] = self.run_chains(
            np.column_stack([sn - T + dn, sn - T, sn + dn, sn]),
            ["a2_left", "a1_left", "a2_right", "a1_right"])
        return out


# ---------------------------------------------------------------------------
# triple coincidence
# ---------------------------------------------------------------------------

QUADRATURES = ("trapezoid", "simpson")


def quadrature_weights(x, rule: str = "trapezoid") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return np.zeros(len(x))
    if rule == "trapezoid":
        w = np.zeros(len(x))
        dx = np.diff(x)
        w[:-1] += dx / 2
        w[1:] += dx / 2
        return w
    if rule == "simpson":
        return simpson(np.eye(len(x)), x=x, axis=1)
    raise ValueError(f"quadrature must be one of {QUADRATURES}, got {rule!r}")


@dataclass(frozen=True)
class G3Request:
    """What to compute for G3(tau).

    ``lattice_step`` sets the spacing of the t', tau' and tau grids (all share
    one lattice; default ``tau_p / 8``).  ``tprime_window`` defaults to the
    first pulse centre +- 3 tau_p, clipped at t = 0.  ``phase_offset`` is the
    interferometer phase reference: the default 0 gives the bare
    ``2 cos(2 phi) Re C`` weighting; None calibrates it so that phi = 0 is
    fully constructive for the central peak.
    """

    tau_grid: tuple
    phi: float = 0.0
    T: float = 14 * math.pi
    T_bin: float = 6 * math.pi
    tprime_window: tuple | None = None
    quadrature: str = "trapezoid"
    lattice_step: float | None = None
    phase_offset: float | None = 0.0

    def __post_init__(self):
        grid = tuple(float(t) for t in np.atleast_1d(np.asarray(self.tau_grid, dtype=float)))
        object.__setattr__(self, "tau_grid", grid)
        if not grid:
            raise ValueError("tau_grid is empty")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tau_grid must be strictly increasing")
        if not (0 < self.T_bin < self.T):
            raise ValueError(f"need 0 < T_bin < T, got T_bin = {self.T_bin}, T = {self.T}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}")
        if self.tprime_window is not None:
            lo, hi = self.tprime_window
            if not lo < hi:
                raise ValueError("tprime_window must be (lo, hi) with lo < hi")
            object.__setattr__(self, "tprime_window", (float(lo), float(hi)))

    @classmethod
    def default(cls, pulses: PulsePair, T: float = 14 * math.pi, phi: float = 0.0,
                fast: bool = False, tau_range: tuple | None = None, **kwargs) -> "G3Request":
        """Full-figure request: tau from -T_bin to 2T + T_bin on the lattice."""
        h = kwargs.pop("lattice_step", None) or pulses.tau_p / (4 if fast else 8)
        T_bin = kwargs.pop("T_bin", 3 * pulses.tau_p)
        lo, hi = tau_range if tau_range is not None else (-T_bin, 2 * T + T_bin)
        grid = h * np.arange(math.ceil(lo / h - 1e-9), math.floor(hi / h + 1e-9) + 1)
        return cls(tau_grid=tuple(grid), phi=phi, T=T, T_bin=T_bin, lattice_step=h, **kwargs)

    def with_tau_grid(self, grid) -> "G3Request":
        return replace(self, tau_grid=tuple(grid))

    def resolved_step(self, pulses: PulsePair) -> float:
        return float(self.lattice_step or pulses.tau_p / 8)

    def resolved_window(self, pulses: PulsePair) -> tuple:
        if self.tprime_window is not None:
            return self.tprime_window
        return (max(0.0, pulses.center1 - 3 * pulses.tau_p), pulses.center1 + 3 * pulses.tau_p)

    def header(self) -> dict:
        grid = self.tau_grid
        return {
            "tau_min": grid[0], "tau_max": grid[-1], "tau_points": len(grid),
            "phi": self.phi, "T": self.T, "T_bin": self.T_bin,
            "tprime_window": self.tprime_window, "quadrature": self.quadrature,
            "lattice_step": self.lattice_step, "phase_offset": self.phase_offset,
        }


@dataclass
class CorrelationGrid:
    """G3(tau) and the pieces it is assembled from.

    ``direct`` holds the two same-bin terms, ``cross`` the complex early/late
    interference term (both already integrated over t' and tau').  The
    ``*_half`` arrays use only ``tau' in [0, T_bin]``.
    """

    request: G3Request
    tau: np.ndarray
    values: np.ndarray
    direct: np.ndarray
    cross: np.ndarray
    phase_offset: float
    values_half: np.ndarray = field(default=None)
    direct_half: np.ndarray = field(default=None)
    cross_half: np.ndarray = field(default=None)

    @staticmethod
    def assemble(direct, cross, phi, phase_offset):
        rot = np.exp(-1j * phase_offset) * np.asarray(cross)
        full = np.asarray(direct) + math.cos(2 * phi) * (rot + np.conj(rot))
        scale = max(1.0, float(np.max(np.abs(full)))) if len(full) else 1.0
        if len(full) and np.max(np.abs(full.imag)) > 1e-9 * scale:
            raise RuntimeError(f"G3 not real: max imaginary part {np.max(np.abs(full.imag)):.3g}")
        return full.real

    def at_phase(self, phi: float) -> "CorrelationGrid":
        """Same grid re-assembled for another interferometer phase (no propagation)."""
        req = replace(self.request, phi=phi)
        half = None
        if self.direct_half is not None:
            half = self.assemble(self.direct_half, self.cross_half, phi, self.phase_offset)
        return CorrelationGrid(req, self.tau, self.assemble(self.direct, self.cross, phi, self.phase_offset),
                               self.direct, self.cross, self.phase_offset, half,
                               self.direct_half, self.cross_half)

    def to_csv(self, path, header=None) -> None:
        head = dict(header or {})
        head.update({f"g3.{k}": v for k, v in self.request.header().items()})
        head["g3.phase_offset_applied"] = self.phase_offset
        cols = [self.tau, self.values]
        names = ["tau", "g3_value"]
        if self.values_half is not None:
            names.append("g3_value_half_range")
            cols.append(self.values_half)
        write_csv(path, names, np.column_stack(cols), header=head)


def g3(request: G3Request, params: SystemParams, pulses: PulsePair,
       stepper: StepperConfig | None = None, engine: CorrelatorEngine | None = None,
       progress=None) -> CorrelationGrid:
    """Triple-coincidence correlation G3(tau) (arbitrary units).

    G3(tau) = int dt' |Omega_1(t')|^2 int_{-T_bin}^{T_bin} dtau'
              [ D(t'+tau, tau') + D(t'+tau-T, tau') + 2 cos(2 phi) Re(e^{-i theta} C(t'+tau, tau', T)) ]

    with ``D`` the same-bin pair correlator, ``C`` the early/late cross
    correlator and ``theta`` the request's phase offset.
    """
    stepper = stepper or StepperConfig()
    h = request.resolved_step(pulses)
    if engine is None:
        engine = CorrelatorEngine(params, pulses, stepper, lattice_step=h)
    elif abs(engine.h - h) > 1e-12 * h:
        raise ValueError("engine lattice step differs from the request")
    if pulses.tau_p / h < 8 - 1e-9:
        warnings.warn(f"G3 grid has only {pulses.tau_p / h:.3g} points per tau_p (< 8)", stacklevel=2)

    T = engine.index(request.T)
    Tb = engine.index(request.T_bin)
    taus = np.array([engine.index(t) for t in request.tau_grid])
    lo, hi = request.resolved_window(pulses)
    tp = np.arange(math.ceil(lo / h - 1e-9), math.floor(hi / h + 1e-9) + 1)
    if len(tp) < 2:
        raise ValueError("t' window holds fewer than two lattice points")
    tp_w = quadrature_weights(tp * h, request.quadrature) * pulses.first(tp * h) ** 2

    d = np.arange(-Tb, Tb + 1)
    d_w = quadrature_weights(d * h, request.quadrature)
    d_half = d[d >= 0]
    d_w_half = np.zeros(len(d))
    d_w_half[d >= 0] = quadrature_weights(d_half * h, request.quadrature)

    # tau values needed: requested grid, plus the central window when calibrating the phase
    window = np.arange(T - Tb, T + Tb + 1)
    all_tau = np.union1d(taus, window) if request.phase_offset is None else taus
    s_cross = np.unique((tp[:, None] + all_tau[None, :]).ravel())
    s_direct = np.union1d(s_cross, s_cross - T)
    s_direct = s_direct[s_direct + Tb > 0]  # chains entirely before t = 0 vanish

    engine.warm_up(int(s_direct.max() + Tb))
    if progress:
        progress(f"g3: {len(s_direct) * len(d)} pair chains, {len(s_cross) * len(d)} cross chains")
    S, Dm = np.meshgrid(s_direct, d, indexing="ij")
    pair = engine.g2(S, Dm).reshape(S.shape)
    S, Dm = np.meshgrid(s_cross, d, indexing="ij")
    crs = engine.cross(S, Dm, T).reshape(S.shape)

    def fold(values, s_index, weights):
        inner = values @ weights
        lookup = dict(zip(s_index.tolist(), inner))
        return lambda s: np.array([lookup.get(int(v), 0.0) for v in np.ravel(s)]).reshape(np.shape(s))

    pieces = {}
    for name, w in (("full", d_w), ("half", d_w_half)):
        g = fold(pair, s_direct, w)
        c = fold(crs, s_cross, w)
        sd = tp[:, None] + all_tau[None, :]
        direct = tp_w @ (g(sd) + g(sd - T))
        cross = tp_w @ c(sd)
        pieces[name] = (direct, cross)
    if progress:
        progress(f"g3: {len(taus)} tau points assembled")

    if request.phase_offset is None:
        in_window = np.isin(all_tau, window)
        q = quadrature_weights(all_tau[in_window] * h, request.quadrature)
        ref = q @ pieces["full"][1][in_window]
        offset = float(np.angle(ref)) if abs(ref) > 0 else 0.0
    else:
        offset = float(request.phase_offset)

    keep = np.isin(all_tau, taus)
    direct, cross = pieces["full"][0][keep], pieces["full"][1][keep]
    direct_h, cross_h = pieces["half"][0][keep], pieces["half"][1][keep]
    return CorrelationGrid(
        request=request,
        tau=all_tau[keep] * h,
        values=CorrelationGrid.assemble(direct, cross, request.phi, offset),
        direct=direct,
        cross=cross,
        phase_offset=offset,
        values_half=CorrelationGrid.assemble(direct_h, cross_h, request.phi, offset),
        direct_half=direct_h,
        cross_half=cross_h,
    )
